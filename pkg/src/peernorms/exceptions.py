"""Error types shared across the package, mapped to CLI exit codes."""


class PeernormsError(Exception):
    """Base class for all package-specific failures."""


class DataError(PeernormsError):
    """Malformed input files, invalid configuration, or violated data contracts."""


class ConvergenceError(PeernormsError):
    """An iterative routine hit its cap without reaching tolerance."""

    def __init__(self, message, residual=None, certificate=None):
        super().__init__(message)
        self.residual = residual
        self.certificate = certificate


class CertificateError(ConvergenceError):
    """A computation that requires the contraction certificate was run without it."""


class IdentificationError(PeernormsError):
    """The regressor matrix is rank deficient or a restriction is untestable."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report

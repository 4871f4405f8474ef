"""Binary-action network games with action-specific conformity peer effects."""

from .data import Dataset, NetworkBlock, build_dataset, make_block
from .equilibrium import (
    ComparativeStatics,
    EquilibriumProfile,
    comparative_statics_check,
    solve_fixed_point,
    verify_uniqueness,
)
from .estimate import (
    EstimationResult,
    IdentificationReport,
    identification_diagnostics,
    inner_maximize,
    nfxp_estimate,
    npl_estimate,
    npl_variance,
    pseudo_loglik,
)
from .exceptions import (
    CertificateError,
    ConvergenceError,
    DataError,
    IdentificationError,
    PeernormsError,
)
from .graph import (
    InteractionMatrix,
    Network,
    intransitive_start_indicator,
    row_normalize,
    sigma_quadratic_form,
)
from .inference import (
    MarginalEffects,
    TestResult,
    chi_square_survival,
    conformity_wald,
    lr_test,
    marginal_effect_of_norm,
    norm_marginal_effects,
    spillover_wald,
    wald_linear_restriction,
)
from .model import (
    LOGISTIC,
    STANDARD_NORMAL,
    Certificate,
    CovariateBundle,
    LinkFunction,
    ModelFamily,
    Parameters,
    alpha,
    best_response,
    contraction_bound,
    jacobian_wrt_p,
    linear_predictor,
    regressor_matrix,
)
from .montecarlo import MonteCarloConfig, MonteCarloReport, run_montecarlo
from .simulate import (
    EdgeRule,
    SimulationConfig,
    SyntheticDataset,
    generate_dataset,
    generate_networks,
    simulate_outcomes,
)

__version__ = "0.1.0"

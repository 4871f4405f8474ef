"""Replication harness: parameter recovery, coverage, and test calibration.

Each replication draws a fresh dataset from the configured generating
process (with its own pre-split random stream), fits the requested families,
and records estimates, standard errors, and test p-values. Reports are
deterministic for a fixed seed regardless of the worker count.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .exceptions import CertificateError, DataError, PeernormsError
from .estimate import npl_estimate, nfxp_estimate
from .inference import chi_square_survival, conformity_wald, lr_test, spillover_wald
from .model import LOGISTIC, ModelFamily, Parameters, certificate_for
from .simulate import SimulationConfig, generate_dataset

Z_95 = 1.959963984540054  # standard normal 97.5% quantile


@dataclass(frozen=True)
class MonteCarloConfig:
    """What to simulate, what to fit, and which tests to run."""

    dgp: SimulationConfig = field(default_factory=SimulationConfig)
    replications: int = 100
    seed: int = 0
    fit_families: tuple = ("het_conformity",)
    estimators: tuple = ("npl",)
    spec_tests: bool = False
    lr_pair: tuple | None = None  # (restricted_tag, full_tag)
    alpha: float = 0.05
    jobs: int = 1
    outer_tol: float = 1e-6
    max_outer: int = 500


@dataclass
class ParamStats:
    true: float
    mean: float
    bias: float
    mse: float
    sd: float
    mean_se: float
    coverage95: float


@dataclass
class MonteCarloReport:
    replications: int
    failures: int
    seed: int
    parameter_stats: dict
    rejection_rates: dict
    agreement_max: float | None
    agreement_mean: float | None
    records: dict = field(default_factory=dict)

    def to_records(self) -> list:
        rows = [
            ("replications", str(self.replications)),
            ("failures", str(self.failures)),
            ("seed", str(self.seed)),
        ]
        for name in sorted(self.parameter_stats):
            st = self.parameter_stats[name]
            rows += [
                (f"true:{name}", repr(st.true)),
                (f"mean:{name}", repr(st.mean)),
                (f"bias:{name}", repr(st.bias)),
                (f"mse:{name}", repr(st.mse)),
                (f"sd:{name}", repr(st.sd)),
                (f"mean_se:{name}", repr(st.mean_se)),
                (f"coverage95:{name}", repr(st.coverage95)),
            ]
        for name in sorted(self.rejection_rates):
            rows.append((f"reject:{name}", repr(self.rejection_rates[name])))
        if self.agreement_max is not None:
            rows.append(("agreement_max", repr(self.agreement_max)))
            rows.append(("agreement_mean", repr(self.agreement_mean)))
        return rows


def _dgp_certificate(config: MonteCarloConfig):
    dgp = config.dgp
    prototype = Parameters(
        gamma0=np.zeros(1),
        gamma1=np.asarray(dgp.gamma1, dtype=np.float64),
        gamma2=np.asarray(dgp.gamma2, dtype=np.float64),
        beta_h=dgp.beta_h,
        delta_beta=dgp.beta_l - dgp.beta_h,
        family=dgp.family,
        link=dgp.link,
    )
    cert = certificate_for(prototype)
    if not cert.satisfied:
        raise CertificateError(
            f"generating parameters violate the contraction certificate (bound {cert.bound:.3f})",
            certificate=cert,
        )
    return cert


def generalized_truth(dgp: SimulationConfig) -> tuple:
    """Reduced-form coefficients implied by the generating family."""
    bh, bl = dgp.beta_h, dgp.beta_l
    tag = dgp.family.tag
    if tag in ("het_conformity", "hom_conformity"):
        return (bh, -bh / 2.0, (bl - bh) / 2.0)
    if tag == "spillover":
        return (bl + bh, -bl, 0.0)
    if tag == "aggregate_conformity":
        return ((bl + bh) / 2.0, -bh / 2.0, 0.0)
    if tag == "linear_conformity":
        return (bl + bh, -bh, 0.0)
    raise DataError(f"no reduced-form truth for family {tag!r}")


def _true_values(config: MonteCarloConfig, family_tag: str, x_names) -> dict:
    dgp = config.dgp
    truth = {}
    for k, name in enumerate(x_names):
        truth[f"gamma1:{name}"] = float(dgp.gamma1[k])
        truth[f"gamma2:{name}"] = float(dgp.gamma2[k])
    db = dgp.beta_l - dgp.beta_h
    if family_tag == "generalized":
        b1, b2, b3 = generalized_truth(dgp)
        truth.update({"beta1": b1, "beta2": b2, "beta3": b3})
    elif family_tag == "hom_conformity":
        if dgp.family.tag == "hom_conformity":
            truth["beta"] = dgp.beta_h
    elif family_tag == dgp.family.tag:
        truth.update({"beta_h": dgp.beta_h, "delta_beta": db, "beta_l": dgp.beta_l})
    return truth


def _rep_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(1000, rep)).generate_state(1)[0])


def run_replication(config: MonteCarloConfig, rep: int) -> dict:
    """One draw-fit-test cycle; returns a flat record of scalars."""
    dgp = replace(config.dgp, seed=_rep_seed(config.seed, rep))
    synth = generate_dataset(dgp)
    data = synth.dataset
    record = {"rep": rep}

    for family_tag in config.fit_families:
        family = _family_from_tag(family_tag)
        fits = {}
        fits["npl"] = npl_estimate(
            data, family=family, link=dgp.link,
            outer_tol=config.outer_tol, max_outer=config.max_outer,
        )
        if "nfxp" in config.estimators:
            fits["nfxp"] = nfxp_estimate(
                data, family=family, link=dgp.link, theta0=fits["npl"].theta,
            )
        for est_name, fit in fits.items():
            prefix = f"{est_name}:{family_tag}"
            record[f"{prefix}:converged"] = float(fit.converged)
            record[f"{prefix}:loglik_total"] = fit.loglik_total
            for name in fit.coef_names:
                if name.startswith("gamma0:"):
                    continue
                record[f"{prefix}:est:{name}"] = fit.coef(name)
                record[f"{prefix}:se:{name}"] = fit.coef_se(name)
            if fit.beta_l_hat is not None:
                record[f"{prefix}:est:beta_l"] = fit.beta_l_hat
                record[f"{prefix}:se:beta_l"] = fit.beta_l_se if fit.beta_l_se is not None else float("nan")
        if "nfxp" in fits:
            diff = np.max(np.abs(fits["npl"].theta - fits["nfxp"].theta))
            record[f"agreement:{family_tag}"] = float(diff)
        if family_tag == "het_conformity":
            fit = fits["npl"]
            est, se = fit.coef("delta_beta"), fit.coef_se("delta_beta")
            if se > 0:
                record["pvalue:wald_delta_beta"] = chi_square_survival((est / se) ** 2, 1)

    if config.spec_tests:
        gen_fit = npl_estimate(
            data, family=ModelFamily.generalized(0.0, 0.0, 0.0), link=dgp.link,
            outer_tol=config.outer_tol, max_outer=config.max_outer,
        )
        conf = conformity_wald(gen_fit, alpha=config.alpha)
        spill = spillover_wald(gen_fit, alpha=config.alpha)
        record["pvalue:conformity_wald"] = conf.p_value
        record["pvalue:spillover_wald"] = spill.p_value
        for name in ("beta1", "beta2", "beta3"):
            record[f"npl:generalized:est:{name}"] = gen_fit.coef(name)
            record[f"npl:generalized:se:{name}"] = gen_fit.coef_se(name)
        i1 = gen_fit.coef_names.index("beta1")
        i2 = gen_fit.coef_names.index("beta2")
        combo_var = (
            gen_fit.vcov[i1, i1] + 4.0 * gen_fit.vcov[i2, i2] + 4.0 * gen_fit.vcov[i1, i2]
        )
        record["npl:generalized:est:combo12"] = gen_fit.coef("beta1") + 2.0 * gen_fit.coef("beta2")
        record["npl:generalized:se:combo12"] = float(np.sqrt(max(combo_var, 0.0)))

    if config.lr_pair is not None:
        restricted_tag, full_tag = config.lr_pair
        fit_r = npl_estimate(data, family=_family_from_tag(restricted_tag), link=dgp.link,
                             outer_tol=config.outer_tol, max_outer=config.max_outer)
        fit_f = npl_estimate(data, family=_family_from_tag(full_tag), link=dgp.link,
                             outer_tol=config.outer_tol, max_outer=config.max_outer)
        dof = len(fit_f.coef_names) - len(fit_r.coef_names)
        test = lr_test(fit_r.loglik_total, fit_f.loglik_total, dof, alpha=config.alpha)
        record["pvalue:lr"] = test.p_value
        record["stat:lr"] = test.statistic
    return record


def _family_from_tag(tag: str) -> ModelFamily:
    if tag == "generalized":
        return ModelFamily.generalized(0.0, 0.0, 0.0)
    return ModelFamily(tag=tag)


def run_montecarlo(config: MonteCarloConfig) -> MonteCarloReport:
    """Run all replications and aggregate bias, MSE, SE quality, and rejections."""
    if config.replications < 1:
        raise DataError("empty report: replications must be at least 1")
    _dgp_certificate(config)

    reps = range(config.replications)
    records, failures = [], 0
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(run_replication, config, r) for r in reps]
            for fut in futures:
                try:
                    records.append(fut.result())
                except PeernormsError:
                    failures += 1
    else:
        for r in reps:
            try:
                records.append(run_replication(config, r))
            except PeernormsError:
                failures += 1

    arrays: dict = {}
    for rec in records:
        for key, value in rec.items():
            arrays.setdefault(key, []).append(value)
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    x_names = ("x1", "x2")
    parameter_stats = {}
    for family_tag in config.fit_families + (("generalized",) if config.spec_tests else ()):
        truth = _true_values(config, family_tag, x_names)
        for name, true_val in truth.items():
            key = f"npl:{family_tag}:est:{name}"
            if key not in arrays:
                continue
            est = arrays[key]
            se = arrays.get(f"npl:{family_tag}:se:{name}")
            covered = float("nan")
            mean_se = float("nan")
            if se is not None and np.all(np.isfinite(se)):
                covered = float(np.mean(np.abs(est - true_val) <= Z_95 * se))
                mean_se = float(np.mean(se))
            parameter_stats[f"{family_tag}:{name}"] = ParamStats(
                true=float(true_val),
                mean=float(np.mean(est)),
                bias=float(np.mean(est) - true_val),
                mse=float(np.mean((est - true_val) ** 2)),
                sd=float(np.std(est, ddof=1)) if est.size > 1 else 0.0,
                mean_se=mean_se,
                coverage95=covered,
            )

    rejection_rates = {}
    for key, label in (
        ("pvalue:conformity_wald", "conformity_wald"),
        ("pvalue:spillover_wald", "spillover_wald"),
        ("pvalue:lr", "lr"),
        ("pvalue:wald_delta_beta", "wald_delta_beta"),
    ):
        if key in arrays:
            rejection_rates[label] = float(np.mean(arrays[key] < config.alpha))

    agreement_keys = [k for k in arrays if k.startswith("agreement:")]
    agreement_max = agreement_mean = None
    if agreement_keys:
        stacked = np.concatenate([arrays[k] for k in agreement_keys])
        agreement_max = float(np.max(stacked))
        agreement_mean = float(np.mean(stacked))

    return MonteCarloReport(
        replications=len(records),
        failures=failures,
        seed=config.seed,
        parameter_stats=parameter_stats,
        rejection_rates=rejection_rates,
        agreement_max=agreement_max,
        agreement_mean=agreement_mean,
        records=arrays,
    )

"""Command-line surface: simulate, solve, estimate, spec-test, montecarlo, diagnose.

Options can come from a flat ``key=value`` config file (``--config``); flags
win over config values. Exit codes: 0 success, 2 parse/validation error,
3 convergence failure, 4 identification error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .data import Dataset
from .equilibrium import solve_fixed_point
from .estimate import identification_diagnostics, nfxp_estimate, npl_estimate
from .exceptions import ConvergenceError, DataError, IdentificationError, PeernormsError
from .inference import SPILLOVER_CAVEAT, conformity_wald, lr_test, spillover_wald
from .model import LinkFunction, ModelFamily
from .montecarlo import MonteCarloConfig, run_montecarlo
from .simulate import EdgeRule, SimulationConfig, generate_dataset


def load_config(path) -> dict:
    """Flat key=value lines; blank lines and # comments ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class Options:
    """Flag-over-config option resolution."""

    def __init__(self, args, config):
        self.args = args
        self.config = config

    def get(self, key, default=None, cast=str):
        value = getattr(self.args, key.replace("-", "_"), None)
        if value is None:
            value = self.config.get(key)
        if value is None:
            return default
        if isinstance(value, str) and cast is not str:
            if cast is bool:
                return value.lower() in ("1", "true", "yes", "on")
            return cast(value)
        return value

    def require(self, key, cast=str):
        value = self.get(key, None, cast)
        if value is None:
            raise DataError(f"missing required option {key!r}")
        return value


def _parse_range(text, cast=float):
    if isinstance(text, (int, float)):
        return cast(text)
    if ":" in str(text):
        lo, hi = str(text).split(":", 1)
        return (cast(lo), cast(hi))
    return cast(text)


def _parse_floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(","))


def _family(opt: Options) -> ModelFamily:
    tag = opt.get("family", "het_conformity")
    weights = opt.get("weights", "normalized")
    if tag == "generalized":
        return ModelFamily.generalized(0.0, 0.0, 0.0)
    if tag == "aggregate_conformity":
        return ModelFamily.aggregate_conformity(weights=weights)
    return ModelFamily(tag=tag)


def _link(opt: Options) -> LinkFunction:
    return LinkFunction.from_tag(opt.get("link", "logistic"))


def _edge_rule(opt: Options) -> EdgeRule:
    kind = opt.get("edge-rule", "erdos_renyi")
    if kind == "erdos_renyi":
        return EdgeRule.erdos_renyi(opt.get("p-link", 0.06, float))
    if kind == "fixed_out_degree":
        return EdgeRule.fixed_out_degree(opt.get("out-degree", 3, int))
    raise DataError(f"unknown edge rule {kind!r}")


def _ingest(opt: Options) -> Dataset:
    covariates = opt.get("covariates")
    if covariates is not None:
        covariates = [c.strip() for c in str(covariates).split(",") if c.strip()]
    return dataio.ingest(
        opt.require("edges"),
        opt.require("nodes"),
        covariates=covariates,
        undirected=opt.get("undirected", False, bool),
    )


def _simulation_config(opt: Options) -> SimulationConfig:
    seed = opt.get("seed", None, int)
    if seed is None:
        raise DataError("missing required option 'seed' (stochastic command)")
    gamma0 = _parse_range(opt.get("gamma0", "-1.5:-0.9"))
    return SimulationConfig(
        n_networks=opt.get("networks", 20, int),
        nodes_per=_parse_range(opt.get("nodes-per", 50), cast=int),
        edge_rule=_edge_rule(opt),
        seed=seed,
        family=_family(opt),
        link=_link(opt),
        beta_h=opt.get("beta-h", 1.0, float),
        beta_l=opt.get("beta-l", 2.0, float),
        gamma0=gamma0,
        gamma1=_parse_floats(opt.get("gamma1", "-0.4,0.2")),
        gamma2=_parse_floats(opt.get("gamma2", "0.5,0.3")),
        isolate_frac=opt.get("isolate-frac", 0.0, float),
        mechanism=opt.get("mechanism", "threshold"),
    )


def cmd_simulate(opt: Options) -> int:
    out_dir = Path(opt.require("out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    synth = generate_dataset(_simulation_config(opt))
    dataio.write_edges(synth.dataset, out_dir / "edges.csv")
    dataio.write_nodes(synth.dataset, out_dir / "nodes.csv")
    dataio.write_records(
        dataio.coefficient_records(synth.true_params, synth.dataset), out_dir / "truth.csv"
    )
    mean_y = float(np.mean(synth.dataset.pooled_y()))
    print(f"simulated {synth.dataset.n_networks} networks, {synth.dataset.n_total} nodes")
    print(f"outcome mean {mean_y:.4f}; files in {out_dir}")
    return 0


def cmd_solve(opt: Options) -> int:
    data = _ingest(opt)
    params = dataio.read_params(opt.require("params"), data)
    tol = opt.get("tol", 1e-10, float)
    max_iter = opt.get("max-iter", 10_000, int)
    pooled = np.empty(data.n_total)
    worst = 0.0
    for block, s in zip(data.blocks, data.block_slices()):
        prof = solve_fixed_point(params, block.net, block.G, block.cov, tol=tol, max_iter=max_iter)
        pooled[s] = prof.p_star
        worst = max(worst, prof.residual)
        cert = prof.contraction_certificate
        label = "certified" if cert.satisfied else "UNCERTIFIED"
        print(
            f"{block.net.network_id}: residual {prof.residual:.2e} in {prof.iterations} iterations "
            f"({label}, bound {cert.bound:.3f})"
        )
    out = opt.get("out")
    if out:
        dataio.write_equilibria(data, pooled, out)
        print(f"wrote equilibrium beliefs to {out}")
    return 0


def _fit(opt: Options, data: Dataset):
    method = opt.get("method", "npl")
    family = _family(opt)
    link = _link(opt)
    if method == "npl":
        return npl_estimate(
            data, family=family, link=link,
            p0=opt.get("p0", "observed"),
            outer_tol=opt.get("outer-tol", 1e-6, float),
            max_outer=opt.get("max-outer", 500, int),
        )
    if method == "nfxp":
        return nfxp_estimate(data, family=family, link=link, p0=opt.get("p0", "observed"))
    raise DataError(f"unknown method {method!r}")


def _result_records(result, data) -> list:
    records = [
        ("method", result.method),
        ("family", result.family.tag),
        ("link", result.link.tag),
        ("converged", str(result.converged).lower()),
        ("outer_iterations", str(result.outer_iterations)),
        ("residual", repr(result.residual)),
        ("loglik", repr(result.loglik)),
        ("loglik_total", repr(result.loglik_total)),
    ]
    from .model import certificate_for

    cert = certificate_for(result.theta_hat)
    records += [
        ("certificate_bound", repr(cert.bound)),
        ("certificate_satisfied", str(cert.satisfied).lower()),
    ]
    for i, name in enumerate(result.coef_names):
        records.append((f"coef:{name}", repr(float(result.theta[i]))))
        if result.se is not None:
            records.append((f"se:{name}", repr(float(result.se[i]))))
    if result.beta_l_hat is not None:
        records.append(("coef:beta_l", repr(result.beta_l_hat)))
        if result.beta_l_se is not None:
            records.append(("se:beta_l", repr(result.beta_l_se)))
    diag = result.diagnostics
    if diag is not None:
        records += [
            ("rank", str(diag.regressor_rank)),
            ("n_params", str(diag.n_params)),
            ("min_singular_value", repr(diag.min_singular_value)),
            ("full_rank", str(diag.full_rank).lower()),
            ("n_isolated", str(diag.n_isolated)),
            ("triads_total", str(sum(diag.triad_counts.values()))),
        ]
    return records


def _print_fit(result) -> None:
    print(f"{result.method.upper()} fit, family {result.family.tag}, link {result.link.tag}")
    print(
        f"converged: {result.converged} in {result.outer_iterations} outer iterations, "
        f"belief residual {result.residual:.2e}"
    )
    print(f"log-likelihood (total): {result.loglik_total:.4f}")
    print(f"{'coefficient':<22}{'estimate':>12}{'std.err':>12}")
    for i, name in enumerate(result.coef_names):
        if name.startswith("gamma0:") and len(result.coef_names) > 14:
            continue  # keep per-network intercepts out of the console table
        se = result.se[i] if result.se is not None else float("nan")
        print(f"{name:<22}{result.theta[i]:>12.4f}{se:>12.4f}")
    if result.beta_l_hat is not None and result.family.tag != "hom_conformity":
        se = result.beta_l_se if result.beta_l_se is not None else float("nan")
        print(f"{'beta_l (derived)':<22}{result.beta_l_hat:>12.4f}{se:>12.4f}")


def cmd_estimate(opt: Options) -> int:
    data = _ingest(opt)
    result = _fit(opt, data)
    _print_fit(result)
    out = opt.get("out")
    if out:
        dataio.write_records(_result_records(result, data), out)
        print(f"wrote report to {out}")
    if not result.converged:
        raise ConvergenceError("estimation did not converge within the outer iteration cap")
    return 0


def _conclusion(test, alpha) -> str:
    verdict = "is rejected" if test.p_value < alpha else "cannot be rejected"
    return (
        f"The null hypothesis that the {test.null_description} {verdict} "
        f"at the {alpha:.3g} level (statistic {test.statistic:.3f}, dof {test.dof}, "
        f"p-value {test.p_value:.3g}{test.stars})."
    )


def cmd_spec_test(opt: Options) -> int:
    data = _ingest(opt)
    alpha = opt.get("alpha", 0.05, float)
    link = _link(opt)
    gen = npl_estimate(
        data, family=ModelFamily.generalized(0.0, 0.0, 0.0), link=link,
        outer_tol=opt.get("outer-tol", 1e-6, float), max_outer=opt.get("max-outer", 500, int),
    )
    spill = spillover_wald(gen, alpha=alpha)
    conf = conformity_wald(gen, alpha=alpha)
    print("generalized reduced-form fit:")
    for name in ("beta1", "beta2", "beta3"):
        print(f"  {name} = {gen.coef(name):.4f} (se {gen.coef_se(name):.4f})")
    print(_conclusion(spill, alpha))
    print(f"  note: {SPILLOVER_CAVEAT}")
    print(_conclusion(conf, alpha))
    records = [
        ("wald_spillover_stat", repr(spill.statistic)),
        ("wald_spillover_dof", str(spill.dof)),
        ("wald_spillover_pvalue", repr(spill.p_value)),
        ("wald_conformity_stat", repr(conf.statistic)),
        ("wald_conformity_dof", str(conf.dof)),
        ("wald_conformity_pvalue", repr(conf.p_value)),
        ("spillover_caveat", SPILLOVER_CAVEAT),
    ]
    if opt.get("lr", False, bool):
        hom = npl_estimate(data, family=ModelFamily.hom_conformity(), link=link)
        het = npl_estimate(data, family=ModelFamily.het_conformity(), link=link)
        test = lr_test(
            hom.loglik_total, het.loglik_total, dof=1,
            null_description="homogeneous conformity restriction (delta_beta = 0) holds",
            alpha=alpha,
        )
        print(_conclusion(test, alpha))
        records += [
            ("lr_stat", repr(test.statistic)),
            ("lr_dof", str(test.dof)),
            ("lr_pvalue", repr(test.p_value)),
        ]
    out = opt.get("out")
    if out:
        dataio.write_records(records, out)
        print(f"wrote report to {out}")
    return 0


def cmd_montecarlo(opt: Options) -> int:
    sim = _simulation_config(opt)
    lr_pair = opt.get("lr-pair")
    config = MonteCarloConfig(
        dgp=sim,
        replications=opt.get("replications", 100, int),
        seed=sim.seed,
        fit_families=tuple(str(opt.get("fit", "het_conformity")).split(",")),
        estimators=tuple(str(opt.get("estimators", "npl")).split(",")),
        spec_tests=opt.get("spec-tests", False, bool),
        lr_pair=tuple(lr_pair.split(":", 1)) if lr_pair else None,
        alpha=opt.get("alpha", 0.05, float),
        jobs=opt.get("jobs", 1, int),
    )
    report = run_montecarlo(config)
    print(f"{report.replications} replications ({report.failures} failures)")
    for name, st in sorted(report.parameter_stats.items()):
        print(
            f"{name}: true {st.true:+.3f} mean {st.mean:+.3f} bias {st.bias:+.4f} "
            f"sd {st.sd:.4f} mean_se {st.mean_se:.4f} coverage95 {st.coverage95:.3f}"
        )
    for name, rate in sorted(report.rejection_rates.items()):
        print(f"rejection rate {name}: {rate:.3f}")
    if report.agreement_max is not None:
        print(f"npl/nfxp agreement: max {report.agreement_max:.2e} mean {report.agreement_mean:.2e}")
    out = opt.get("out")
    if out:
        dataio.write_records(report.to_records(), out)
        print(f"wrote report to {out}")
    return 0


def cmd_diagnose(opt: Options) -> int:
    data = _ingest(opt)
    link = _link(opt)
    print(f"{data.n_networks} networks, {data.n_total} nodes, {data.n_covariates} covariates")
    p0 = np.full(data.n_total, 0.5)
    if data.has_outcomes:
        p0 = np.concatenate([np.full(b.n, np.clip(float(np.mean(b.y)), 0.01, 0.99)) for b in data.blocks])
    diag = identification_diagnostics(data, p0)
    for block in data.blocks:
        iso = int((block.net.degree == 0).sum())
        print(
            f"  {block.net.network_id}: n {block.n}, max degree {int(block.net.degree.max())}, "
            f"isolated {iso}, intransitive triads {diag.triad_counts[block.net.network_id]}"
        )
    print(f"regressor rank {diag.regressor_rank} of {diag.n_params} "
          f"(min singular value {diag.min_singular_value:.3e})")
    if diag.n_nonisolated == 0:
        print("warning: no non-isolated nodes; peer parameters unidentified")
    boundary = link.bound_threshold
    print(f"certificate region ({link.tag}): |beta_h| + 1.5 |delta_beta| < {boundary:g}")
    for note in diag.notes:
        print(f"note: {note}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "estimate": cmd_estimate,
    "spec-test": cmd_spec_test,
    "montecarlo": cmd_montecarlo,
    "diagnose": cmd_diagnose,
}

_OPTIONS = {
    "simulate": [
        "out", "networks", "nodes-per", "edge-rule", "p-link", "out-degree", "isolate-frac",
        "seed", "family", "link", "weights", "beta-h", "beta-l", "gamma0", "gamma1", "gamma2",
        "mechanism",
    ],
    "solve": ["edges", "nodes", "params", "out", "tol", "max-iter", "covariates", "undirected"],
    "estimate": [
        "edges", "nodes", "out", "family", "link", "weights", "method", "covariates",
        "outer-tol", "max-outer", "p0", "undirected",
    ],
    "spec-test": [
        "edges", "nodes", "out", "link", "covariates", "alpha", "lr", "outer-tol", "max-outer",
        "undirected",
    ],
    "montecarlo": [
        "out", "replications", "networks", "nodes-per", "edge-rule", "p-link", "out-degree",
        "isolate-frac", "seed", "family", "link", "weights", "beta-h", "beta-l", "gamma0",
        "gamma1", "gamma2", "mechanism", "fit", "estimators", "spec-tests", "lr-pair", "alpha",
        "jobs",
    ],
    "diagnose": ["edges", "nodes", "covariates", "link", "undirected"],
}

_FLAG_OPTIONS = {"undirected", "lr", "spec-tests"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peernorms",
        description="Conformity peer-effect games on networks: simulate, solve, estimate, test.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in _OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        for option in options:
            if option in _FLAG_OPTIONS:
                p.add_argument(f"--{option}", action="store_const", const="true", default=None)
            else:
                p.add_argument(f"--{option}", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config) if args.config else {}
    opt = Options(args, config)
    try:
        return COMMANDS[args.command](opt)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IdentificationError as exc:
        print(f"identification error: {exc}", file=sys.stderr)
        return 4
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except PeernormsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

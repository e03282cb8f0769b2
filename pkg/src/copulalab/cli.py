"""Config-driven command line front end for reproducible experiment runs.

Subcommands: verify-derivative, simulate, check-assumptions, report.
Exit codes: 0 all criteria pass, 1 a criterion fails, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .copulas import (
    FGM,
    Clayton,
    CopulaModel,
    Frank,
    GaussianCopula,
    Gumbel,
    Independence,
    check_c2,
)
from .grid import Grid, GridFunction
from .mapping import (
    PerturbationA,
    PerturbationB,
    PerturbationBAlpha,
    RateParams,
    parabola_components,
    product_bump,
    stretch_direction,
    verify_quantile_lemma,
    verify_theorem_1,
    verify_theorem_2,
)
from .mc import (
    STAT_FULL,
    STAT_REPR,
    STAT_RESTRICTED,
    ExperimentConfig,
    _lower_median,
    rate_slope,
    run_equivalence,
)
from .models import (
    FunctionalLinearModel,
    LinearModelIID,
    LinearModelMixing,
    LSSModel,
    check_z_assumption,
    skew_normal_cdf,
    skew_normal_quantile,
)

__all__ = ["main", "RunManifest", "ConfigError"]

_ENV_THREADS = "COPULA_PROC_THREADS"


class ConfigError(Exception):
    """Malformed or inconsistent configuration; maps to exit code 2."""


@dataclass
class RunManifest:
    """Provenance record written to the output directory before any work."""

    config: dict
    version: str
    seed: int | None
    outputs: list = field(default_factory=list)
    started: str = ""
    finished: str | None = None

    def write(self, path: str) -> None:
        doc = {
            "config": self.config,
            "version": self.version,
            "seed": self.seed,
            "outputs": self.outputs,
            "started": self.started,
            "finished": self.finished,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def _section(cfg: dict, name: str, required: bool = False) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing required config section {name!r}")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


_COPULA_FAMILIES = {
    "independence": lambda p: Independence(int(p.get("d", 2))),
    "clayton": lambda p: Clayton(float(p["theta"]), int(p.get("d", 2))),
    "gumbel": lambda p: Gumbel(float(p["theta"]), int(p.get("d", 2))),
    "frank": lambda p: Frank(float(p["theta"]), int(p.get("d", 2))),
    "gaussian": lambda p: GaussianCopula(float(p["rho"])),
    "fgm": lambda p: FGM(float(p["theta"])),
}


def _build_copula(section: dict) -> CopulaModel:
    family = section.get("family")
    if family not in _COPULA_FAMILIES:
        raise ConfigError(
            f"unknown copula family {family!r}; "
            f"choose from {sorted(_COPULA_FAMILIES)}"
        )
    try:
        return _COPULA_FAMILIES[family](section)
    except KeyError as exc:
        raise ConfigError(f"copula family {family!r} needs parameter {exc}")
    except ValueError as exc:
        raise ConfigError(f"invalid copula parameters: {exc}")


def _build_model(cfg: dict):
    model_sec = _section(cfg, "model", required=True)
    copula = _build_copula(_section(cfg, "copula", required=True))
    kind = model_sec.get("kind")
    try:
        if kind == "linear_iid":
            return LinearModelIID(copula, k=int(model_sec.get("k", 2)))
        if kind == "linear_mixing":
            return LinearModelMixing(
                copula,
                k=int(model_sec.get("k", 2)),
                phi=float(model_sec.get("phi", 0.5)),
            )
        if kind == "functional":
            return FunctionalLinearModel(copula)
        if kind == "lss":
            return LSSModel(copula)
    except ValueError as exc:
        raise ConfigError(f"invalid model parameters: {exc}")
    raise ConfigError(
        f"unknown model kind {kind!r}; choose from "
        "['linear_iid', 'linear_mixing', 'functional', 'lss']"
    )


def _build_rates(section: dict) -> RateParams | None:
    if not section:
        return None
    try:
        return RateParams(
            beta=float(section.get("beta", 0.0)),
            alpha=float(section.get("alpha", 0.0)),
            gamma=float(section.get("gamma", 0.0)),
            s=None if section.get("s") is None else float(section["s"]),
            epsilon=float(section.get("epsilon", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid rate parameters: {exc}")


def _zero_components(d: int) -> list:
    return [lambda u: np.zeros_like(np.asarray(u, dtype=float)) for _ in range(d)]


def _build_direction(name: str, c: CopulaModel, grid: Grid,
                     amplitude: float) -> PerturbationA:
    if name == "zero":
        return PerturbationA(GridFunction(grid, np.zeros(grid.shape)))
    if name == "product_bump":
        return product_bump(grid, amplitude)
    if name == "stretch":
        return stretch_direction(c, grid)
    raise ConfigError(
        f"unknown direction {name!r}; "
        "choose from ['zero', 'product_bump', 'stretch']"
    )


def _build_margin_part(name, d: int, amplitude: float, restricted: bool,
                       params: RateParams | None):
    if name is None or name == "none":
        return None
    if name == "zero":
        comps = _zero_components(d)
    elif name == "parabola":
        comps = parabola_components(d, amplitude)
    else:
        raise ConfigError(
            f"unknown margin perturbation {name!r}; "
            "choose from ['none', 'zero', 'parabola']"
        )
    if restricted:
        if params is None:
            raise ConfigError("restricted suites need a rates section")
        return PerturbationBAlpha(
            comps, params.alpha, params.epsilon, params.vartheta
        )
    return PerturbationB(comps)


_QUANTILE_DIRECTIONS = {
    "zero": lambda a: (lambda u: np.zeros_like(np.asarray(u, dtype=float))),
    "sine": lambda a: (lambda u: a * np.sin(np.pi * np.asarray(u, dtype=float))),
    "parabola": lambda a: (
        lambda u: a * np.asarray(u, dtype=float) * (1.0 - np.asarray(u, dtype=float))
    ),
}


def _quantile_callable(name: str, amplitude: float):
    if name not in _QUANTILE_DIRECTIONS:
        raise ConfigError(
            f"unknown quantile perturbation {name!r}; "
            f"choose from {sorted(_QUANTILE_DIRECTIONS)}"
        )
    return _QUANTILE_DIRECTIONS[name](amplitude)


def _resolve_threads(args, mc_section: dict) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(_ENV_THREADS)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{_ENV_THREADS} must be an integer, got {env!r}")
    return int(mc_section.get("threads", 1))


def _prepare_outdir(args, cfg: dict, default_name: str) -> str:
    out = args.out or _section(cfg, "output").get("dir")
    if out is None:
        out = os.path.join("runs", default_name)
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path: str, lines) -> None:
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# verify-derivative
# ---------------------------------------------------------------------------


def cmd_verify_derivative(args) -> int:
    cfg = _load_config(args.config)
    m = int(_section(cfg, "grid").get("m", 101))
    mc_sec = _section(cfg, "mc")
    t_sequence = [float(t) for t in mc_sec.get("t_sequence", [0.2, 0.1, 0.05, 0.025])]
    params = _build_rates(_section(cfg, "rates"))
    suites = mc_sec.get("suites")
    if not isinstance(suites, list) or not suites:
        raise ConfigError("mc.suites must be a non-empty list")

    out = _prepare_outdir(args, cfg, "verify-derivative")
    manifest = RunManifest(cfg, __version__, args.seed, started=_now())
    manifest_path = os.path.join(out, "manifest.json")
    manifest.write(manifest_path)

    results = {}
    all_pass = True
    for i, suite in enumerate(suites):
        if not isinstance(suite, dict):
            raise ConfigError(f"mc.suites[{i}] must be an object")
        name = suite.get("name", f"suite{i}")
        check = suite.get("check", "full")
        try:
            if check == "quantile":
                if params is None:
                    raise ConfigError("quantile suites need a rates section")
                h = _quantile_callable(
                    suite.get("direction", "sine"),
                    float(suite.get("amplitude", 0.25)),
                )
                hb = _quantile_callable(
                    suite.get("margin", "parabola"),
                    float(suite.get("margin_amplitude", 0.5)),
                )
                report = verify_quantile_lemma(h, hb, params, t_sequence)
            else:
                copula = _build_copula(suite.get("copula", {}))
                grid = Grid(copula.d, m)
                h = _build_direction(
                    suite.get("direction", "product_bump"), copula, grid,
                    float(suite.get("amplitude", 0.1)),
                )
                hb = _build_margin_part(
                    suite.get("margin", "parabola"), copula.d,
                    float(suite.get("margin_amplitude", 1.0)),
                    restricted=(check == "restricted"), params=params,
                )
                if check == "full":
                    report = verify_theorem_1(copula, h, hb, t_sequence, m)
                elif check == "restricted":
                    if params is None:
                        raise ConfigError("restricted suites need a rates section")
                    report = verify_theorem_2(copula, h, hb, params, t_sequence, m)
                else:
                    raise ConfigError(
                        f"unknown check {check!r}; "
                        "choose from ['full', 'restricted', 'quantile']"
                    )
        except ValueError as exc:
            raise ConfigError(f"suite {name!r}: {exc}")
        csv_path = os.path.join(out, f"{name}.csv")
        _write_csv(csv_path, report.to_csv_lines())
        manifest.outputs.append(csv_path)
        results[name] = bool(report.passed)
        all_pass = all_pass and report.passed

    summary_path = os.path.join(out, "summary.json")
    _write_json(summary_path, {"suites": results, "passed": all_pass})
    manifest.outputs.append(summary_path)
    manifest.finished = _now()
    manifest.write(manifest_path)
    for name, ok in results.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return 0 if all_pass else 1


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_CHECK_NAMES = {STAT_FULL, STAT_RESTRICTED, STAT_REPR}


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    model = _build_model(cfg)
    mc_sec = _section(cfg, "mc", required=True)
    n_sequence = mc_sec.get("n_sequence")
    if not isinstance(n_sequence, list) or len(n_sequence) < 2:
        raise ConfigError(
            "mc.n_sequence must list at least two sample sizes "
            "(a rate slope needs more than one point)"
        )
    checks = tuple(mc_sec.get("checks", [STAT_FULL]))
    unknown = set(checks) - _CHECK_NAMES
    if unknown:
        raise ConfigError(
            f"unknown checks {sorted(unknown)}; "
            f"choose from {sorted(_CHECK_NAMES)}"
        )
    regions = _section(cfg, "regions")
    params = _build_rates(_section(cfg, "rates"))
    vartheta = (
        params.vartheta if params is not None
        else float(regions.get("vartheta", 1.0))
    )
    seed = args.seed if args.seed is not None else int(mc_sec.get("seed", 0))
    threads = _resolve_threads(args, mc_sec)
    try:
        experiment = ExperimentConfig(
            model=model,
            n_sequence=tuple(int(n) for n in n_sequence),
            replications=int(mc_sec.get("replications", 100)),
            seed=seed,
            m=int(_section(cfg, "grid").get("m", 101)),
            epsilon=float(regions.get("epsilon", 1.0)),
            vartheta=vartheta,
            checks=checks,
            n_fresh=int(mc_sec.get("n_fresh", 10000)),
            force_true_fit=bool(mc_sec.get("force_true_fit", False)),
            exact_marginals=bool(mc_sec.get("exact_marginals", False)),
            threads=threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))

    out = _prepare_outdir(args, cfg, "simulate")
    manifest = RunManifest(cfg, __version__, seed, started=_now())
    manifest_path = os.path.join(out, "manifest.json")
    manifest.write(manifest_path)

    report = run_equivalence(experiment)
    csv_path = os.path.join(out, "experiment.csv")
    _write_csv(csv_path, report.to_csv_lines())
    summary_path = os.path.join(out, "summary.json")
    _write_json(summary_path, report.summary())
    manifest.outputs.extend([csv_path, summary_path])
    manifest.finished = _now()
    manifest.write(manifest_path)

    all_pass = all(bool(v) for v in report.passed.values())
    for key, ok in report.passed.items():
        print(f"{key}: {'PASS' if ok else 'FAIL'} (slope={report.slopes[key]:.4f})")
    return 0 if all_pass else 1


# ---------------------------------------------------------------------------
# check-assumptions
# ---------------------------------------------------------------------------


def _audit_c2(cfg: dict, audit: dict):
    copula = _build_copula(audit.get("copula") or _section(cfg, "copula"))
    beta = float(audit.get("beta", 0.0))
    m_sequence = [int(m) for m in audit.get("m_sequence", [101])]
    ceiling = float(audit.get("ceiling", 20.0))
    rows = []
    ok = True
    for m in m_sequence:
        rep = check_c2(copula, beta, m=m, ceiling=ceiling)
        rows.append(("c2", f"beta={beta},m={m}", rep.max_ratio, rep.passed))
        ok = ok and rep.passed
    return rows, ok


def _audit_z(cfg: dict, audit: dict, seed: int):
    model = _build_model(cfg)
    variant = audit.get("variant", "Z1")
    params = _build_rates(_section(cfg, "rates")) if variant == "Z2" else None
    rng = np.random.default_rng(seed)
    try:
        rep = check_z_assumption(
            model, variant, params,
            [int(n) for n in audit.get("n_sequence", [200, 800, 3200])],
            rng,
            replications=int(audit.get("replications", 40)),
            n_fresh=int(audit.get("n_fresh", 100)),
            tolerance=float(audit.get("tolerance", 0.15)),
        )
    except ValueError as exc:
        raise ConfigError(f"z audit: {exc}")
    row = (
        "z", f"variant={variant},target={rep.target_slope}", rep.slope,
        rep.passed,
    )
    return [row], rep.passed


def _audit_skew_normal(audit: dict):
    gamma = float(audit.get("gamma", 1.0))
    tol = float(audit.get("tolerance", 1e-9))
    u = np.linspace(0.001, 0.999, 999)
    roundtrip = float(
        np.max(np.abs(skew_normal_cdf(skew_normal_quantile(u, gamma), gamma) - u))
    )
    at_zero = abs(float(skew_normal_cdf(0.0, 1.0)) - 0.25)
    ok = roundtrip <= tol and at_zero <= tol
    rows = [
        ("skew_normal", f"roundtrip,gamma={gamma}", roundtrip, roundtrip <= tol),
        ("skew_normal", "cdf_at_zero_gamma_1_minus_quarter", at_zero, at_zero <= tol),
    ]
    return rows, ok


def cmd_check_assumptions(args) -> int:
    cfg = _load_config(args.config)
    mc_sec = _section(cfg, "mc")
    audits = mc_sec.get("audits")
    if not isinstance(audits, list) or not audits:
        raise ConfigError("mc.audits must be a non-empty list")
    seed = args.seed if args.seed is not None else int(mc_sec.get("seed", 0))

    out = _prepare_outdir(args, cfg, "check-assumptions")
    manifest = RunManifest(cfg, __version__, seed, started=_now())
    manifest_path = os.path.join(out, "manifest.json")
    manifest.write(manifest_path)

    all_rows = []
    all_pass = True
    for i, audit in enumerate(audits):
        if not isinstance(audit, dict):
            raise ConfigError(f"mc.audits[{i}] must be an object")
        kind = audit.get("kind")
        try:
            if kind == "c2":
                rows, ok = _audit_c2(cfg, audit)
            elif kind == "z":
                rows, ok = _audit_z(cfg, audit, seed)
            elif kind == "skew_normal":
                rows, ok = _audit_skew_normal(audit)
            else:
                raise ConfigError(
                    f"unknown audit kind {kind!r}; "
                    "choose from ['c2', 'z', 'skew_normal']"
                )
        except ValueError as exc:
            raise ConfigError(f"audit {i}: {exc}")
        all_rows.extend(rows)
        all_pass = all_pass and ok

    csv_path = os.path.join(out, "audits.csv")
    lines = ["# schema=1", "audit,detail,value,passed"]
    lines += [f"{a},{b},{v!r},{int(p)}" for a, b, v, p in all_rows]
    _write_csv(csv_path, lines)
    summary_path = os.path.join(out, "summary.json")
    _write_json(summary_path, {
        "audits": [
            {"audit": a, "detail": b, "value": v, "passed": bool(p)}
            for a, b, v, p in all_rows
        ],
        "passed": all_pass,
    })
    manifest.outputs.extend([csv_path, summary_path])
    manifest.finished = _now()
    manifest.write(manifest_path)
    for a, b, v, p in all_rows:
        print(f"{a}[{b}]: {'PASS' if p else 'FAIL'} (value={v:.6g})")
    return 0 if all_pass else 1


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_outdir(args, cfg, "simulate")
    csv_path = os.path.join(out, "experiment.csv")
    if not os.path.exists(csv_path):
        raise ConfigError(f"{csv_path}: no experiment CSV to re-aggregate")
    by_stat: dict = {}
    with open(csv_path) as fh:
        header_seen = False
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                header_seen = True
                continue
            n_s, _r, _seed, stat, value, failed = line.split(",")
            if int(failed):
                continue
            by_stat.setdefault(stat, {}).setdefault(int(n_s), []).append(
                float(value)
            )
    if not by_stat:
        raise ConfigError(f"{csv_path}: no usable rows")
    summary = {}
    all_pass = True
    for stat, groups in sorted(by_stat.items()):
        meds = [
            (n, _lower_median(np.array(vals)))
            for n, vals in sorted(groups.items())
        ]
        slope = rate_slope(meds)
        values = [v for _, v in meds]
        if all(v <= 1e-9 for v in values):
            ok = True
        else:
            decreasing = all(b < a for a, b in zip(values, values[1:]))
            ok = decreasing and np.isfinite(slope) and slope <= -0.1
        summary[stat] = {
            "medians": {str(n): v for n, v in meds},
            "slope": slope,
            "passed": ok,
        }
        all_pass = all_pass and ok
        print(f"{stat}: {'PASS' if ok else 'FAIL'} (slope={slope:.4f})")
    _write_json(os.path.join(out, "reaggregated.json"), summary)
    return 0 if all_pass else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copulalab",
        description="Seeded verification and simulation runs for copula "
                    "process estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "verify-derivative": cmd_verify_derivative,
        "simulate": cmd_simulate,
        "check-assumptions": cmd_check_assumptions,
        "report": cmd_report,
    }
    for name, handler in handlers.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed; overrides the config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker processes; falls back to ${_ENV_THREADS}")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

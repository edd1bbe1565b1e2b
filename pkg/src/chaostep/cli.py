"""Command-line front end.

Subcommands: decompose, solve, simulate, estimate, converge,
complete-market.  Every run resolves a flat key=value config (from a
preset, a config file, or both), rejects unknown keys, writes the
resolved config to ``audit.cfg`` in the output directory, and emits
deterministic artifacts: reruns with the same inputs produce byte
identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(explosion, degenerate moments, budget overrun), 4 result-quality
failure (noise-dominated or degenerate fits).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, catalog
from ._backend import backend_name
from .basis import IncrementLaw, gram_schmidt_basis, walsh_driver_vector
from .dif import (
    StatePoint,
    decompose_spanning,
    decompose_walk_1d,
    decompose_weak_scheme,
)
from .errors import (
    ChaostepError,
    ConfigError,
    DegenerateFit,
    NoiseDominated,
)
from .fdsolver import PolynomialFlow, backward_solve, consistency_defect
from .basis import full_walsh_indices
from .montecarlo import (
    EstimatorConfig,
    design_report,
    estimate,
    hedging_defect,
    third_moment_floor,
    weak_order,
    _fit_loglog,
)
from .scheme import simulate_path

COMMON_KEYS = {"command", "seed", "threads"}

COMMAND_KEYS = {
    "decompose": {
        "mode", "law", "payoff", "truncation", "position", "dimension",
        "dt", "n_drivers", "field", "sigma", "mu", "strike", "sharpness",
        "weights", "drivers",
    },
    "solve": {
        "field", "source", "payoff", "dimension", "sigma", "mu", "x0",
        "horizon", "n_steps", "strike", "sharpness", "weights",
        "node_budget",
    },
    "simulate": {
        "field", "source", "dimension", "sigma", "mu", "x0", "horizon",
        "n_steps",
    },
    "estimate": {
        "field", "source", "payoff", "dimension", "sigma", "mu", "x0",
        "horizon", "n_steps", "n_paths", "method", "n_randomizations",
        "reference", "strike", "sharpness", "weights",
    },
    "converge": {
        "experiment", "field", "source", "payoff", "dimension", "sigma",
        "mu", "x0", "horizon", "n_grid", "method", "n_paths",
        "n_randomizations", "reference", "strike", "sharpness", "weights",
    },
    "complete-market": {
        "source", "payoff", "dimension", "sigma", "mu", "x0", "horizon",
        "n_steps", "strike", "sharpness", "weights", "floor_starts",
    },
}


def load_config(path: str) -> dict:
    """Parse key=value lines; # starts a comment, blank lines ignored."""
    out: dict = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected key=value, got {line!r}"
                    )
                key, value = line.split("=", 1)
                key = key.strip()
                if key in out:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                out[key] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return out


def _resolve_config(args) -> dict:
    cfg: dict = {}
    if args.preset:
        cfg.update(catalog.preset(args.preset))
    if args.config:
        cfg.update(load_config(args.config))
    declared = cfg.pop("command", None)
    if declared is not None and declared != args.command:
        raise ConfigError(
            f"config is for command {declared!r}, not {args.command!r}"
        )
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    if args.threads is not None:
        cfg["threads"] = str(args.threads)
    allowed = COMMAND_KEYS[args.command] | COMMON_KEYS
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown keys for {args.command}: {', '.join(unknown)}"
        )
    return cfg


# -- typed config access ----------------------------------------------------
def _need(cfg: dict, key: str) -> str:
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


def _get_int(cfg: dict, key: str, default=None) -> int:
    raw = cfg.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} must be an integer, got {raw!r}")


def _get_float(cfg: dict, key: str, default=None) -> float:
    raw = cfg.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} must be a number, got {raw!r}")


def _get_floats(cfg: dict, key: str, default=None) -> np.ndarray:
    raw = cfg.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return np.asarray(default, dtype=float)
    try:
        return np.array([float(p) for p in raw.split(",")])
    except ValueError:
        raise ConfigError(f"key {key!r} must be comma-separated numbers")


def _get_ints(cfg: dict, key: str) -> list:
    raw = _need(cfg, key)
    try:
        return [int(p) for p in raw.split(",")]
    except ValueError:
        raise ConfigError(f"key {key!r} must be comma-separated integers")


def _build_field(cfg: dict, dimension: int):
    name = _need(cfg, "field")
    sigma = _get_floats(cfg, "sigma", [1.0])
    mu = _get_floats(cfg, "mu", [0.0])
    return catalog.field(name, dimension, sigma=sigma, mu=mu)


def _build_payoff(cfg: dict, dimension: int):
    name = _need(cfg, "payoff")
    weights = cfg.get("weights")
    return catalog.payoff(
        name, dimension,
        strike=_get_float(cfg, "strike", 1.0),
        sharpness=_get_float(cfg, "sharpness", 0.2),
        weights=None if weights is None else _get_floats(cfg, "weights"),
    )


# -- output helpers ---------------------------------------------------------
def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _write_kv(path: str, rows: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for key, value in rows.items():
            fh.write(f"{key}={_fmt(value)}\n")


def _write_audit(out_dir: str, command: str, cfg: dict) -> None:
    rows = {"command": command}
    rows.update({k: cfg[k] for k in sorted(cfg)})
    _write_kv(os.path.join(out_dir, "audit.cfg"), rows)


# -- subcommand runners -----------------------------------------------------
def _run_decompose(cfg: dict, out_dir: str) -> dict:
    mode = cfg.get("mode", "walk1d")
    dim = _get_int(cfg, "dimension", 1)
    dt = _get_float(cfg, "dt", 1.0)
    pay = _build_payoff(cfg, dim)
    summary: dict = {"mode": mode}
    if mode == "walk1d":
        law = catalog.law(_need(cfg, "law"))
        truncation = _get_int(cfg, "truncation")
        count = truncation if law.kind != "finite" else len(law.atoms)
        basis = gram_schmidt_basis(law, max(truncation, min(count, 2)))
        w0 = _get_floats(cfg, "position", [0.0])

        def f_scalar(v):
            return pay(np.asarray(v, dtype=float)[..., None])

        dec = decompose_walk_1d(
            f_scalar, StatePoint(0, 0.0, w0), law, basis, truncation, dt
        )
        check = _reconstruction_check_walk(dec, f_scalar, float(w0[0]), law)
    elif mode == "spanning":
        law = catalog.law(_need(cfg, "law"))
        if law.kind != "finite":
            raise ConfigError("spanning mode needs a finite law")
        basis = gram_schmidt_basis(law, len(law.atoms))
        n_drivers = _get_int(cfg, "n_drivers", len(law.atoms) - 1)
        field = _build_field(cfg, n_drivers)
        x0 = _get_floats(cfg, "position", [0.0] * n_drivers)

        def f_time(t, x):
            return pay(x)

        dec = decompose_spanning(
            f_time, StatePoint(0, 0.0, x0), field, law, basis, n_drivers, dt
        )
        check = _reconstruction_check_span(dec, f_time, x0, field, law, basis, dt)
    elif mode == "walsh":
        n = _get_int(cfg, "drivers")
        drivers = walsh_driver_vector(n)
        resolution = max(d.max_factor for d in drivers)
        corr = [
            i for i in full_walsh_indices(resolution, include_constant=False)
            if i not in drivers
        ]
        field = _build_field(cfg, n)
        x0 = _get_floats(cfg, "position", [0.0] * n)

        def f_time(t, x):
            return pay(x)

        dec = decompose_weak_scheme(
            f_time, StatePoint(0, 0.0, x0), field,
            IncrementLaw.lebesgue_unit(), drivers, corr, dt
        )
        check = _reconstruction_check_walsh(dec, f_time, x0, field, dt,
                                            resolution)
    else:
        raise ConfigError(f"unknown decompose mode {mode!r}")
    summary["exhaustive"] = dec.exhaustive
    for j, m in enumerate(dec.martingale_coeffs, start=1):
        summary[f"martingale_{j}"] = m
    summary["drift"] = dec.drift_coeff
    for label, coeff in dec.correction_coeffs.items():
        summary[f"correction_{_corr_label(label)}"] = coeff
    summary["correction_norm"] = dec.correction_norm()
    summary["reconstruction_max_error"] = check
    _write_kv(os.path.join(out_dir, "summary.txt"), summary)
    return summary


def _corr_label(label) -> str:
    if isinstance(label, tuple):
        return "x".join(str(v) for v in label)
    if hasattr(label, "factors"):
        return "w" + "_".join(str(v) for v in label.factors)
    return str(label)


def _reconstruction_check_walk(dec, f, w0, law) -> float:
    if law.kind != "finite" or not dec.exhaustive:
        return float("nan")
    worst = 0.0
    for atom in law.atoms:
        truth = float(f(w0 + atom) - f(w0))
        worst = max(worst, abs(dec.reconstruct(atom) - truth))
    return worst


def _reconstruction_check_span(dec, f, x0, field, law, basis, dt) -> float:
    atoms, _ = law.nodes_weights()
    hmat = basis.eval_matrix(atoms)
    n = len(dec.martingale_coeffs)
    worst = 0.0
    for i, atom in enumerate(atoms):
        nxt = field.step(x0, dt, hmat[1 : n + 1, i])
        truth = float(f(dt, nxt) - f(0.0, x0))
        worst = max(worst, abs(dec.reconstruct(atom) - truth))
    return worst


def _reconstruction_check_walsh(dec, f, x0, field, dt, resolution) -> float:
    from .basis import walsh_eval

    worst = 0.0
    for block in range(1 << resolution):
        u = (block + 0.5) / (1 << resolution)
        y = np.array([walsh_eval(d, u) for d in dec.drivers], dtype=float)
        truth = float(f(dt, field.step(x0, dt, y)) - f(0.0, x0))
        worst = max(worst, abs(dec.reconstruct(u) - truth))
    return worst


def _run_solve(cfg: dict, out_dir: str) -> dict:
    dim = _get_int(cfg, "dimension", 1)
    field = _build_field(cfg, dim)
    source = catalog.source(_need(cfg, "source"), dim)
    pay = _build_payoff(cfg, dim)
    x0 = _get_floats(cfg, "x0", [0.0])
    horizon = _get_float(cfg, "horizon", 1.0)
    n_steps = _get_int(cfg, "n_steps")
    budget = _get_int(cfg, "node_budget", 2_000_000)
    sol = backward_solve(field, source, x0, horizon, n_steps, pay,
                         node_budget=budget)
    sol.to_csv(os.path.join(out_dir, "lattice.csv"))
    summary = {
        "root_value": sol.root_value,
        "residual_max": sol.residual_max(),
        "n_steps": n_steps,
        "terminal_nodes": sol.slices[-1].shape[0],
        "total_nodes": sum(s.shape[0] for s in sol.slices),
    }
    _write_kv(os.path.join(out_dir, "summary.txt"), summary)
    return summary


def _run_simulate(cfg: dict, out_dir: str) -> dict:
    dim = _get_int(cfg, "dimension", 1)
    field = _build_field(cfg, dim)
    source = catalog.source(_need(cfg, "source"), dim)
    x0 = _get_floats(cfg, "x0", [0.0])
    horizon = _get_float(cfg, "horizon", 1.0)
    n_steps = _get_int(cfg, "n_steps")
    seed = _get_int(cfg, "seed", 0)
    path = simulate_path(field, source, x0, horizon, n_steps, seed)
    path.to_csv(os.path.join(out_dir, "path.csv"))
    replay_gap = float(np.max(np.abs(path.replay(field) - path.states)))
    summary = {"seed": seed, "n_steps": n_steps, "replay_max_error": replay_gap}
    for j, v in enumerate(path.terminal, start=1):
        summary[f"terminal_{j}"] = v
    _write_kv(os.path.join(out_dir, "summary.txt"), summary)
    return summary


def _run_estimate(cfg: dict, out_dir: str) -> dict:
    dim = _get_int(cfg, "dimension", 1)
    field = _build_field(cfg, dim)
    source = catalog.source(_need(cfg, "source"), dim)
    pay = _build_payoff(cfg, dim)
    run = estimate(EstimatorConfig(
        field=field, source=source, payoff=pay,
        x0=_get_floats(cfg, "x0", [0.0]),
        horizon=_get_float(cfg, "horizon", 1.0),
        n_steps=_get_int(cfg, "n_steps"),
        n_paths=_get_int(cfg, "n_paths"),
        method=cfg.get("method", "plain"),
        seed=_get_int(cfg, "seed", 0),
        n_randomizations=_get_int(cfg, "n_randomizations", 8),
        threads=_get_int(cfg, "threads", 1),
    ))
    summary = {
        "estimate": run.estimate,
        "stderr": run.stderr,
        "n_paths": run.n_paths,
        "n_steps": run.n_steps,
        "method": run.method,
        "seed": run.seed,
        "backend": run.backend,
    }
    if "reference" in cfg:
        ref = _get_float(cfg, "reference")
        summary["reference"] = ref
        summary["abs_error"] = abs(run.estimate - ref)
        if run.stderr > 0:
            summary["z_score"] = (run.estimate - ref) / run.stderr
    _write_kv(os.path.join(out_dir, "summary.txt"), summary)
    print(f"estimate {run.estimate:.6g} +/- {run.stderr:.2g} "
          f"({run.method}, {run.n_paths} paths, backend {run.backend}, "
          f"{run.wall_seconds:.2f}s)", file=sys.stderr)
    return summary


def _run_converge(cfg: dict, out_dir: str) -> dict:
    experiment = cfg.get("experiment", "weak-order")
    dim = _get_int(cfg, "dimension", 1)
    field = _build_field(cfg, dim)
    horizon = _get_float(cfg, "horizon", 1.0)
    n_grid = _get_ints(cfg, "n_grid")
    if experiment == "consistency":
        source = catalog.source(_need(cfg, "source"), dim)
        poly = catalog.payoff_polynomial(_need(cfg, "payoff"), dim)
        flow = PolynomialFlow(field, horizon, poly)
        x0 = _get_floats(cfg, "x0", [0.0])
        dts = np.array([horizon / n for n in n_grid])
        defects = np.array([
            consistency_defect(flow, field, source, x0, horizon, n)
            for n in n_grid
        ])
        if np.any(defects <= 0):
            raise DegenerateFit("zero defect leaves the log-log fit undefined")
        slope, intercept, halfwidth = _fit_loglog(dts, defects)
        with open(os.path.join(out_dir, "orderfit.csv"), "w",
                  newline="\n") as fh:
            fh.write("N,dt,estimate,stderr,error,logdt,logerror\n")
            for n, dt, d in zip(n_grid, dts, defects):
                fh.write(f"{n},{dt:.17g},{d:.17g},0,{d:.17g},"
                         f"{np.log(dt):.17g},{np.log(d):.17g}\n")
        summary = {
            "experiment": experiment,
            "slope": slope,
            "intercept": intercept,
            "slope_halfwidth": halfwidth,
        }
    elif experiment == "weak-order":
        source = catalog.source(_need(cfg, "source"), dim)
        pay = _build_payoff(cfg, dim)
        x0 = _get_floats(cfg, "x0", [1.0])
        sigma = _get_floats(cfg, "sigma", [1.0])
        mu = _get_floats(cfg, "mu", [0.0])
        if "reference" in cfg:
            reference = _get_float(cfg, "reference")
        elif _need(cfg, "field") == "em-gbm":
            reference = catalog.gbm_reference(pay, x0, sigma, mu, horizon)
        else:
            raise ConfigError(
                "reference required unless the field has a closed limit"
            )
        fit = weak_order(
            field, source, pay, x0, horizon, n_grid, reference,
            method=cfg.get("method", "exact"),
            n_paths=_get_int(cfg, "n_paths", 2 ** 14),
            seed=_get_int(cfg, "seed", 0),
            threads=_get_int(cfg, "threads", 1),
            n_randomizations=_get_int(cfg, "n_randomizations", 8),
        )
        fit.to_csv(os.path.join(out_dir, "orderfit.csv"))
        summary = {
            "experiment": experiment,
            "reference": reference,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "slope_halfwidth": fit.slope_halfwidth,
        }
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    _write_kv(os.path.join(out_dir, "summary.txt"), summary)
    print(f"{experiment} slope {summary['slope']:.4f} "
          f"+/- {summary['slope_halfwidth']:.4f}", file=sys.stderr)
    return summary


def _run_complete_market(cfg: dict, out_dir: str) -> dict:
    dim = _get_int(cfg, "dimension", 2)
    source = catalog.source(_need(cfg, "source"), dim)
    pay = _build_payoff(cfg, dim)
    x0 = _get_floats(cfg, "x0", [1.0] * dim)
    horizon = _get_float(cfg, "horizon", 1.0)
    n_steps = _get_int(cfg, "n_steps", 8)
    field = catalog.field("em-gbm", dim,
                          sigma=_get_floats(cfg, "sigma", [1.0]),
                          mu=_get_floats(cfg, "mu", [0.0]))
    report = design_report(source)
    defect = hedging_defect(field, source, pay, x0, horizon / n_steps)
    summary = {
        "outcome_count": report.outcome_count,
        "complete": report.complete,
        "mean_error": report.mean_error,
        "covariance_error": report.covariance_error,
        "gaussian_third_mismatch": report.gaussian_third_mismatch,
        "hedging_defect": defect,
    }
    starts = _get_int(cfg, "floor_starts", 0)
    if starts > 0:
        floor = third_moment_floor(
            dimension=dim, n_atoms=dim + 1, n_starts=starts,
            seed=_get_int(cfg, "seed", 0),
        )
        summary["third_moment_floor"] = floor.best_mismatch
        summary["floor_starts_converged"] = floor.n_converged
    _write_kv(os.path.join(out_dir, "summary.txt"), summary)
    return summary


_RUNNERS = {
    "decompose": _run_decompose,
    "solve": _run_solve,
    "simulate": _run_simulate,
    "estimate": _run_estimate,
    "converge": _run_converge,
    "complete-market": _run_complete_market,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaostep",
        description="Pathwise chaos decompositions, lattice solvers, and "
                    "Walsh-driven Monte Carlo for difference schemes.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "decompose": "one-step chaos decomposition of an increment",
        "solve": "backward induction on the reachable lattice",
        "simulate": "one seeded trajectory of a scheme",
        "estimate": "Monte Carlo / quasi Monte Carlo expectation",
        "converge": "consistency or weak-order experiment",
        "complete-market": "driver-design moment and spanning diagnostics",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--preset",
                       help=f"named preset ({', '.join(sorted(catalog.PRESETS))})")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--threads", type=int, help="worker thread count")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if not args.preset and not args.config:
            raise ConfigError("provide --preset and/or --config")
        os.makedirs(args.out, exist_ok=True)
        _write_audit(args.out, args.command, cfg)
        _RUNNERS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NoiseDominated, DegenerateFit) as exc:
        print(f"result-quality failure: {exc}", file=sys.stderr)
        return 4
    except ChaostepError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

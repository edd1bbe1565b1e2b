"""Path estimators, convergence-order fits, and driver-design diagnostics.

Estimation always flows uniforms -> innovations -> kernel steps, so plain
Monte Carlo, Sobol, and Halton share one path map and differ only in where
the uniforms come from.  Results are deterministic for a fixed seed: chunk
boundaries and reduction order never depend on the thread count.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc, t as student_t

from . import _backend
from .errors import (
    DegenerateFit,
    ExplosionGuard,
    NoiseDominated,
    NonFiniteState,
)
from .scheme import (
    DriverSource,
    EXPLOSION_LIMIT,
    SchemeField,
    expectation_terminal,
)

__all__ = [
    "EstimatorConfig",
    "EstimatorRun",
    "estimate",
    "OrderFit",
    "weak_order",
    "hedging_defect",
    "DesignReport",
    "design_report",
    "FloorReport",
    "third_moment_floor",
]

NUM_CHUNKS = 64
METHODS = ("plain", "sobol", "halton")


@dataclass(frozen=True)
class EstimatorConfig:
    """Inputs of one expectation estimate E[payoff(X_N)]."""

    field: SchemeField
    source: DriverSource
    payoff: Callable
    x0: np.ndarray
    horizon: float
    n_steps: int
    n_paths: int
    method: str = "plain"
    seed: int = 0
    n_randomizations: int = 8
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.n_steps < 1 or self.n_paths < 2:
            raise ValueError("need n_steps >= 1 and n_paths >= 2")
        x = np.broadcast_to(
            np.asarray(self.x0, dtype=float), (self.field.dimension,)
        ).copy()
        x.flags.writeable = False
        object.__setattr__(self, "x0", x)
        if self.field.dimension != self.source.dimension:
            raise ValueError("field and source dimensions differ")


@dataclass(frozen=True)
class EstimatorRun:
    """Result of one estimate; wall_seconds never enters output files."""

    estimate: float
    stderr: float
    n_paths: int
    n_steps: int
    method: str
    seed: int
    backend: str
    wall_seconds: float


def _advance(cfg: EstimatorConfig, uniforms: np.ndarray) -> np.ndarray:
    """Drive a block of paths through every step; returns terminal states."""
    m = uniforms.shape[0]
    per = cfg.source.per_step
    dt = cfg.horizon / cfg.n_steps
    s = math.sqrt(dt)
    x = np.ascontiguousarray(
        np.broadcast_to(cfg.x0, (m, cfg.field.dimension))
    ).astype(float)
    if cfg.field.kind == "diag-affine":
        a = cfg.field.a.copy()
        b = cfg.field.b.copy()
        c = cfg.field.c.copy()
        d = cfg.field.d.copy()
        for k in range(cfg.n_steps):
            y = np.ascontiguousarray(
                cfg.source.from_uniforms(uniforms[:, k * per : (k + 1) * per])
            )
            _backend.affine_step(x, y, a, b, c, d, s, dt)
    else:
        for k in range(cfg.n_steps):
            y = cfg.source.from_uniforms(uniforms[:, k * per : (k + 1) * per])
            x = cfg.field.step(x, dt, y)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("non-finite terminal state")
    if np.max(np.abs(x)) > EXPLOSION_LIMIT:
        raise ExplosionGuard(f"|state| exceeded {EXPLOSION_LIMIT:g}")
    return x


def _chunk_bounds(total: int, chunks: int) -> list:
    width = -(-total // chunks)
    out = []
    for c in range(chunks):
        lo, hi = c * width, min(total, (c + 1) * width)
        if lo >= hi:
            break
        out.append((lo, hi))
    return out


def _run_ordered(tasks: Sequence[Callable], threads: int) -> list:
    """Evaluate thunks, preserving order regardless of thread count."""
    if threads <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda f: f(), tasks))


def _estimate_plain(cfg: EstimatorConfig) -> tuple[float, float, int]:
    bounds = _chunk_bounds(cfg.n_paths, NUM_CHUNKS)
    children = np.random.SeedSequence(cfg.seed).spawn(len(bounds))

    def chunk_task(idx):
        def run():
            lo, hi = bounds[idx]
            rng = np.random.default_rng(children[idx])
            u = rng.random((hi - lo, cfg.n_steps * cfg.source.per_step))
            vals = np.asarray(cfg.payoff(_advance(cfg, u)), dtype=float)
            return math.fsum(vals), math.fsum(vals * vals)

        return run

    parts = _run_ordered([chunk_task(i) for i in range(len(bounds))],
                         cfg.threads)
    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    m = cfg.n_paths
    mean = total / m
    var = max(total_sq - m * mean * mean, 0.0) / (m - 1)
    return mean, math.sqrt(var / m), m


def _qmc_engine(method: str, dim: int, seed) -> qmc.QMCEngine:
    if method == "sobol":
        return qmc.Sobol(d=dim, scramble=True, seed=seed)
    return qmc.Halton(d=dim, scramble=True, seed=seed)


def _estimate_rqmc(cfg: EstimatorConfig) -> tuple[float, float, int]:
    r = cfg.n_randomizations
    if r < 2:
        raise ValueError("need at least 2 randomizations")
    per_rand = cfg.n_paths // r
    if per_rand < 2:
        raise ValueError("n_paths too small for the randomization count")
    dim = cfg.n_steps * cfg.source.per_step
    children = np.random.SeedSequence(cfg.seed).spawn(r)

    def rand_task(idx):
        def run():
            engine = _qmc_engine(cfg.method, dim,
                                 np.random.default_rng(children[idx]))
            if cfg.method == "sobol" and per_rand & (per_rand - 1) == 0:
                u = engine.random_base2(per_rand.bit_length() - 1)
            else:
                u = engine.random(per_rand)
            vals = np.asarray(cfg.payoff(_advance(cfg, u)), dtype=float)
            return math.fsum(vals) / per_rand

        return run

    means = np.array(_run_ordered([rand_task(i) for i in range(r)],
                                  cfg.threads))
    mean = math.fsum(means) / r
    stderr = float(np.std(means, ddof=1) / math.sqrt(r))
    return mean, stderr, per_rand * r


def estimate(cfg: EstimatorConfig) -> EstimatorRun:
    """Estimate E[payoff(X_N)] by plain or randomized quasi Monte Carlo.

    Quasi methods split the paths over ``n_randomizations`` independently
    scrambled sequences; the spread of the per-randomization means gives
    the reported standard error.
    """
    start = time.perf_counter()
    if cfg.method == "plain":
        mean, stderr, used = _estimate_plain(cfg)
    else:
        mean, stderr, used = _estimate_rqmc(cfg)
    return EstimatorRun(
        estimate=mean, stderr=stderr, n_paths=used, n_steps=cfg.n_steps,
        method=cfg.method, seed=cfg.seed, backend=_backend.backend_name(),
        wall_seconds=time.perf_counter() - start,
    )


# --------------------------------------------------------------------------
# convergence-order fits
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class OrderFit:
    """Log-log fit of weak error against step size."""

    n_values: np.ndarray
    dts: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    errors: np.ndarray
    reference: float
    slope: float
    intercept: float
    slope_halfwidth: float

    def to_csv(self, target) -> None:
        """Write rows N,dt,estimate,stderr,error,logdt,logerror."""
        close = False
        if isinstance(target, (str, bytes)):
            fh = open(target, "w")
            close = True
        else:
            fh = target
        try:
            fh.write("N,dt,estimate,stderr,error,logdt,logerror\n")
            for i in range(len(self.n_values)):
                row = (
                    f"{int(self.n_values[i])},{self.dts[i]:.17g},"
                    f"{self.estimates[i]:.17g},{self.stderrs[i]:.17g},"
                    f"{self.errors[i]:.17g},{np.log(self.dts[i]):.17g},"
                    f"{np.log(self.errors[i]):.17g}\n"
                )
                fh.write(row)
        finally:
            if close:
                fh.close()


def _fit_loglog(dts: np.ndarray, errors: np.ndarray) -> tuple[float, float, float]:
    x = np.log(dts)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    k = len(x)
    resid = y - (slope * x + intercept)
    if k > 2:
        s2 = float(resid @ resid) / (k - 2)
        se = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
        halfwidth = float(student_t.ppf(0.975, k - 2)) * se
    else:
        halfwidth = math.inf
    return float(slope), float(intercept), halfwidth


def weak_order(field: SchemeField, source: DriverSource, payoff: Callable,
               x0, horizon: float, n_grid: Sequence[int], reference: float,
               method: str = "exact", n_paths: int = 2 ** 14, seed: int = 0,
               threads: int = 1, n_randomizations: int = 8,
               min_noise_ratio: float = 3.0, max_escalations: int = 2,
               ) -> OrderFit:
    """Fit the weak convergence order of a scheme against a reference value.

    For each N the scheme value is either computed exactly by terminal
    enumeration (``method='exact'``, zero noise) or estimated by paths; in
    the sampled case any grid whose error is not at least
    ``min_noise_ratio`` standard errors is re-estimated with four times the
    paths, and NoiseDominated is raised if escalation cannot separate the
    error from the noise.
    """
    n_grid = sorted(set(int(n) for n in n_grid))
    if len(n_grid) < 3:
        raise DegenerateFit("need at least 3 grid sizes")
    dts = np.array([horizon / n for n in n_grid])
    ests, errs, sds = [], [], []
    for n in n_grid:
        if method == "exact":
            val = expectation_terminal(field, source, x0, horizon, n, payoff)
            sd = 0.0
        else:
            paths = n_paths
            for attempt in range(max_escalations + 1):
                cfg = EstimatorConfig(
                    field=field, source=source, payoff=payoff, x0=x0,
                    horizon=horizon, n_steps=n, n_paths=paths, method=method,
                    seed=seed + 1000 * n + attempt, threads=threads,
                    n_randomizations=n_randomizations,
                )
                run = estimate(cfg)
                val, sd = run.estimate, run.stderr
                if abs(val - reference) >= min_noise_ratio * sd:
                    break
                paths *= 4
            else:
                raise NoiseDominated(
                    f"error at N={n} is indistinguishable from sampling noise"
                )
        ests.append(val)
        sds.append(sd)
        errs.append(abs(val - reference))
    errors = np.array(errs)
    if np.any(errors == 0.0):
        raise DegenerateFit("zero error leaves the log-log fit undefined")
    slope, intercept, halfwidth = _fit_loglog(dts, errors)
    return OrderFit(
        n_values=np.array(n_grid), dts=dts, estimates=np.array(ests),
        stderrs=np.array(sds), errors=errors, reference=reference,
        slope=slope, intercept=intercept, slope_halfwidth=halfwidth,
    )


# --------------------------------------------------------------------------
# driver-design diagnostics
# --------------------------------------------------------------------------
def hedging_defect(field: SchemeField, source: DriverSource, payoff: Callable,
                   x0, dt: float) -> float:
    """L2 residual of the best constant-plus-drivers fit to one step.

    Projects g(y) = payoff(x0 + F(x0, dt, y)) onto span{1, y_1, ..., y_n}
    under the outcome weights.  Zero exactly when the outcome count is
    n + 1 (the complete case, where constant and drivers span every
    contingency); positive for richer outcome tables and nonlinear
    payoffs.
    """
    rows, q = source.outcomes()
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (field.dimension,))
    nxt = x0 + field.apply_batch(x0, dt, rows)
    g = np.asarray(payoff(nxt), dtype=float)
    design = np.hstack([np.ones((rows.shape[0], 1)), rows])
    sq = np.sqrt(q)
    beta, *_ = np.linalg.lstsq(design * sq[:, None], g * sq, rcond=None)
    resid = g - design @ beta
    return float(np.sqrt(np.dot(q, resid * resid)))


@dataclass(frozen=True)
class DesignReport:
    """Moment diagnostics of a driver source against the standard Gaussian."""

    mean: np.ndarray
    covariance: np.ndarray
    third_moments: np.ndarray
    mean_error: float
    covariance_error: float
    gaussian_third_mismatch: float
    outcome_count: int
    complete: bool


def design_report(source: DriverSource) -> DesignReport:
    """Moment report; the third-moment mismatch is the max-norm distance
    to the (all-zero) Gaussian third moments."""
    mean = source.mean()
    cov = source.covariance()
    third = source.third_moments()
    rows = (np.inf if source.kind == "gaussian"
            else source.outcomes()[0].shape[0])
    return DesignReport(
        mean=mean,
        covariance=cov,
        third_moments=third,
        mean_error=float(np.max(np.abs(mean))),
        covariance_error=float(np.max(np.abs(cov - np.eye(len(mean))))),
        gaussian_third_mismatch=float(np.max(np.abs(third))),
        outcome_count=rows,
        complete=rows == len(mean) + 1,
    )


@dataclass(frozen=True)
class FloorReport:
    """Best third-moment mismatch reachable under mean/covariance matching."""

    best_mismatch: float
    atoms: np.ndarray
    weights: np.ndarray
    n_starts: int
    n_converged: int


def third_moment_floor(dimension: int = 2, n_atoms: int = 3,
                       n_starts: int = 20, seed: int = 0) -> FloorReport:
    """Search finite designs for the smallest max third moment.

    Minimizes max |E[y_i y_j y_k]| over atom positions and weights subject
    to mean zero and identity covariance.  With n_atoms = dimension + 1 the
    constraints leave no room to cancel every third moment, so the best
    value stays far from zero; the report quantifies that floor.
    """
    rng = np.random.default_rng(seed)
    triples = [
        (i, j, k)
        for i in range(dimension)
        for j in range(i, dimension)
        for k in range(j, dimension)
    ]

    def unpack(params):
        atoms = params[: n_atoms * dimension].reshape(n_atoms, dimension)
        weights = params[n_atoms * dimension : -1]
        return atoms, weights, params[-1]

    def third(atoms, weights, ijk):
        i, j, k = ijk
        return float(
            np.dot(weights, atoms[:, i] * atoms[:, j] * atoms[:, k])
        )

    cons = [
        {"type": "eq",
         "fun": lambda p: unpack(p)[1].sum() - 1.0},
    ]
    for i in range(dimension):
        cons.append({
            "type": "eq",
            "fun": (lambda i: lambda p: float(
                np.dot(unpack(p)[1], unpack(p)[0][:, i])))(i),
        })
    for i in range(dimension):
        for j in range(i, dimension):
            target = 1.0 if i == j else 0.0
            cons.append({
                "type": "eq",
                "fun": (lambda i, j, t: lambda p: float(
                    np.dot(unpack(p)[1],
                           unpack(p)[0][:, i] * unpack(p)[0][:, j])) - t
                        )(i, j, target),
            })
    for ijk in triples:
        for sign in (1.0, -1.0):
            cons.append({
                "type": "ineq",
                "fun": (lambda ijk, s: lambda p:
                        unpack(p)[2] - s * third(*unpack(p)[:2], ijk)
                        )(ijk, sign),
            })
    bounds = (
        [(-4.0, 4.0)] * (n_atoms * dimension)
        + [(1e-4, 1.0)] * n_atoms
        + [(0.0, 10.0)]
    )

    best = None
    converged = 0
    for _ in range(n_starts):
        atoms0 = rng.normal(size=(n_atoms, dimension))
        w0 = rng.dirichlet(np.ones(n_atoms))
        t0 = 1.0
        p0 = np.concatenate([atoms0.ravel(), w0, [t0]])
        with warnings.catch_warnings():
            # SLSQP emits a clipping RuntimeWarning on bound contact
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                lambda p: p[-1], p0, method="SLSQP", bounds=bounds,
                constraints=cons, options={"maxiter": 400, "ftol": 1e-12},
            )
        if not res.success:
            continue
        atoms, weights, _ = unpack(res.x)
        viol = max(
            abs(weights.sum() - 1.0),
            float(np.max(np.abs(weights @ atoms))),
            float(np.max(np.abs(
                (atoms * weights[:, None]).T @ atoms - np.eye(dimension)
            ))),
        )
        if viol > 1e-6:
            continue
        converged += 1
        mism = max(abs(third(atoms, weights, ijk)) for ijk in triples)
        if best is None or mism < best[0]:
            best = (mism, atoms.copy(), weights.copy())
    if best is None:
        raise DegenerateFit("no design search start converged")
    return FloorReport(
        best_mismatch=best[0], atoms=best[1], weights=best[2],
        n_starts=n_starts, n_converged=converged,
    )

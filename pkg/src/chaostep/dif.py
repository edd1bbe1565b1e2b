"""One-step chaos decompositions of difference-scheme increments.

Each operation splits f(next) - f(current) over a single time step into
three orthogonal groups:

* a martingale part: one coefficient per driver, multiplying the realized
  driver increment;
* a drift part: one coefficient multiplying dt;
* correction terms: higher-order coefficients against the remaining
  orthonormal functions of the increment law.

With an exhaustive correction set the three groups reconstruct the
increment pathwise, exactly; with a truncated set the residual is the
spanning defect.  All coefficient integrals are conditioned on the current
state (evaluated at the time-k position).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .basis import (
    IncrementLaw,
    OrthonormalSystem,
    WalshIndex,
    walsh_block_signs,
)
from .errors import (
    DimensionMismatch,
    OverlappingIndices,
    TruncationTooSmall,
)

__all__ = [
    "StatePoint",
    "ChaosDecomposition",
    "decompose_walk_1d",
    "decompose_multidim",
    "decompose_scheme",
    "decompose_spanning",
    "decompose_weak_scheme",
    "spanning_defect",
]


@dataclass(frozen=True)
class StatePoint:
    """Position of a chain at a grid time."""

    time_index: int
    time: float
    state: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.state, dtype=float)).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "state", arr)
        if self.time_index < 0:
            raise ValueError("time_index must be >= 0")

    @property
    def dimension(self) -> int:
        return self.state.shape[0]

    @property
    def scalar(self) -> float:
        if self.dimension != 1:
            raise ValueError("scalar view needs dimension 1")
        return float(self.state[0])


@dataclass(frozen=True)
class ChaosDecomposition:
    """Coefficients of the three term groups plus enough context to replay.

    ``mode`` selects how a realized innovation is interpreted:

    * ``walk1d``    realized scalar xi; martingale multiplier is xi itself.
    * ``tensor``    realized vector xi; multiplier j is xi_j.
    * ``spanning``  realized atom xi of a scalar law; multiplier j is
                    H_j(xi) sqrt(dt).
    * ``walsh``     realized uniform x in [0,1); multiplier j is the j-th
                    Walsh driver at x times sqrt(dt).

    ``exhaustive`` records whether the correction set spans everything the
    one-step function can load outside the constant and the drivers, in
    which case reconstruction is exact.
    """

    mode: str
    martingale_coeffs: np.ndarray
    drift_coeff: float
    correction_coeffs: Mapping
    dt: float
    exhaustive: bool
    bases: tuple = ()
    drivers: tuple = ()

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.martingale_coeffs, dtype=float)).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "martingale_coeffs", arr)
        object.__setattr__(self, "correction_coeffs", dict(self.correction_coeffs))

    # -- multipliers -------------------------------------------------------
    def _driver_values(self, realized) -> np.ndarray:
        sdt = np.sqrt(self.dt)
        if self.mode == "walk1d":
            return np.array([float(realized)])
        if self.mode == "tensor":
            r = np.atleast_1d(np.asarray(realized, dtype=float))
            if r.shape[0] != self.martingale_coeffs.shape[0]:
                raise DimensionMismatch("realized increment has wrong dimension")
            return r
        if self.mode == "spanning":
            funcs = self.bases[0].functions
            return np.array(
                [float(funcs[j + 1](realized)) * sdt
                 for j in range(len(self.martingale_coeffs))]
            )
        # walsh
        from .basis import walsh_eval

        return np.array(
            [walsh_eval(d, realized) * sdt for d in self.drivers]
        )

    def _correction_values(self, realized) -> dict:
        from .basis import walsh_eval

        out = {}
        if self.mode == "walk1d":
            h = self.bases[0].functions
            for l in self.correction_coeffs:
                out[l] = float(h[l](realized))
        elif self.mode == "tensor":
            r = np.atleast_1d(np.asarray(realized, dtype=float))
            for multi in self.correction_coeffs:
                val = 1.0
                for j, lj in enumerate(multi):
                    if lj:
                        val *= float(self.bases[j].functions[lj](r[j]))
                out[multi] = val
        elif self.mode == "spanning":
            h = self.bases[0].functions
            for l in self.correction_coeffs:
                out[l] = float(h[l](realized))
        else:
            for idx in self.correction_coeffs:
                out[idx] = float(walsh_eval(idx, realized))
        return out

    # -- term groups -------------------------------------------------------
    def martingale_part(self, realized) -> float:
        return float(np.dot(self.martingale_coeffs, self._driver_values(realized)))

    def drift_part(self) -> float:
        return self.drift_coeff * self.dt

    def correction_part(self, realized) -> float:
        vals = self._correction_values(realized)
        return float(
            sum(self.correction_coeffs[k] * vals[k] for k in self.correction_coeffs)
        )

    def reconstruct(self, realized) -> float:
        """Value of the decomposed increment at a realized innovation."""
        return (
            self.martingale_part(realized)
            + self.drift_part()
            + self.correction_part(realized)
        )

    def correction_norm(self) -> float:
        """L2(nu) norm of the correction part (coefficients are orthonormal)."""
        c = np.array(list(self.correction_coeffs.values()), dtype=float)
        return float(np.sqrt(np.sum(c * c))) if c.size else 0.0


def spanning_defect(decomp: ChaosDecomposition) -> float:
    """L2 norm of the correction part.

    Zero (to tolerance) exactly when the constant plus the drivers span
    every one-step contingency, the complete-market situation; meaningful
    only when the decomposition was computed with an exhaustive correction
    set.
    """
    return decomp.correction_norm()


# --------------------------------------------------------------------------
# 1-d random walk
# --------------------------------------------------------------------------
def decompose_walk_1d(
    f: Callable,
    state: StatePoint,
    law: IncrementLaw,
    basis: OrthonormalSystem,
    truncation: int,
    dt: float = 1.0,
) -> ChaosDecomposition:
    """Chaos decomposition of f(W + xi) - f(W) for a scalar walk.

    The martingale coefficient is E[f(W + xi) xi] / E[xi^2] and multiplies
    the raw increment; the drift coefficient is (E[f(W + xi)] - f(W)) / dt;
    corrections pair <f(W + .), H_l> with H_l(xi) for 2 <= l < truncation.
    For a finite law with truncation equal to the support size the
    reconstruction is exact.
    """
    if truncation < 2:
        raise TruncationTooSmall("truncation must be >= 2")
    if basis.law != law:
        raise ValueError("basis was not built over this law")
    if truncation > basis.cardinality:
        raise ValueError(
            f"truncation {truncation} exceeds basis cardinality {basis.cardinality}"
        )
    if abs(law.mean()) > 1e-12:
        raise ValueError("walk increments must be centered")
    w0 = state.scalar
    x, wts = law.nodes_weights()
    g = np.asarray(f(w0 + x), dtype=float)
    m2 = law.moment(2)
    mart = float(np.dot(wts, g * x)) / m2
    drift = (float(np.dot(wts, g)) - float(f(w0))) / dt
    hmat = basis.eval_matrix(x)
    corrections = {
        l: float(np.dot(wts, g * hmat[l])) for l in range(2, truncation)
    }
    exhaustive = law.kind == "finite" and truncation == len(law.atoms)
    return ChaosDecomposition(
        mode="walk1d",
        martingale_coeffs=np.array([mart]),
        drift_coeff=drift,
        correction_coeffs=corrections,
        dt=dt,
        exhaustive=exhaustive,
        bases=(basis,),
    )


# --------------------------------------------------------------------------
# tensor-product decompositions
# --------------------------------------------------------------------------
def _tensor_transform(g_vals: np.ndarray, hw_mats: Sequence[np.ndarray]) -> np.ndarray:
    """Project a grid of values onto the full tensor basis.

    hw_mats[j] holds H_l(x) * weight(x) for component j, shape (card, nodes);
    the result C[l_1,...,l_n] collects every tensor coefficient at once.
    """
    c = g_vals
    n = len(hw_mats)
    for j, hw in enumerate(hw_mats):
        c = np.moveaxis(np.tensordot(hw, c, axes=(1, j)), 0, j)
    assert c.shape == tuple(hw.shape[0] for hw in hw_mats)
    return c


def _multi_indices(shape, lo, hi):
    """Multi-indices within ``shape`` whose total degree lies in [lo, hi)."""
    out = []

    def rec(prefix, remaining, total):
        if not remaining:
            if lo <= total < hi:
                out.append(tuple(prefix))
            return
        for l in range(remaining[0]):
            if total + l >= hi:
                break
            rec(prefix + [l], remaining[1:], total + l)

    rec([], list(shape), 0)
    return out


def _tensor_decompose(
    f: Callable,
    state: StatePoint,
    laws: Sequence[IncrementLaw],
    bases: Sequence[OrthonormalSystem],
    truncation: int,
    dt: float,
    push: Callable,
) -> ChaosDecomposition:
    """Shared core of the walk and scheme tensor decompositions.

    ``push`` maps a grid of innovation vectors (..., n) to next-step
    positions (..., n).
    """
    n = len(laws)
    if n != len(bases) or n != state.dimension:
        raise DimensionMismatch(
            f"{n} laws, {len(bases)} bases, state dimension {state.dimension}"
        )
    if truncation < 2:
        raise TruncationTooSmall("truncation must be >= 2")
    for law, b in zip(laws, bases):
        if b.law != law:
            raise ValueError("basis/law pairing broken")
        if abs(law.mean()) > 1e-12:
            raise ValueError("increment components must be centered")

    nodes, weights, hmats = [], [], []
    for law, b in zip(laws, bases):
        x, w = law.nodes_weights()
        nodes.append(x)
        weights.append(w)
        hmats.append(b.eval_matrix(x))

    grids = np.meshgrid(*nodes, indexing="ij")
    pts = np.stack(grids, axis=-1)  # (A_1, ..., A_n, n)
    t_next = state.time + dt
    g_vals = np.asarray(f(t_next, push(pts)), dtype=float)
    if g_vals.shape != pts.shape[:-1]:
        raise DimensionMismatch("payoff did not evaluate elementwise over the grid")

    hw = [h * w for h, w in zip(hmats, weights)]
    coeffs = _tensor_transform(g_vals, hw)

    f_now = float(f(state.time, state.state))
    zero = (0,) * n
    drift = (float(coeffs[zero]) - f_now) / dt
    mart = np.empty(n)
    for j in range(n):
        ej = tuple(1 if i == j else 0 for i in range(n))
        mart[j] = coeffs[ej] / np.sqrt(laws[j].moment(2))

    corrections = {
        multi: float(coeffs[multi])
        for multi in _multi_indices(coeffs.shape, 2, truncation)
    }
    full_degree = sum(s - 1 for s in coeffs.shape)
    exhaustive = (
        all(law.kind == "finite" for law in laws)
        and all(b.cardinality == len(law.atoms) for law, b in zip(laws, bases))
        and truncation > full_degree
    )
    return ChaosDecomposition(
        mode="tensor",
        martingale_coeffs=mart,
        drift_coeff=drift,
        correction_coeffs=corrections,
        dt=dt,
        exhaustive=exhaustive,
        bases=tuple(bases),
    )


def decompose_multidim(
    f: Callable,
    state: StatePoint,
    laws: Sequence[IncrementLaw],
    bases: Sequence[OrthonormalSystem],
    truncation: int,
    dt: float = 1.0,
) -> ChaosDecomposition:
    """Decompose f(t+dt, W + xi) - f(t, W) for independent components.

    Coefficients are integrals over the product measure; corrections carry
    tensor multi-indices of total degree 2 <= |l| < truncation.  Exact
    reconstruction holds when every law has finite support and truncation
    covers the full tensor basis.
    """
    return _tensor_decompose(
        f, state, laws, bases, truncation, dt,
        push=lambda pts: state.state + pts,
    )


def decompose_scheme(
    f: Callable,
    state: StatePoint,
    field,
    laws: Sequence[IncrementLaw],
    bases: Sequence[OrthonormalSystem],
    truncation: int,
    dt: float,
) -> ChaosDecomposition:
    """Decompose one step of X' = X + F(X, dt, xi) driven by product noise.

    Identical to :func:`decompose_multidim` with the payoff composed with
    the update map; the martingale multipliers remain the raw components of
    the driving increment.
    """
    if field.dimension != state.dimension:
        raise DimensionMismatch(
            f"field dimension {field.dimension} vs state {state.dimension}"
        )
    x0 = state.state
    return _tensor_decompose(
        f, state, laws, bases, truncation, dt,
        push=lambda pts: x0 + field.apply_batch(x0, dt, pts),
    )


# --------------------------------------------------------------------------
# single-noise (spanning) decompositions: finite law or Walsh drivers
# --------------------------------------------------------------------------
def decompose_spanning(
    f: Callable,
    state: StatePoint,
    field,
    law: IncrementLaw,
    basis: OrthonormalSystem,
    n_drivers: int,
    dt: float,
    correction_limit: int | None = None,
) -> ChaosDecomposition:
    """Decompose one step driven by H(xi) sqrt-scaled, xi from a finite law.

    The n driver increments are H_1(xi) sqrt(dt), ..., H_n(xi) sqrt(dt) for
    a single scalar innovation; corrections run over the remaining basis
    functions H_l, n < l < correction_limit (defaults to the full basis).
    With the full basis of a finite law the reconstruction is exact, and
    when the support has exactly n + 1 atoms the correction set is empty:
    the complete case.
    """
    if law.kind != "finite":
        raise ValueError("spanning decomposition needs a finite-support law")
    if basis.law != law:
        raise ValueError("basis was not built over this law")
    if not 1 <= n_drivers < basis.cardinality:
        raise DimensionMismatch(
            f"n_drivers {n_drivers} outside 1..{basis.cardinality - 1}"
        )
    if field.dimension != n_drivers or state.dimension != n_drivers:
        raise DimensionMismatch("field/state dimension must equal n_drivers")
    limit = basis.cardinality if correction_limit is None else correction_limit

    atoms, wts = law.nodes_weights()
    hmat = basis.eval_matrix(atoms)  # (card, atoms)
    innovations = hmat[1 : n_drivers + 1].T  # (atoms, n)
    t_next = state.time + dt
    nxt = state.state + field.apply_batch(state.state, dt, innovations)
    g = np.asarray(f(t_next, nxt), dtype=float)

    sdt = np.sqrt(dt)
    mart = np.array(
        [np.dot(wts, g * hmat[j]) / sdt for j in range(1, n_drivers + 1)]
    )
    drift = (float(np.dot(wts, g)) - float(f(state.time, state.state))) / dt
    corrections = {
        l: float(np.dot(wts, g * hmat[l])) for l in range(n_drivers + 1, limit)
    }
    return ChaosDecomposition(
        mode="spanning",
        martingale_coeffs=mart,
        drift_coeff=drift,
        correction_coeffs=corrections,
        dt=dt,
        exhaustive=limit == len(law.atoms),
        bases=(basis,),
    )


def decompose_weak_scheme(
    f: Callable,
    state: StatePoint,
    field,
    unit_law: IncrementLaw,
    drivers: Sequence[WalshIndex],
    correction_indices: Sequence[WalshIndex],
    dt: float,
) -> ChaosDecomposition:
    """Decompose one step of a Walsh-driven weak approximation scheme.

    Drivers are Walsh indices evaluated at a single uniform innovation; the
    step increment of driver j is its Walsh function at xi times sqrt(dt).
    All integrals over [0,1) are exact sums over the dyadic blocks at the
    minimal resolution covering every involved index; the one-step function
    is piecewise constant there, so nothing is sampled.
    """
    if unit_law.kind != "lebesgue":
        raise ValueError("weak-scheme decomposition needs the Lebesgue unit law")
    drivers = tuple(drivers)
    corrections = tuple(correction_indices)
    if any(not d.factors for d in drivers):
        raise OverlappingIndices("the constant cannot be a driver")
    if len(set(drivers)) != len(drivers):
        raise OverlappingIndices("duplicate driver indices")
    bad = set(corrections) & (set(drivers) | {WalshIndex(())})
    if bad or len(set(corrections)) != len(corrections):
        names = sorted(i.factors for i in bad)
        raise OverlappingIndices(f"correction indices collide: {names}")
    n = len(drivers)
    if field.dimension != n or state.dimension != n:
        raise DimensionMismatch("field/state dimension must match driver count")

    resolution = max(
        [i.max_factor for i in drivers] + [i.max_factor for i in corrections]
    )
    nblocks = 1 << resolution
    dsign = np.stack([walsh_block_signs(d, resolution) for d in drivers])
    innovations = dsign.T.astype(float)  # (blocks, n)
    t_next = state.time + dt
    nxt = state.state + field.apply_batch(state.state, dt, innovations)
    g = np.asarray(f(t_next, nxt), dtype=float)

    sdt = np.sqrt(dt)
    mart = (dsign @ g) / nblocks / sdt
    drift = (float(g.mean()) - float(f(state.time, state.state))) / dt
    corr = {
        idx: float(np.dot(walsh_block_signs(idx, resolution), g)) / nblocks
        for idx in corrections
    }
    exhaustive = 1 + n + len(corrections) == nblocks
    return ChaosDecomposition(
        mode="walsh",
        martingale_coeffs=mart,
        drift_coeff=drift,
        correction_coeffs=corr,
        dt=dt,
        exhaustive=exhaustive,
        drivers=drivers,
    )

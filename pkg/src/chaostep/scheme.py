"""Difference schemes: update fields, driver sources, paths, enumeration.

A scheme advances X_{k+1} = X_k + F(X_k, dt, y_k) where y_k is a unit
innovation vector produced by a driver source.  For Euler-type fields the
update already contains the sqrt(dt) volatility scaling, so sources always
emit unit-scale innovations (mean zero, identity covariance for the
calibrated catalog entries).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .basis import (
    IncrementLaw,
    OrthonormalSystem,
    WalshIndex,
    walsh_block_signs,
)
from .errors import (
    DimensionMismatch,
    ExplosionGuard,
    NodeBudgetExceeded,
    NonFiniteState,
)

__all__ = [
    "SchemeField",
    "DriverSource",
    "Path",
    "simulate_path",
    "enumerate_terminal",
    "expectation_terminal",
    "state_keys",
]

EXPLOSION_LIMIT = 1e6
DEFAULT_NODE_BUDGET = 2_000_000

# mantissa bits kept when merging nearly identical lattice nodes; 2^-40
# relative spacing is far below scheme resolution yet far above roundoff
_KEY_BITS = 40


@dataclass(frozen=True)
class SchemeField:
    """Update map F(x, dt, y) of a difference scheme.

    Two kinds:

    * ``diag-affine``: F = diag(a + b x) y sqrt(dt) + (c + d x) dt, the
      Euler-Maruyama form with componentwise affine volatility and drift.
      This kind runs on the compiled kernels.
    * ``raw``: an arbitrary callable F(x, dt, y) broadcasting over
      trailing-axis-``dimension`` arrays.
    """

    kind: str
    dimension: int
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    c: np.ndarray | None = None
    d: np.ndarray | None = None
    update: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("diag-affine", "raw"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == "diag-affine":
            for name in ("a", "b", "c", "d"):
                arr = np.ascontiguousarray(
                    np.broadcast_to(np.asarray(getattr(self, name), dtype=float),
                                    (self.dimension,))
                ).copy()
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)
        elif self.update is None:
            raise ValueError("raw field needs an update callable")

    @staticmethod
    def diag_affine(a, b, c, d, dimension: int | None = None) -> "SchemeField":
        """diag(a + b x) y sqrt(dt) + (c + d x) dt; scalars broadcast."""
        if dimension is None:
            dimension = max(
                np.atleast_1d(np.asarray(v, dtype=float)).shape[0]
                for v in (a, b, c, d)
            )
        return SchemeField(kind="diag-affine", dimension=dimension,
                           a=a, b=b, c=c, d=d)

    @staticmethod
    def from_update(update: Callable, dimension: int) -> "SchemeField":
        return SchemeField(kind="raw", dimension=dimension, update=update)

    @staticmethod
    def walk(dimension: int) -> "SchemeField":
        """F = y: the plain random walk, innovations added unscaled."""
        return SchemeField.from_update(lambda x, dt, y: y, dimension)

    @staticmethod
    def zero(dimension: int) -> "SchemeField":
        """F = 0: the frozen scheme."""
        return SchemeField.from_update(lambda x, dt, y: x * 0.0 + y * 0.0,
                                       dimension)

    def apply_batch(self, x, dt: float, y) -> np.ndarray:
        """F(x, dt, y) with x and y broadcasting on the trailing axis."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dimension:
            raise DimensionMismatch(
                f"innovation dimension {y.shape[-1]} vs field {self.dimension}"
            )
        if self.kind == "diag-affine":
            t1 = ((self.a + self.b * x) * y) * np.sqrt(dt)
            t2 = (self.c + self.d * x) * dt
            return t1 + t2
        out = np.asarray(self.update(x, dt, y), dtype=float)
        if out.shape[-1] != self.dimension:
            raise DimensionMismatch("update returned wrong trailing dimension")
        return out

    def step(self, x, dt: float, y) -> np.ndarray:
        return np.asarray(x, dtype=float) + self.apply_batch(x, dt, y)


@dataclass(frozen=True)
class DriverSource:
    """Produces the per-step unit innovation vector of a scheme.

    Four kinds, all driven by uniforms so plain and quasi Monte Carlo share
    one mapping:

    * ``product``: independent scalar laws per component; ``per_step``
      uniforms equal the dimension.
    * ``table``: one uniform selects a row of a finite outcome table; this
      covers joint finite designs (atoms are the rows) and spanning drivers
      (rows are the orthonormal-function vectors H_1..H_n at each atom).
    * ``gaussian``: independent standard normals via the inverse CDF.
    * ``walsh``: one uniform, looked up in the dyadic sign table of a
      Walsh driver vector; row count is 2^resolution.
    """

    kind: str
    dimension: int
    laws: tuple = ()
    table: np.ndarray | None = None
    probs: np.ndarray | None = None
    resolution: int = 0
    drivers: tuple = ()

    def __post_init__(self):
        if self.kind not in ("product", "table", "gaussian", "walsh"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.table is not None:
            t = np.ascontiguousarray(np.asarray(self.table, dtype=float))
            t.flags.writeable = False
            object.__setattr__(self, "table", t)
        if self.probs is not None:
            p = np.asarray(self.probs, dtype=float).copy()
            p.flags.writeable = False
            object.__setattr__(self, "probs", p)

    # -- constructors ------------------------------------------------------
    @staticmethod
    def product(laws: Sequence[IncrementLaw]) -> "DriverSource":
        laws = tuple(laws)
        if not laws:
            raise ValueError("need at least one component law")
        if any(law.kind == "lebesgue" for law in laws):
            raise ValueError("lebesgue components are not samplable directly")
        return DriverSource(kind="product", dimension=len(laws), laws=laws)

    @staticmethod
    def table_source(atoms, probs) -> "DriverSource":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        probs = np.asarray(probs, dtype=float)
        if atoms.shape[0] != probs.shape[0]:
            raise DimensionMismatch("one probability per outcome row")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be positive and sum to one")
        return DriverSource(kind="table", dimension=atoms.shape[1],
                            table=atoms, probs=probs)

    @staticmethod
    def span(law: IncrementLaw, basis: OrthonormalSystem,
             n_drivers: int) -> "DriverSource":
        """Innovation = (H_1(xi), ..., H_n(xi)) for one finite scalar xi."""
        if law.kind != "finite":
            raise ValueError("spanning source needs a finite law")
        if basis.law != law:
            raise ValueError("basis was not built over this law")
        if not 1 <= n_drivers < basis.cardinality:
            raise DimensionMismatch(
                f"n_drivers {n_drivers} outside 1..{basis.cardinality - 1}"
            )
        atoms, wts = law.nodes_weights()
        hmat = basis.eval_matrix(atoms)
        return DriverSource.table_source(hmat[1 : n_drivers + 1].T, wts)

    @staticmethod
    def gaussian(dimension: int) -> "DriverSource":
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        return DriverSource(kind="gaussian", dimension=dimension)

    @staticmethod
    def walsh(drivers: Sequence[WalshIndex]) -> "DriverSource":
        drivers = tuple(drivers)
        if not drivers or any(not d.factors for d in drivers):
            raise ValueError("need non-constant Walsh driver indices")
        resolution = max(d.max_factor for d in drivers)
        table = np.stack(
            [walsh_block_signs(d, resolution) for d in drivers], axis=1
        ).astype(float)
        return DriverSource(kind="walsh", dimension=len(drivers),
                            table=table, resolution=resolution,
                            drivers=drivers)

    # -- sampling ----------------------------------------------------------
    @property
    def per_step(self) -> int:
        """Uniforms consumed per time step."""
        return self.dimension if self.kind in ("product", "gaussian") else 1

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms (..., per_step) to innovations (..., dimension)."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.per_step:
            raise DimensionMismatch(
                f"need {self.per_step} uniforms per step, got {u.shape[-1]}"
            )
        if self.kind == "gaussian":
            return ndtri(u)
        if self.kind == "product":
            cols = []
            for j, law in enumerate(self.laws):
                atoms, wts = law.nodes_weights()
                if law.kind == "gaussian":
                    cols.append(ndtri(u[..., j]) * np.sqrt(law.variance))
                else:
                    edges = np.cumsum(wts)
                    idx = np.minimum(
                        np.searchsorted(edges, u[..., j], side="right"),
                        len(atoms) - 1,
                    )
                    cols.append(atoms[idx])
            return np.stack(cols, axis=-1)
        if self.kind == "walsh":
            nblocks = self.table.shape[0]
            idx = np.minimum(
                np.floor(u[..., 0] * nblocks).astype(np.int64), nblocks - 1
            )
            return self.table[idx]
        edges = np.cumsum(self.probs)
        idx = np.minimum(
            np.searchsorted(edges, u[..., 0], side="right"),
            self.table.shape[0] - 1,
        )
        return self.table[idx]

    def block_indices(self, u: np.ndarray) -> np.ndarray:
        """Outcome row per uniform, for the table-lookup fast path."""
        u = np.asarray(u, dtype=float)
        if self.kind == "walsh":
            nblocks = self.table.shape[0]
            return np.minimum(np.floor(u * nblocks).astype(np.int64),
                              nblocks - 1)
        if self.kind == "table":
            edges = np.cumsum(self.probs)
            return np.minimum(np.searchsorted(edges, u, side="right"),
                              self.table.shape[0] - 1)
        raise ValueError(f"no outcome rows for kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.from_uniforms(rng.random((size, self.per_step)))

    # -- exact description -------------------------------------------------
    def outcomes(self) -> tuple[np.ndarray, np.ndarray]:
        """Full outcome table (rows, dimension) with probabilities.

        Raises for the Gaussian kind, which has no finite description.
        """
        if self.kind == "gaussian":
            raise ValueError("gaussian innovations are not enumerable")
        if self.kind == "product":
            grids, pgrids = [], []
            for law in self.laws:
                if law.kind != "finite":
                    raise ValueError("only finite components enumerate")
                atoms, wts = law.nodes_weights()
                grids.append(atoms)
                pgrids.append(wts)
            mesh = np.meshgrid(*grids, indexing="ij")
            rows = np.stack([m.ravel() for m in mesh], axis=-1)
            probs = pgrids[0]
            for p in pgrids[1:]:
                probs = np.outer(probs, p).ravel()
            return rows, probs
        if self.kind == "walsh":
            n = self.table.shape[0]
            return self.table, np.full(n, 1.0 / n)
        return self.table, self.probs

    def mean(self) -> np.ndarray:
        if self.kind == "gaussian":
            return np.zeros(self.dimension)
        rows, probs = self.outcomes()
        return probs @ rows

    def covariance(self) -> np.ndarray:
        if self.kind == "gaussian":
            return np.eye(self.dimension)
        rows, probs = self.outcomes()
        m = probs @ rows
        centered = rows - m
        return (centered * probs[:, None]).T @ centered

    def third_moments(self) -> np.ndarray:
        """Raw tensor E[y_i y_j y_k]; all zeros for the standard Gaussian."""
        if self.kind == "gaussian":
            return np.zeros((self.dimension,) * 3)
        rows, probs = self.outcomes()
        return np.einsum("r,ri,rj,rk->ijk", probs, rows, rows, rows)


@dataclass(frozen=True)
class Path:
    """Trajectory of one scheme run with its realized innovations."""

    times: np.ndarray        # (steps + 1,)
    states: np.ndarray       # (steps + 1, dimension)
    innovations: np.ndarray  # (steps, dimension)

    def __post_init__(self):
        for name in ("times", "states", "innovations"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.states.shape[0] != self.times.shape[0]:
            raise DimensionMismatch("one state row per time")
        if self.innovations.shape[0] != self.times.shape[0] - 1:
            raise DimensionMismatch("one innovation row per step")

    @property
    def n_steps(self) -> int:
        return self.innovations.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def replay(self, field: SchemeField) -> np.ndarray:
        """Re-run the stored innovations through ``field``.

        Returns the recomputed state array; equality with ``states``
        certifies that the path belongs to the scheme.
        """
        out = np.empty_like(self.states)
        out[0] = self.states[0]
        for k in range(self.n_steps):
            dt = self.times[k + 1] - self.times[k]
            out[k + 1] = field.step(out[k], dt, self.innovations[k])
        return out

    def to_csv(self, target) -> None:
        """Write rows t,x1,...,xn with 17 significant digits."""
        close = False
        if isinstance(target, (str, bytes)):
            fh = open(target, "w")
            close = True
        else:
            fh = target
        try:
            cols = ",".join(f"x{j + 1}" for j in range(self.dimension))
            fh.write(f"t,{cols}\n")
            for t, row in zip(self.times, self.states):
                vals = ",".join(f"{v:.17g}" for v in row)
                fh.write(f"{t:.17g},{vals}\n")
        finally:
            if close:
                fh.close()

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def simulate_path(field: SchemeField, source: DriverSource, x0,
                  horizon: float, n_steps: int,
                  rng: np.random.Generator | int) -> Path:
    """Run one seeded trajectory over [0, horizon] in n_steps steps."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if field.dimension != source.dimension:
        raise DimensionMismatch("field and source dimensions differ")
    x0 = np.broadcast_to(np.asarray(x0, dtype=float),
                         (field.dimension,)).copy()
    dt = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    states = np.empty((n_steps + 1, field.dimension))
    innovations = np.empty((n_steps, field.dimension))
    states[0] = x0
    for k in range(n_steps):
        y = source.sample(rng, 1)[0]
        innovations[k] = y
        states[k + 1] = field.step(states[k], dt, y)
        if not np.all(np.isfinite(states[k + 1])):
            raise NonFiniteState(f"non-finite state at step {k + 1}")
        if np.max(np.abs(states[k + 1])) > EXPLOSION_LIMIT:
            raise ExplosionGuard(
                f"|state| exceeded {EXPLOSION_LIMIT:g} at step {k + 1}"
            )
    return Path(times=times, states=states, innovations=innovations)


def state_keys(states: np.ndarray) -> np.ndarray:
    """Integer keys identifying states up to ~2^-40 relative difference.

    Used to merge lattice nodes whose coordinates differ only by the
    float non-associativity of equivalent product orders.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    m, e = np.frexp(states)
    q = np.round(m * float(1 << _KEY_BITS)) + 0.0  # fold -0.0 into +0.0
    keys = np.empty(states.shape + (2,), dtype=np.int64)
    keys[..., 0] = q.astype(np.int64)
    keys[..., 1] = e
    return keys.reshape(states.shape[0], -1)


def _merge_nodes(states: np.ndarray, probs: np.ndarray,
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse near-duplicate states; returns (states, probs, inverse)."""
    keys = state_keys(states)
    uniq, first, inverse = np.unique(
        keys, axis=0, return_index=True, return_inverse=True
    )
    inverse = inverse.reshape(-1)
    merged = np.zeros(uniq.shape[0])
    np.add.at(merged, inverse, probs)
    return states[first], merged, inverse


def enumerate_terminal(field: SchemeField, source: DriverSource, x0,
                       horizon: float, n_steps: int,
                       node_budget: int = DEFAULT_NODE_BUDGET,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Exact terminal distribution of an enumerable scheme.

    Expands every outcome at every step and merges coinciding nodes, so
    recombining schemes stay polynomial in the step count.  Raises
    NodeBudgetExceeded once the frontier would pass ``node_budget``;
    coarser steps or a smaller outcome table keep the frontier in budget.
    """
    rows, q = source.outcomes()
    x = np.atleast_2d(
        np.broadcast_to(np.asarray(x0, dtype=float), (field.dimension,))
    ).astype(float)
    probs = np.ones(1)
    dt = horizon / n_steps
    for _ in range(n_steps):
        nxt = field.step(x[:, None, :], dt, rows[None, :, :])
        x = nxt.reshape(-1, field.dimension)
        probs = (probs[:, None] * q[None, :]).ravel()
        x, probs, _ = _merge_nodes(x, probs)
        if x.shape[0] > node_budget:
            raise NodeBudgetExceeded(
                f"lattice frontier {x.shape[0]} exceeds budget {node_budget}"
            )
    return x, probs


def expectation_terminal(field: SchemeField, source: DriverSource, x0,
                         horizon: float, n_steps: int, payoff,
                         node_budget: int = DEFAULT_NODE_BUDGET) -> float:
    """Exact E[payoff(X_N)] by terminal enumeration."""
    states, probs = enumerate_terminal(
        field, source, x0, horizon, n_steps, node_budget
    )
    vals = np.asarray(payoff(states), dtype=float)
    return float(np.dot(probs, vals))

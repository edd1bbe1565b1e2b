"""Named laws, driver designs, fields, payoffs, and experiment presets.

Everything the command line can reference by id lives here, so configs
stay declarative and the same objects are reusable from Python.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .basis import IncrementLaw, gram_schmidt_basis, walsh_driver_vector
from .errors import ConfigError
from .polynomials import Polynomial
from .scheme import DriverSource, SchemeField

__all__ = [
    "law",
    "design_120",
    "source",
    "field",
    "payoff",
    "payoff_polynomial",
    "gbm_reference",
    "preset",
    "PRESETS",
]


def law(name: str) -> IncrementLaw:
    """Unit-variance scalar increment laws by id."""
    if name == "bernoulli":
        return IncrementLaw.bernoulli()
    if name == "trinomial":
        a = np.sqrt(1.5)
        return IncrementLaw.uniform_atoms([-a, 0.0, a])
    if name == "gaussian":
        return IncrementLaw.gaussian(1.0)
    if name == "lebesgue":
        return IncrementLaw.lebesgue_unit()
    raise ConfigError(f"unknown law id {name!r}")


def design_120() -> DriverSource:
    """Three-point planar design: atoms sqrt(2) (cos t_a, sin t_a) at
    120-degree spacing, equal weights.

    Mean zero and identity covariance hold exactly; the third-moment
    tensor cannot vanish for any 3-atom planar design, and here its
    max-norm distance from the Gaussian is sqrt(2)/2.
    """
    angles = np.pi / 2 + 2.0 * np.pi * np.arange(3) / 3.0
    atoms = np.sqrt(2.0) * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return DriverSource.table_source(atoms, np.full(3, 1.0 / 3.0))


def source(name: str, dimension: int = 1) -> DriverSource:
    """Driver sources by id.

    ``bernoulli``, ``trinomial``, ``gaussian`` build independent
    components; ``trinomial-3pt-120deg`` is the planar three-point design;
    ``walsh-<n>`` uses the first n entries of the Walsh driver vector.
    """
    if name in ("bernoulli", "trinomial"):
        return DriverSource.product([law(name)] * dimension)
    if name == "gaussian":
        return DriverSource.gaussian(dimension)
    if name == "trinomial-3pt-120deg":
        if dimension != 2:
            raise ConfigError("trinomial-3pt-120deg is a planar design")
        return design_120()
    if name.startswith("walsh-"):
        try:
            n = int(name.split("-", 1)[1])
        except ValueError:
            raise ConfigError(f"bad walsh source id {name!r}") from None
        if n != dimension:
            raise ConfigError(
                f"walsh source {name!r} fixes dimension {n}, got {dimension}"
            )
        return DriverSource.walsh(walsh_driver_vector(n))
    raise ConfigError(f"unknown source id {name!r}")


def field(name: str, dimension: int = 1, sigma=1.0, mu=0.0) -> SchemeField:
    """Scheme update maps by id.

    ``em-gbm``: multiplicative Euler step, volatility sigma and drift mu
    per component.  ``em-identity``: additive unit volatility, drift mu.
    ``walk``: plain additive walk, innovations unscaled.
    """
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (dimension,))
    drift = np.broadcast_to(np.asarray(mu, dtype=float), (dimension,))
    if name == "em-gbm":
        return SchemeField.diag_affine(a=0.0, b=sig, c=0.0, d=drift,
                                       dimension=dimension)
    if name == "em-identity":
        return SchemeField.diag_affine(a=sig, b=0.0, c=drift, d=0.0,
                                       dimension=dimension)
    if name == "walk":
        return SchemeField.walk(dimension)
    raise ConfigError(f"unknown field id {name!r}")


def payoff_polynomial(name: str, dimension: int = 1) -> Polynomial:
    """Polynomial form of a payoff, for the exact smooth-flow machinery."""
    if name == "quad":
        terms = {}
        for i in range(dimension):
            expo = [0] * dimension
            expo[i] = 4
            terms[tuple(expo)] = 1.0
        return Polynomial(dimension, terms)
    if name == "linear":
        terms = {}
        for i in range(dimension):
            expo = [0] * dimension
            expo[i] = 1
            terms[tuple(expo)] = 1.0
        return Polynomial(dimension, terms)
    raise ConfigError(f"payoff {name!r} has no polynomial form")


def payoff(name: str, dimension: int = 1, strike: float = 1.0,
           sharpness: float = 0.2, weights=None):
    """Vectorized payoffs on terminal states (..., dimension) -> (...).

    ``quad``: sum of fourth powers (quartic test function).
    ``linear``: sum of coordinates, or ``weights`` dot x.
    ``smooth-call``: softplus call sharpness*log(1+exp((w.x - strike)/
    sharpness)), a smooth option-like profile.
    ``mean-square-100d``: average of squared coordinates (any dimension).
    """
    if weights is None:
        w = np.ones(dimension)
    else:
        w = np.broadcast_to(np.asarray(weights, dtype=float), (dimension,))
    if name == "quad":
        return lambda x: np.sum(np.asarray(x, dtype=float) ** 4, axis=-1)
    if name == "linear":
        return lambda x: np.asarray(x, dtype=float) @ w
    if name == "smooth-call":
        h = float(sharpness)

        def call(x):
            z = (np.asarray(x, dtype=float) @ w - strike) / h
            return h * np.logaddexp(0.0, z)

        return call
    if name == "mean-square-100d":
        return lambda x: np.mean(np.asarray(x, dtype=float) ** 2, axis=-1)
    raise ConfigError(f"unknown payoff id {name!r}")


def gbm_reference(pay, x0, sigma, mu, horizon: float,
                  nodes: int = 200) -> float:
    """E[pay(Z_T)] for independent log-normal coordinates, by quadrature.

    Z_T,i = x0_i exp((mu_i - sigma_i^2 / 2) T + sigma_i sqrt(T) g_i) with
    independent standard normal g_i; tensorized Gauss-Hermite integration
    is exact to machine precision for smooth payoffs.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.shape[0]
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    drift = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
    z, wts = hermegauss(nodes)
    wts = wts / wts.sum()
    axes = []
    for i in range(n):
        axes.append(
            x0[i] * np.exp((drift[i] - 0.5 * sig[i] ** 2) * horizon
                           + sig[i] * np.sqrt(horizon) * z)
        )
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = np.asarray(pay(pts), dtype=float)
    weight = wts
    for _ in range(n - 1):
        weight = np.outer(weight, wts).ravel()
    return float(np.dot(weight, vals))


# --------------------------------------------------------------------------
# experiment presets (flat key=value maps, the CLI's native config format)
# --------------------------------------------------------------------------
PRESETS: dict = {
    "fujita-demo": {
        "command": "decompose",
        "mode": "walk1d",
        "law": "bernoulli",
        "truncation": "2",
        "position": "0.3",
        "payoff": "quad",
        "dimension": "1",
    },
    "solve-quartic": {
        "command": "solve",
        "field": "em-identity",
        "source": "bernoulli",
        "payoff": "quad",
        "dimension": "1",
        "sigma": "1.0",
        "mu": "0.0",
        "x0": "0.0",
        "horizon": "1.0",
        "n_steps": "8",
    },
    "simulate-gbm": {
        "command": "simulate",
        "field": "em-gbm",
        "source": "gaussian",
        "dimension": "1",
        "sigma": "0.3",
        "mu": "0.05",
        "x0": "1.0",
        "horizon": "1.0",
        "n_steps": "64",
    },
    "consistency-quartic": {
        "command": "converge",
        "experiment": "consistency",
        "field": "em-identity",
        "source": "bernoulli",
        "payoff": "quad",
        "dimension": "1",
        "sigma": "1.0",
        "mu": "0.0",
        "x0": "0.0",
        "horizon": "1.0",
        "n_grid": "16,32,64,128",
    },
    "order-bernoulli-gbm": {
        "command": "converge",
        "experiment": "weak-order",
        "field": "em-gbm",
        "source": "bernoulli",
        "payoff": "smooth-call",
        "dimension": "1",
        "sigma": "0.35",
        "mu": "0.05",
        "x0": "1.0",
        "strike": "1.05",
        "sharpness": "0.2",
        "weights": "1.0",
        "horizon": "1.0",
        "n_grid": "8,12,16,24,32,48,64",
        "method": "exact",
    },
    "order-design-2d": {
        "command": "converge",
        "experiment": "weak-order",
        "field": "em-gbm",
        "source": "trinomial-3pt-120deg",
        "payoff": "smooth-call",
        "dimension": "2",
        "sigma": "0.3,0.3",
        "mu": "0.0,0.0",
        "x0": "1.0,1.0",
        "strike": "1.3",
        "sharpness": "0.3",
        "weights": "1.0,0.4",
        "horizon": "1.0",
        "n_grid": "16,24,32,48,64,96,128",
        "method": "exact",
    },
    "estimate-mean-square-100d": {
        "command": "estimate",
        "field": "em-identity",
        "source": "walsh-100",
        "payoff": "mean-square-100d",
        "dimension": "100",
        "sigma": "1.0",
        "mu": "0.0",
        "x0": "0.0",
        "horizon": "1.0",
        "n_steps": "16",
        "n_paths": "16384",
        "method": "sobol",
        "n_randomizations": "8",
        "reference": "1.0",
    },
    "complete-market-3pt": {
        "command": "complete-market",
        "source": "trinomial-3pt-120deg",
        "payoff": "smooth-call",
        "dimension": "2",
        "sigma": "0.3,0.3",
        "mu": "0.0,0.0",
        "x0": "1.0,1.0",
        "strike": "1.3",
        "sharpness": "0.3",
        "weights": "1.0,0.4",
        "horizon": "1.0",
        "n_steps": "8",
        "floor_starts": "12",
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}"
        )
    return dict(PRESETS[name])

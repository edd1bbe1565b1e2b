"""Sparse multivariate polynomials with exact derivatives.

Used wherever derivatives must be exact rather than finite-differenced:
consistency checks of the discrete generator and closed-form smooth
solutions of polynomial terminal-value problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = ["Polynomial"]


def _clean(n_vars: int, terms: Mapping[tuple, float]) -> dict:
    out = {}
    for expo, coeff in terms.items():
        expo = tuple(int(e) for e in expo)
        if len(expo) != n_vars:
            raise ValueError(f"exponent {expo} has wrong arity for n_vars={n_vars}")
        if any(e < 0 for e in expo):
            raise ValueError(f"negative exponent in {expo}")
        c = float(coeff)
        if c != 0.0:
            out[expo] = out.get(expo, 0.0) + c
    return {e: c for e, c in out.items() if c != 0.0}


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in ``n_vars`` variables, stored as {exponent tuple: coeff}."""

    n_vars: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", _clean(self.n_vars, self.terms))

    @staticmethod
    def constant(value: float, n_vars: int = 1) -> "Polynomial":
        return Polynomial(n_vars, {(0,) * n_vars: value})

    @staticmethod
    def coordinate(i: int, n_vars: int) -> "Polynomial":
        expo = [0] * n_vars
        expo[i] = 1
        return Polynomial(n_vars, {tuple(expo): 1.0})

    @staticmethod
    def from_univariate(coeffs, n_vars: int = 1, var: int = 0) -> "Polynomial":
        """Build from ascending 1-d coefficients c0 + c1 x + c2 x^2 + ..."""
        terms = {}
        for k, c in enumerate(coeffs):
            expo = [0] * n_vars
            expo[var] = k
            terms[tuple(expo)] = float(c)
        return Polynomial(n_vars, terms)

    @property
    def total_degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at points with trailing axis of length n_vars."""
        pts = np.asarray(x, dtype=float)
        scalar_in = pts.ndim == 1 if self.n_vars > 1 else pts.ndim == 0
        if self.n_vars == 1 and pts.ndim == 0:
            pts = pts.reshape(1)
        if pts.shape[-1] != self.n_vars:
            raise ValueError(f"expected trailing axis {self.n_vars}, got {pts.shape}")
        acc = np.zeros(pts.shape[:-1], dtype=float)
        for expo, coeff in self.terms.items():
            term = np.full(pts.shape[:-1], coeff)
            for i, e in enumerate(expo):
                if e:
                    term = term * pts[..., i] ** e
            acc = acc + term
        return float(acc) if scalar_in else acc

    def derivative(self, i: int) -> "Polynomial":
        terms = {}
        for expo, coeff in self.terms.items():
            e = expo[i]
            if e == 0:
                continue
            new = list(expo)
            new[i] = e - 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + coeff * e
        return Polynomial(self.n_vars, terms)

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        terms = dict(self.terms)
        for expo, coeff in other.terms.items():
            terms[expo] = terms.get(expo, 0.0) + coeff
        return Polynomial(self.n_vars, terms)

    def __sub__(self, other) -> "Polynomial":
        return self + (self._coerce(other) * -1.0)

    def __mul__(self, other) -> "Polynomial":
        if np.isscalar(other):
            return Polynomial(
                self.n_vars, {e: c * float(other) for e, c in self.terms.items()}
            )
        other = self._coerce(other)
        terms = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Polynomial(self.n_vars, terms)

    __rmul__ = __mul__

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.n_vars != self.n_vars:
                raise ValueError("mixed arities")
            return other
        return Polynomial.constant(float(other), self.n_vars)

"""Numpy reference implementations of the hot path-stepping kernels.

The compiled extension mirrors these expression for expression; both
evaluate

    x_new = (x + ((a + b*x)*y)*s) + ((c + d*x)*dt)

with the same association, so the two backends agree bit for bit on
IEEE-754 hardware (the extension is built with FP contraction off).
"""

from __future__ import annotations

import numpy as np


def affine_step(x: np.ndarray, y: np.ndarray,
                a: np.ndarray, b: np.ndarray,
                c: np.ndarray, d: np.ndarray,
                s: float, dt: float) -> None:
    """Advance paths one step in place.

    x: (paths, dim) current states, overwritten.
    y: (paths, dim) unit innovations for this step.
    a, b, c, d: (dim,) coefficients of diag(a + b x) and drift c + d x.
    s: sqrt(dt).
    """
    t1 = ((a + b * x) * y) * s
    t2 = (c + d * x) * dt
    np.add(x + t1, t2, out=x)


def advance_paths_affine(x: np.ndarray, ys: np.ndarray,
                         a: np.ndarray, b: np.ndarray,
                         c: np.ndarray, d: np.ndarray,
                         s: float, dt: float) -> None:
    """Run all steps of ys (steps, paths, dim) through affine_step."""
    for k in range(ys.shape[0]):
        affine_step(x, ys[k], a, b, c, d, s, dt)

import numpy as np
import pytest

from chaostep.polynomials import Polynomial


def test_constant_and_coordinate():
    c = Polynomial.constant(3.5, 2)
    assert c(np.array([1.0, 2.0])) == 3.5
    x1 = Polynomial.coordinate(1, 2)
    assert x1(np.array([4.0, 7.0])) == 7.0


def test_from_univariate_matches_polyval():
    rng = np.random.default_rng(11)
    for _ in range(25):
        coeffs = rng.normal(size=rng.integers(1, 6))
        p = Polynomial.from_univariate(coeffs)
        xs = rng.normal(size=8)
        expect = np.polynomial.polynomial.polyval(xs, coeffs)
        got = p(xs[:, None])
        assert np.allclose(got, expect, atol=1e-12)


def test_arithmetic_and_degree():
    x = Polynomial.coordinate(0, 2)
    y = Polynomial.coordinate(1, 2)
    p = (x + y) * (x - y)
    pts = np.array([[2.0, 1.0], [0.5, -3.0]])
    assert np.allclose(p(pts), pts[:, 0] ** 2 - pts[:, 1] ** 2)
    assert p.total_degree == 2
    assert (2.0 * x).total_degree == 1


def test_derivative_exact():
    rng = np.random.default_rng(5)
    x = Polynomial.coordinate(0, 2)
    y = Polynomial.coordinate(1, 2)
    p = x * x * y + 3.0 * y * y * y
    dx = p.derivative(0)
    dy = p.derivative(1)
    pts = rng.normal(size=(10, 2))
    assert np.allclose(dx(pts), 2.0 * pts[:, 0] * pts[:, 1])
    assert np.allclose(dy(pts), pts[:, 0] ** 2 + 9.0 * pts[:, 1] ** 2)


def test_vectorized_trailing_axis():
    p = Polynomial.coordinate(0, 1)
    grid = np.arange(12.0).reshape(3, 4, 1)
    out = p(grid)
    assert out.shape == (3, 4)
    assert np.allclose(out, grid[..., 0])


def test_zero_terms_dropped():
    x = Polynomial.coordinate(0, 1)
    z = x - x
    assert z.terms == {}
    assert z(np.array([2.0])) == 0.0

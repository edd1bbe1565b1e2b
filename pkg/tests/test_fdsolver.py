import io

import numpy as np
import pytest

from chaostep.basis import IncrementLaw
from chaostep.errors import GridMismatch, UnsupportedTestFunction
from chaostep.fdsolver import (
    PolynomialFlow,
    backward_solve,
    consistency_defect,
    error_bound_decomposition,
    feynman_kac_source,
)
from chaostep.polynomials import Polynomial
from chaostep.scheme import DriverSource, SchemeField


def bernoulli_source(dim=1):
    return DriverSource.product([IncrementLaw.bernoulli()] * dim)


def scaled_walk(dim=1):
    return SchemeField.diag_affine(a=1.0, b=0.0, c=0.0, d=0.0, dimension=dim)


def quartic_flow(horizon=1.0):
    x = Polynomial.coordinate(0, 1)
    return PolynomialFlow(scaled_walk(), horizon, x * x * x * x)


def test_flow_heat_solution_quartic():
    # E[(x + W_tau)^4] = x^4 + 6 x^2 tau + 3 tau^2 for Brownian variance tau
    flow = quartic_flow()
    for t, x in ((0.0, 1.5), (0.25, -0.8), (0.9, 0.0)):
        tau = 1.0 - t
        expect = x ** 4 + 6 * x ** 2 * tau + 3 * tau ** 2
        assert flow(t, np.array([x])) == pytest.approx(expect, rel=1e-12)


def test_flow_requires_diag_affine():
    x = Polynomial.coordinate(0, 1)
    with pytest.raises(UnsupportedTestFunction):
        PolynomialFlow(SchemeField.walk(1), 1.0, x)


def test_backward_solve_root_is_expectation():
    # E[(S_N / sqrt(N))^4] for N coin flips: dt^2 (3 N^2 - 2 N)
    sol = backward_solve(scaled_walk(), bernoulli_source(), [0.0], 1.0, 8,
                         lambda s: s[:, 0] ** 4)
    assert sol.root_value == pytest.approx((3 * 64 - 2 * 8) / 64, abs=1e-12)
    assert sol.residual_max() < 1e-12


def test_backward_solve_interior_lookup():
    sol = backward_solve(scaled_walk(), bernoulli_source(), [0.0], 1.0, 4,
                         lambda s: s[:, 0] ** 2)
    # E[x^2 at terminal | X_k = x] = x^2 + (remaining steps) dt
    x = 2 * np.sqrt(0.25)
    assert sol.value(2, [x]) == pytest.approx(x ** 2 + 0.5, abs=1e-12)
    with pytest.raises(GridMismatch):
        sol.value(2, [0.1234])


def test_feynman_kac_source_reproduces_smooth_function():
    # any smooth u solves the recursion once its own defect is the source
    rng = np.random.default_rng(4)
    field = SchemeField.diag_affine(a=0.4, b=0.1, c=0.05, d=-0.2,
                                    dimension=1)
    src = DriverSource.product(
        [IncrementLaw.uniform_atoms([-np.sqrt(1.5), 0.0, np.sqrt(1.5)])]
    )
    coeffs = rng.normal(size=5)

    def u(t, x):
        v = np.asarray(x)[..., 0]
        return (coeffs[0] + coeffs[1] * v + coeffs[2] * v ** 2
                + coeffs[3] * v ** 3) * (1.0 + coeffs[4] * t)

    n = 6
    phi = feynman_kac_source(u, field, src, 1.0 / n)
    sol = backward_solve(field, src, [0.6], 1.0, n,
                         lambda s: u(1.0, s), source_term=phi)
    assert sol.root_value == pytest.approx(u(0.0, np.array([0.6])),
                                           abs=1e-12)
    assert sol.residual_max() < 1e-12


def test_consistency_defect_exact_rate():
    # quartic heat solution under the scaled coin walk: defect is 2 dt
    flow = quartic_flow()
    for n in (16, 32, 64):
        d = consistency_defect(flow, scaled_walk(), bernoulli_source(),
                               [0.0], 1.0, n)
        assert d == pytest.approx(2.0 / n, rel=1e-6)


def test_error_bound_identity_and_bound():
    flow = quartic_flow()
    n = 8
    sol = backward_solve(scaled_walk(), bernoulli_source(), [0.0], 1.0, n,
                         lambda s: s[:, 0] ** 4)
    eb = error_bound_decomposition(flow, scaled_walk(), bernoulli_source(),
                                   [0.0], 1.0, n)
    direct = float(flow(0.0, np.array([0.0]))) - sol.root_value
    assert eb.exact_error == pytest.approx(direct, abs=1e-12)
    assert eb.bound >= abs(direct) - 1e-12
    assert eb.levels.shape == (n,)


def test_lattice_csv_round_trip():
    sol = backward_solve(scaled_walk(), bernoulli_source(), [0.0], 1.0, 3,
                         lambda s: s[:, 0])
    buf = io.StringIO()
    sol.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,x1,u"
    total_nodes = sum(s.shape[0] for s in sol.slices)
    assert len(lines) == 1 + total_nodes
    root = lines[1].split(",")
    assert float(root[0]) == 0.0
    assert float(root[2]) == pytest.approx(sol.root_value)

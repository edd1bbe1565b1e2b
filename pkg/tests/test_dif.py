import numpy as np
import pytest

from chaostep.basis import (
    IncrementLaw,
    full_walsh_indices,
    gram_schmidt_basis,
    walsh_driver_vector,
    walsh_eval,
)
from chaostep.dif import (
    StatePoint,
    decompose_multidim,
    decompose_scheme,
    decompose_spanning,
    decompose_walk_1d,
    decompose_weak_scheme,
    spanning_defect,
)
from chaostep.errors import (
    DimensionMismatch,
    OverlappingIndices,
    TruncationTooSmall,
)
from chaostep.scheme import SchemeField


def centered_law(rng, size):
    atoms = np.sort(rng.normal(size=size) * 1.2)
    while np.min(np.diff(atoms)) < 5e-2:
        atoms = np.sort(rng.normal(size=size) * 1.2)
    w = rng.dirichlet(np.ones(size) * 3.0)
    atoms = atoms - np.dot(w, atoms)
    return IncrementLaw.finite_support(list(zip(atoms, w)))


def test_two_point_closed_form():
    # fair-coin walk: martingale coefficient is the symmetric difference
    # quotient, drift the symmetric mean minus the current value
    law = IncrementLaw.bernoulli()
    basis = gram_schmidt_basis(law, 2)
    f = lambda v: np.sin(v) + v ** 3
    w0 = 0.3
    dec = decompose_walk_1d(f, StatePoint(0, 0.0, [w0]), law, basis, 2)
    assert dec.martingale_coeffs[0] == pytest.approx(
        (f(w0 + 1) - f(w0 - 1)) / 2, abs=1e-14
    )
    assert dec.drift_part() == pytest.approx(
        (f(w0 + 1) + f(w0 - 1)) / 2 - f(w0), abs=1e-14
    )
    assert dec.correction_coeffs == {}
    for xi in (-1.0, 1.0):
        assert dec.reconstruct(xi) == pytest.approx(
            f(w0 + xi) - f(w0), abs=1e-14
        )


def test_walk_exhaustive_reconstruction_random():
    rng = np.random.default_rng(7)
    for _ in range(30):
        size = int(rng.integers(2, 6))
        law = centered_law(rng, size)
        basis = gram_schmidt_basis(law, size)
        coeffs = rng.normal(size=4)
        f = lambda v: coeffs[0] + coeffs[1] * v + coeffs[2] * v ** 2 \
            + coeffs[3] * np.cos(v)
        w0 = float(rng.normal())
        dec = decompose_walk_1d(f, StatePoint(0, 0.0, [w0]), law, basis, size)
        assert dec.exhaustive
        for atom in law.atoms:
            assert dec.reconstruct(atom) == pytest.approx(
                f(w0 + atom) - f(w0), abs=1e-10
            )


def test_truncation_drops_exactly_the_tail():
    # Parseval: the L2 norm of the truncation residual equals the norm of
    # the dropped coefficients
    rng = np.random.default_rng(19)
    law = centered_law(rng, 5)
    basis = gram_schmidt_basis(law, 5)
    f = lambda v: np.exp(0.3 * v) + v ** 3
    st = StatePoint(0, 0.0, [0.4])
    full = decompose_walk_1d(f, st, law, basis, 5)
    cut = decompose_walk_1d(f, st, law, basis, 3)
    atoms, w = law.nodes_weights()
    resid = np.array(
        [cut.reconstruct(a) - (f(0.4 + a) - f(0.4)) for a in atoms]
    )
    l2 = np.sqrt(np.dot(w, resid ** 2))
    dropped = np.sqrt(sum(full.correction_coeffs[l] ** 2 for l in (3, 4)))
    assert l2 == pytest.approx(dropped, abs=1e-12)


def test_walk_validation():
    law = IncrementLaw.bernoulli()
    basis = gram_schmidt_basis(law, 2)
    st = StatePoint(0, 0.0, [0.0])
    with pytest.raises(TruncationTooSmall):
        decompose_walk_1d(lambda v: v, st, law, basis, 1)
    shifted = IncrementLaw.finite_support([(0.0, 0.5), (1.0, 0.5)])
    shifted_basis = gram_schmidt_basis(shifted, 2)
    with pytest.raises(ValueError):
        decompose_walk_1d(lambda v: v, st, shifted, shifted_basis, 2)


def test_multidim_product_correction():
    # f(x, y) = xy at (1, 1) under two fair coins: increment loads one
    # unit on each driver and one on the pure product term
    law = IncrementLaw.bernoulli()
    basis = gram_schmidt_basis(law, 2)
    f = lambda t, p: p[..., 0] * p[..., 1]
    dec = decompose_multidim(
        f, StatePoint(0, 0.0, [1.0, 1.0]), [law, law], [basis, basis], 3
    )
    assert np.allclose(dec.martingale_coeffs, [1.0, 1.0], atol=1e-14)
    assert dec.drift_coeff == pytest.approx(0.0, abs=1e-14)
    assert dec.correction_coeffs[(1, 1)] == pytest.approx(1.0, abs=1e-14)
    assert dec.exhaustive
    for a in (-1.0, 1.0):
        for b in (-1.0, 1.0):
            truth = (1 + a) * (1 + b) - 1.0
            assert dec.reconstruct([a, b]) == pytest.approx(truth, abs=1e-13)


def test_multidim_random_reconstruction():
    rng = np.random.default_rng(23)
    for _ in range(10):
        laws = [centered_law(rng, int(rng.integers(2, 4))) for _ in range(2)]
        bases = [gram_schmidt_basis(law, len(law.atoms)) for law in laws]
        c = rng.normal(size=5)
        f = lambda t, p: (c[0] + c[1] * p[..., 0] + c[2] * p[..., 1]
                          + c[3] * p[..., 0] * p[..., 1]
                          + c[4] * np.sin(p[..., 0] + p[..., 1]))
        st = StatePoint(0, 0.0, rng.normal(size=2))
        full_deg = sum(len(law.atoms) - 1 for law in laws)
        dec = decompose_multidim(f, st, laws, bases, full_deg + 1)
        assert dec.exhaustive
        for a in laws[0].atoms:
            for b in laws[1].atoms:
                truth = f(1.0, st.state + np.array([a, b])) - f(0.0, st.state)
                assert dec.reconstruct([a, b]) == pytest.approx(
                    float(truth), abs=1e-10
                )


def test_scheme_reduces_to_walk_for_identity_update():
    law = IncrementLaw.bernoulli()
    basis = gram_schmidt_basis(law, 2)
    f = lambda t, p: p[..., 0] ** 2 + np.cos(p[..., 0])
    st = StatePoint(0, 0.0, [0.7])
    walk_dec = decompose_multidim(f, st, [law], [basis], 2, dt=1.0)
    scheme_dec = decompose_scheme(
        f, st, SchemeField.walk(1), [law], [basis], 2, dt=1.0
    )
    assert np.allclose(scheme_dec.martingale_coeffs, walk_dec.martingale_coeffs)
    assert scheme_dec.drift_coeff == pytest.approx(walk_dec.drift_coeff)


def test_scheme_euler_coefficients():
    # linear payoff through an Euler step: the martingale coefficient is
    # sigma(x) sqrt(dt) scaled back by the unit variance, drift is mu(x)
    law = IncrementLaw.bernoulli()
    basis = gram_schmidt_basis(law, 2)
    field = SchemeField.diag_affine(a=0.0, b=0.5, c=0.0, d=0.1, dimension=1)
    f = lambda t, p: p[..., 0]
    x0 = 2.0
    dt = 0.25
    dec = decompose_scheme(
        f, StatePoint(0, 0.0, [x0]), field, [law], [basis], 2, dt
    )
    assert dec.martingale_coeffs[0] == pytest.approx(
        0.5 * x0 * np.sqrt(dt), abs=1e-14
    )
    assert dec.drift_coeff == pytest.approx(0.1 * x0, abs=1e-14)


def test_frozen_update_is_pure_drift():
    law = IncrementLaw.bernoulli()
    basis = gram_schmidt_basis(law, 2)
    f = lambda t, p: p[..., 0] ** 3 + t
    st = StatePoint(0, 0.0, [1.5])
    dec = decompose_scheme(
        f, st, SchemeField.zero(1), [law], [basis], 2, dt=0.5
    )
    assert np.allclose(dec.martingale_coeffs, 0.0, atol=1e-14)
    assert all(abs(v) < 1e-14 for v in dec.correction_coeffs.values())
    # increment reduces to the pure time shift of f
    assert dec.drift_part() == pytest.approx(0.5, abs=1e-14)


def test_spanning_complete_has_no_corrections():
    rng = np.random.default_rng(31)
    law = centered_law(rng, 3)
    basis = gram_schmidt_basis(law, 3)
    field = SchemeField.diag_affine(a=[1.0, 0.5], b=[0.1, 0.0],
                                    c=[0.0, 0.2], d=[0.05, 0.0], dimension=2)
    f = lambda t, p: np.sin(p[..., 0]) + p[..., 0] * p[..., 1]
    st = StatePoint(0, 0.0, [0.4, -0.2])
    dec = decompose_spanning(f, st, field, law, basis, n_drivers=2, dt=0.125)
    assert dec.correction_coeffs == {}
    assert spanning_defect(dec) == 0.0
    atoms, _ = law.nodes_weights()
    hmat = basis.eval_matrix(atoms)
    for i, atom in enumerate(atoms):
        nxt = field.step(st.state, 0.125, hmat[1:3, i])
        truth = f(0.125, nxt) - f(0.0, st.state)
        assert dec.reconstruct(atom) == pytest.approx(float(truth), abs=1e-12)


def test_spanning_incomplete_has_positive_defect():
    rng = np.random.default_rng(37)
    law = centered_law(rng, 5)
    basis = gram_schmidt_basis(law, 5)
    field = SchemeField.diag_affine(a=[1.0, 1.0], b=[0.0, 0.0],
                                    c=[0.0, 0.0], d=[0.0, 0.0], dimension=2)
    f = lambda t, p: np.cos(p[..., 0] + 0.5 * p[..., 1])
    st = StatePoint(0, 0.0, [0.0, 0.0])
    dec = decompose_spanning(f, st, field, law, basis, n_drivers=2, dt=0.25)
    assert dec.exhaustive
    assert spanning_defect(dec) > 1e-3


def test_weak_scheme_exact_on_blocks():
    drivers = walsh_driver_vector(2)
    resolution = max(d.max_factor for d in drivers)
    corr = [
        i for i in full_walsh_indices(resolution, include_constant=False)
        if i not in drivers
    ]
    field = SchemeField.diag_affine(a=[1.0, 0.5], b=[0.2, 0.0],
                                    c=[0.0, 0.1], d=[0.05, 0.0], dimension=2)
    f = lambda t, p: np.sin(p[..., 0]) + p[..., 0] * p[..., 1]
    st = StatePoint(0, 0.0, [0.4, -0.2])
    dec = decompose_weak_scheme(
        f, st, field, IncrementLaw.lebesgue_unit(), drivers, corr, dt=0.125
    )
    assert dec.exhaustive
    for block in range(1 << resolution):
        u = (block + 0.5) / (1 << resolution)
        y = np.array([walsh_eval(d, u) for d in drivers], dtype=float)
        truth = f(0.125, field.step(st.state, 0.125, y)) - f(0.0, st.state)
        assert dec.reconstruct(u) == pytest.approx(float(truth), abs=1e-12)


def test_weak_scheme_index_collisions_rejected():
    drivers = walsh_driver_vector(2)
    field = SchemeField.walk(2)
    st = StatePoint(0, 0.0, [0.0, 0.0])
    law = IncrementLaw.lebesgue_unit()
    with pytest.raises(OverlappingIndices):
        decompose_weak_scheme(
            lambda t, p: p[..., 0], st, field, law, drivers,
            [drivers[0]], dt=0.5
        )


def test_dimension_checks():
    law = IncrementLaw.bernoulli()
    basis = gram_schmidt_basis(law, 2)
    st = StatePoint(0, 0.0, [0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        decompose_multidim(lambda t, p: p[..., 0], st, [law], [basis], 2)

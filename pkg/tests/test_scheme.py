import io

import numpy as np
import pytest

from chaostep.basis import IncrementLaw, gram_schmidt_basis, walsh_driver_vector
from chaostep.errors import (
    DimensionMismatch,
    ExplosionGuard,
    NodeBudgetExceeded,
)
from chaostep.scheme import (
    DriverSource,
    Path,
    SchemeField,
    enumerate_terminal,
    expectation_terminal,
    simulate_path,
    state_keys,
)


def test_diag_affine_update():
    field = SchemeField.diag_affine(a=1.0, b=0.5, c=0.2, d=-0.1, dimension=1)
    x = np.array([2.0])
    y = np.array([1.0])
    dt = 0.25
    got = field.apply_batch(x, dt, y)
    expect = (1.0 + 0.5 * 2.0) * 1.0 * 0.5 + (0.2 - 0.1 * 2.0) * 0.25
    assert got[0] == pytest.approx(expect, abs=1e-15)


def test_apply_batch_broadcasts():
    field = SchemeField.diag_affine(a=[1.0, 2.0], b=0.0, c=0.0, d=0.0,
                                    dimension=2)
    y = np.ones((4, 3, 2))
    out = field.apply_batch(np.zeros(2), 1.0, y)
    assert out.shape == (4, 3, 2)
    assert np.allclose(out[..., 0], 1.0)
    assert np.allclose(out[..., 1], 2.0)


def test_product_source_sampling_frequencies():
    law = IncrementLaw.finite_support([(-1.0, 0.25), (0.5, 0.75)])
    src = DriverSource.product([law, law])
    rng = np.random.default_rng(0)
    draws = src.sample(rng, 40000)
    assert draws.shape == (40000, 2)
    freq = np.mean(draws[:, 0] == 0.5)
    assert abs(freq - 0.75) < 0.01


def test_gaussian_source_moments():
    src = DriverSource.gaussian(3)
    rng = np.random.default_rng(1)
    draws = src.sample(rng, 60000)
    assert np.max(np.abs(draws.mean(axis=0))) < 0.02
    assert np.max(np.abs(np.cov(draws.T) - np.eye(3))) < 0.03


def test_span_source_table_is_orthonormal():
    law = IncrementLaw.uniform_atoms([-1.0, 0.0, 1.0])
    basis = gram_schmidt_basis(law, 3)
    src = DriverSource.span(law, basis, 2)
    rows, probs = src.outcomes()
    assert rows.shape == (3, 2)
    # outcome columns carry mean zero and identity covariance by design
    assert np.allclose(probs @ rows, 0.0, atol=1e-14)
    assert np.allclose((rows * probs[:, None]).T @ rows, np.eye(2),
                       atol=1e-14)


def test_walsh_source_lookup_matches_blocks():
    src = DriverSource.walsh(walsh_driver_vector(5))
    assert src.per_step == 1
    assert src.table.shape == (2 ** src.resolution, 5)
    u = np.array([[0.0], [0.999999]])
    y = src.from_uniforms(u)
    assert np.array_equal(y[0], src.table[0])
    assert np.array_equal(y[1], src.table[-1])
    # uniform blocks give exact zero mean and identity covariance
    rep_mean = src.mean()
    assert np.max(np.abs(rep_mean)) == 0.0
    assert np.max(np.abs(src.covariance() - np.eye(5))) == 0.0


def test_source_third_moments_bernoulli_zero():
    src = DriverSource.product([IncrementLaw.bernoulli()] * 2)
    assert np.max(np.abs(src.third_moments())) == 0.0


def test_simulate_path_replay_and_csv():
    field = SchemeField.diag_affine(a=0.0, b=0.3, c=0.0, d=0.05, dimension=1)
    src = DriverSource.gaussian(1)
    path = simulate_path(field, src, [1.0], 1.0, 32, 9)
    assert path.n_steps == 32 and path.dimension == 1
    assert np.array_equal(path.replay(field), path.states)
    text = path.csv_text()
    lines = text.splitlines()
    assert lines[0] == "t,x1"
    assert len(lines) == 34
    # round trip at 17 significant digits is lossless
    parsed = np.array([float(line.split(",")[1]) for line in lines[1:]])
    assert np.array_equal(parsed, path.states[:, 0])


def test_simulate_seeded_reproducible():
    field = SchemeField.walk(2)
    src = DriverSource.product([IncrementLaw.bernoulli()] * 2)
    p1 = simulate_path(field, src, [0.0, 0.0], 4.0, 4, 123)
    p2 = simulate_path(field, src, [0.0, 0.0], 4.0, 4, 123)
    assert np.array_equal(p1.states, p2.states)


def test_explosion_guard():
    field = SchemeField.diag_affine(a=0.0, b=0.0, c=1e7, d=0.0, dimension=1)
    src = DriverSource.gaussian(1)
    with pytest.raises(ExplosionGuard):
        simulate_path(field, src, [0.0], 1.0, 4, 0)


def test_enumerate_terminal_binomial():
    field = SchemeField.walk(1)
    src = DriverSource.product([IncrementLaw.bernoulli()])
    states, probs = enumerate_terminal(field, src, [0.0], 4.0, 4)
    order = np.argsort(states[:, 0])
    assert np.array_equal(states[order, 0], [-4.0, -2.0, 0.0, 2.0, 4.0])
    assert np.allclose(probs[order] * 16, [1, 4, 6, 4, 1])


def test_enumeration_recombines_multiplicative_lattice():
    # GBM Euler factors commute, so the tree collapses to N + 1 nodes
    field = SchemeField.diag_affine(a=0.0, b=0.3, c=0.0, d=0.1, dimension=1)
    src = DriverSource.product([IncrementLaw.bernoulli()])
    states, probs = enumerate_terminal(field, src, [1.0], 1.0, 40)
    assert states.shape[0] == 41
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_enumeration_matches_direct_average():
    field = SchemeField.diag_affine(a=0.5, b=0.1, c=0.2, d=0.0, dimension=1)
    src = DriverSource.product(
        [IncrementLaw.uniform_atoms([-np.sqrt(1.5), 0.0, np.sqrt(1.5)])]
    )
    val = expectation_terminal(field, src, [0.3], 1.0, 6,
                               payoff=lambda s: np.cos(s[:, 0]))
    # brute force over all 3^6 outcome strings
    rows, q = src.outcomes()
    total = 0.0
    for digits in np.ndindex(*(3,) * 6):
        x = np.array([0.3])
        p = 1.0
        for dgt in digits:
            x = field.step(x, 1.0 / 6, rows[dgt])
            p *= q[dgt]
        total += p * np.cos(x[0])
    assert val == pytest.approx(total, abs=1e-12)


def test_node_budget_enforced():
    field = SchemeField.walk(2)
    src = DriverSource.product([IncrementLaw.bernoulli()] * 2)
    with pytest.raises(NodeBudgetExceeded):
        enumerate_terminal(field, src, [0.0, 0.0], 1.0, 12, node_budget=20)


def test_state_keys_merge_near_duplicates():
    base = np.array([[0.1 + 0.2, 0.5]])
    wiggle = base * (1 + 1e-15)
    assert np.array_equal(state_keys(base), state_keys(wiggle))
    far = base * (1 + 1e-9)
    assert not np.array_equal(state_keys(base), state_keys(far))


def test_path_shape_validation():
    with pytest.raises(DimensionMismatch):
        Path(times=np.arange(3.0), states=np.zeros((2, 1)),
             innovations=np.zeros((2, 1)))

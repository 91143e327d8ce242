from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsqd.errors import DimensionError, NumericalError, ValidationError
from fsqd.tensor import as_tensor, contract, eigh, lanczos_ground, svd, truncated_svd, truncation_rank


def _rand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _random_unitary(rng, d):
    q, r = np.linalg.qr(_rand(rng, d, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# -- contract ---------------------------------------------------------------


def test_contract_identity_on_vector():
    out = contract(np.eye(2), np.array([1.0, 0.0]), [(1, 0)])
    np.testing.assert_allclose(out, [1.0, 0.0])


def test_contract_matrix_product_with_identity():
    a = np.array([[1, 2], [3, 4]], dtype=complex)
    np.testing.assert_allclose(contract(a, np.eye(2), [(1, 0)]), a)


def test_contract_full_with_conjugate_is_frobenius_norm_squared():
    rng = np.random.default_rng(3)
    t = _rand(rng, 2, 3, 4)
    # Independent oracle: explicit elementwise loop.
    expected = 0.0
    for i, j, k in itertools.product(range(2), range(3), range(4)):
        expected += (t[i, j, k] * np.conj(t[i, j, k])).real
    out = contract(t, t.conj(), [(0, 0), (1, 1), (2, 2)])
    assert out.shape == ()
    assert abs(complex(out) - expected) < 1e-12 * expected


def test_contract_free_axis_order():
    rng = np.random.default_rng(0)
    a, b = _rand(rng, 2, 3, 5), _rand(rng, 5, 4, 3)
    out = contract(a, b, [(1, 2), (2, 0)])
    assert out.shape == (2, 4)
    ref = np.einsum("ijk,kmj->im", a, b)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_contract_extent_mismatch_raises():
    with pytest.raises(DimensionError):
        contract(np.ones((2, 3)), np.ones((4, 2)), [(1, 0)])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_contract_is_bilinear(seed, alpha):
    rng = np.random.default_rng(seed)
    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    lhs = contract(alpha * a, b, [(1, 0)])
    rhs = alpha * contract(a, b, [(1, 0)])
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))


def test_as_tensor_validates_shape():
    assert as_tensor(range(6), (2, 3)).shape == (2, 3)
    with pytest.raises(DimensionError):
        as_tensor(range(6), (4, 2))
    with pytest.raises(DimensionError):
        as_tensor([], (0,))


# -- svd --------------------------------------------------------------------


def test_svd_identity():
    np.testing.assert_allclose(svd(np.eye(4)).singular_values, [1, 1, 1, 1])


def test_svd_diagonal():
    np.testing.assert_allclose(svd(np.diag([3.0, 2.0, 1.0, 0.0])).singular_values, [3, 2, 1, 0], atol=1e-15)


def test_svd_random_reconstruction_and_isometries():
    rng = np.random.default_rng(7)
    m = _rand(rng, 4, 4)
    res = svd(m)
    assert np.linalg.norm(m - res.reconstruct()) < 1e-10 * np.linalg.norm(m)
    assert np.linalg.norm(res.left_unitary.conj().T @ res.left_unitary - np.eye(4)) < 1e-10
    assert np.linalg.norm(res.right_unitary @ res.right_unitary.conj().T - np.eye(4)) < 1e-10
    s = res.singular_values
    assert np.all(s >= 0) and np.all(np.diff(s) <= 0)


def test_svd_rejects_non_finite():
    with pytest.raises(ValidationError):
        svd(np.array([[np.nan, 0], [0, 1]]))


def test_svd_non_convergence_is_numerical_error(monkeypatch):
    import scipy.linalg

    def broken(*a, **k):
        raise np.linalg.LinAlgError("forced")

    monkeypatch.setattr(scipy.linalg, "svd", broken)
    with pytest.raises(NumericalError, match="Frobenius norm"):
        svd(np.eye(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_singular_values_unitarily_invariant(seed):
    rng = np.random.default_rng(seed)
    m = _rand(rng, 5, 3)
    u, v = _random_unitary(rng, 5), _random_unitary(rng, 3)
    np.testing.assert_allclose(svd(u @ m @ v).singular_values, svd(m).singular_values, atol=1e-10)


def test_truncation_rank_and_discarded_weight():
    s = np.array([1.0, 0.1, 0.01, 0.001])
    total = float(np.sum(s**2))
    assert truncation_rank(s, None, 0.0) == 4
    assert truncation_rank(s, 2, 0.0) == 2
    # Dropping the last two singular values loses (1e-4 + 1e-6) / total.
    assert truncation_rank(s, None, 1.02e-4 / total) == 2
    assert truncation_rank(np.zeros(3), None, 0.1) == 1
    u, sv, vh, disc = truncated_svd(np.diag(s), max_bond=2)
    assert sv.shape == (2,)
    assert disc == pytest.approx((1e-4 + 1e-6) / total, rel=1e-12)


# -- eigh ---------------------------------------------------------------------


def test_eigh_diagonal():
    w, _ = eigh(np.diag([-1.1, -0.9]))
    np.testing.assert_allclose(w, [-1.1, -0.9])


def test_eigh_two_by_two_closed_form():
    w, _ = eigh(np.array([[0.0, 1.0], [1.0, 2.0]]))
    assert w[0] == pytest.approx(1 - math.sqrt(2), abs=1e-14)


def test_eigh_two_site_ising_spectrum():
    # Hand-built -Z Z - X1 - X2 on two sites, basis 00, 01, 10, 11.
    h = np.array(
        [[-1, -1, -1, 0], [-1, 1, 0, -1], [-1, 0, 1, -1], [0, -1, -1, -1]],
        dtype=float,
    )
    w, v = eigh(h)
    np.testing.assert_allclose(w, [-math.sqrt(5), -1, 1, math.sqrt(5)], atol=1e-12)
    np.testing.assert_allclose(h @ v, v * w, atol=1e-9 * 3)


def test_eigh_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionError):
        eigh(np.ones((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_eigh_trace_and_residual(seed, d):
    rng = np.random.default_rng(seed)
    a = _rand(rng, d, d)
    m = a + a.conj().T
    w, v = eigh(m)
    tr = np.trace(m).real
    assert abs(w.sum() - tr) <= 1e-10 * max(1.0, np.abs(w).sum())
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm(m @ v - v * w) <= 1e-9 * max(1.0, np.linalg.norm(m, 2))


# -- Lanczos -----------------------------------------------------------------


def test_lanczos_matches_dense_ground_state():
    rng = np.random.default_rng(11)
    a = _rand(rng, 40, 40)
    m = a + a.conj().T
    e, v = lanczos_ground(lambda x: m @ x, rng.standard_normal(40), krylov_dim=12, tol=1e-12, max_restarts=500)
    exact = np.linalg.eigvalsh(m)[0]
    assert e == pytest.approx(exact, abs=1e-9)
    assert np.linalg.norm(m @ v - e * v) < 1e-6


def test_lanczos_preserves_shape_and_handles_invariant_space():
    m = np.diag([2.0, -1.0, 3.0, 0.5])
    v0 = np.array([[0.0, 1.0], [0.0, 0.0]])
    e, v = lanczos_ground(lambda x: (m @ x.ravel()).reshape(2, 2), v0)
    assert v.shape == (2, 2)
    assert e == pytest.approx(-1.0)
    with pytest.raises(ValidationError):
        lanczos_ground(lambda x: x, np.zeros(3))

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsqd.errors import ValidationError
from fsqd.mps import SampleCounts, identity_mpo, ising_mpo
from fsqd.sparsity import (
    WeightDistribution,
    analytic_curve,
    approx_intersection,
    corollary_bounds,
    coupon_collector_shots,
    distribution_csv,
    distribution_from_csv,
    exponential_weights,
    fit_gini_scaling,
    gini,
    ising_term_norms,
    load_distribution_binary,
    lorenz,
    lorenz_area_gini,
    lorenz_csv,
    miss_probability,
    powerlaw_weights,
    rescaled_error,
    save_distribution_binary,
    sparsity_report,
    spectral_norm,
    theorem_bounds,
)

ZETA2 = math.pi**2 / 6
ZETA3 = 1.2020569031595942


def mean_difference_gini(w):
    """Independent Gini: sum of |w_i - w_j| over ordered pairs / (2 N sum w)."""
    w = np.asarray(w, dtype=float)
    return float(np.abs(w[:, None] - w[None, :]).sum() / (2 * w.size * w.sum()))


def dist(w):
    w = np.asarray(w, dtype=float)
    return WeightDistribution(int(round(math.log2(w.size))), w / w.sum())


weights_strategy = st.integers(1, 6).flatmap(
    lambda n: st.lists(st.floats(0, 1, allow_nan=False), min_size=2**n, max_size=2**n).filter(lambda v: sum(v) > 1e-3)
)


# -- distributions and Lorenz curves ---------------------------------------------------


def test_distribution_validation():
    with pytest.raises(ValidationError):
        WeightDistribution(2, np.array([0.5, 0.6, 0, 0]))
    with pytest.raises(ValidationError):
        WeightDistribution(1, np.array([0.2, 0.3, 0.5]))
    with pytest.raises(ValidationError):
        WeightDistribution(1, np.array([-0.5, 1.5]))


def test_lorenz_uniform_and_point_mass():
    n = 5
    N = 2**n
    c = lorenz(dist(np.ones(N)))
    xs, ys = c.grid()
    np.testing.assert_allclose(ys, xs, atol=1e-15)
    w = np.zeros(N)
    w[7] = 1
    c = lorenz(dist(w))
    x = np.linspace(0, 1 - 1 / N, 50)
    assert np.all(c(x) == 0)
    assert c(1.0) == pytest.approx(1.0)


def test_lorenz_exponential_matches_closed_form_on_grid():
    n = 10
    N = 2**n
    c = lorenz(dist(exponential_weights(n, 1.0)))
    m = np.arange(1, N // 2 + 1)
    x = (N - m) / N
    np.testing.assert_allclose(c(x), np.exp(-1.0 * (1 - x) * N), rtol=0.02)


def test_lorenz_inverse_and_derivative():
    c = lorenz(dist([0.1, 0.2, 0.3, 0.4]))
    assert c.inverse(0.0) == pytest.approx(0.0)
    assert c.inverse(0.3) == pytest.approx(0.5)
    assert c.inverse(0.45) == pytest.approx(0.625)
    # Right-derivative N * w of the cell containing x.
    assert c.derivative(0.5) == pytest.approx(4 * 0.3)
    assert c.derivative(0.6) == pytest.approx(4 * 0.3)
    assert c(c.inverse(0.77)) == pytest.approx(0.77)


@settings(max_examples=100, deadline=None)
@given(weights_strategy)
def test_lorenz_convex_monotone_normalised(w):
    c = lorenz(dist(w))
    _, ys = c.grid()
    assert np.all(np.diff(ys) >= -1e-15)
    assert np.diff(ys, 2).min() >= -1e-12
    assert ys[-1] == pytest.approx(1.0, abs=1e-9)


def test_sparse_representation_matches_dense():
    dense = np.zeros(64)
    dense[[3, 17, 40]] = [0.5, 0.3, 0.2]
    a = WeightDistribution(6, dense)
    b = WeightDistribution(6, np.array([0.3, 0.2, 0.5]), "empirical", np.array([17, 40, 3]))
    assert gini(a) == pytest.approx(gini(b), abs=1e-14)
    assert lorenz(a).inverse(0.4) == pytest.approx(lorenz(b).inverse(0.4), abs=1e-14)


# -- Gini ----------------------------------------------------------------------------------


def test_gini_examples():
    assert gini(dist(np.ones(16))) == pytest.approx(0.0, abs=1e-15)
    assert gini(dist([1, 0, 0, 0])) == pytest.approx(0.75)
    assert gini(dist([0.1, 0.2, 0.3, 0.4])) == pytest.approx(0.25)


@settings(max_examples=100, deadline=None)
@given(weights_strategy)
def test_gini_matches_mean_difference_oracle(w):
    d = dist(w)
    assert gini(d) == pytest.approx(mean_difference_gini(d.weights), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(weights_strategy)
def test_gini_lorenz_area_consistency(w):
    d = dist(w)
    assert abs(gini(d) - lorenz_area_gini(lorenz(d))) <= 1 / (2 * d.N) + 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gini_bounds_exhaustive(n, rng):
    N = 2**n
    top = 1 - 2.0**-n
    for _ in range(300):
        w = rng.dirichlet(np.full(N, rng.uniform(0.05, 2)))
        G = gini(dist(w))
        assert -1e-12 <= G <= top + 1e-12
        if G > top - 1e-12:
            assert np.count_nonzero(w > 1e-12) == 1
    for k in range(N):
        e = np.zeros(N)
        e[k] = 1
        assert gini(dist(e)) == pytest.approx(top, abs=1e-15)
    near = np.zeros(N)
    near[0], near[-1] = 1 - 1e-6, 1e-6
    assert gini(dist(near)) < top


def test_empirical_distribution_from_counts():
    c = SampleCounts.from_dict({"000": 6, "101": 2, "111": 2})
    w = WeightDistribution.from_counts(c)
    assert w.estimator == "empirical" and w.implicit_zeros == 5
    np.testing.assert_allclose(sorted(w.weights), [0.2, 0.2, 0.6])
    dense = np.zeros(8)
    dense[[0, 5, 7]] = [0.6, 0.2, 0.2]
    assert gini(w) == pytest.approx(gini(dist(dense)), abs=1e-14)


# -- theorem and corollary -------------------------------------------------------------------


def test_rescaled_error_constants():
    assert rescaled_error(1.0, 1.0) == pytest.approx(1 / (2 * math.sqrt(2)))
    assert rescaled_error(1.0, 2.0, real_amplitudes=True) == pytest.approx(0.25)


def test_theorem_point_mass():
    w = np.zeros(32)
    w[9] = 1
    c = lorenz(dist(w))
    for et in (0.5, 0.1, 1e-3):
        b = theorem_bounds(c, et * 2 * math.sqrt(2), 1.0, 0.01)
        assert b.N_R_sufficient == 1 and not b.degenerate


def test_theorem_exponential_closed_form():
    c = lorenz(dist(exponential_weights(8, 1.0)))
    et = math.exp(-5.0)
    b = theorem_bounds(c, et * 2 * math.sqrt(2), 1.0, 0.01)
    assert b.epsilon_tilde == pytest.approx(et)
    assert b.N_R_sufficient == 10
    # L'(L^-1) / N is the weight of the cell that starts at L^-1.
    w10 = np.sort(exponential_weights(8, 1.0))[::-1][9]
    assert b.N_S_sufficient == math.ceil(math.log(10 / 0.01) / w10)


def test_theorem_degenerate_and_validation():
    c = lorenz(dist(np.ones(8)))
    b = theorem_bounds(c, 10.0, 1.0, 0.1)
    assert b.degenerate and b.N_R_sufficient == 1
    with pytest.raises(ValidationError):
        theorem_bounds(c, -1.0, 1.0, 0.1)


def test_theorem_real_amplitude_constant_is_weaker_requirement():
    c = lorenz(dist(exponential_weights(6, 0.3)))
    cplx = theorem_bounds(c, 0.2, 1.0, 0.01)
    real = theorem_bounds(c, 0.2, 1.0, 0.01, real_amplitudes=True)
    assert real.N_R_sufficient <= cplx.N_R_sufficient


def test_corollary_examples():
    n = 6
    assert corollary_bounds(1 - 2.0**-n, n, 1e-6, 0.01)[0] == 1
    n_r, n_s = corollary_bounds(0.0, 4, math.sqrt(0.5), 0.01)
    assert n_r == 8
    assert n_s == math.floor(8 * math.log(8 / 0.01))
    with pytest.raises(ValidationError):
        corollary_bounds(1.0, 4, 0.1, 0.01)


def prominent_subspace_error(psi, h, n_r):
    """E on the top-n_r bitstrings of psi minus <psi|H|psi> (brute force)."""
    order = np.argsort(-np.abs(psi) ** 2, kind="stable")[:n_r]
    e_sub = np.linalg.eigvalsh(h[np.ix_(order, order)])[0]
    return e_sub - np.vdot(psi, h @ psi).real


def random_pair(n, rng):
    N = 2**n
    # Skewed random amplitudes so that the prominent subspace is a proper subset.
    decay = np.exp(-rng.uniform(0, 8) * rng.permutation(N) / N)
    psi = decay * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
    psi /= np.linalg.norm(psi)
    a = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return psi, 0.5 * (a + a.conj().T)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_theorem_sufficiency_brute_force(seed, n):
    rng = np.random.Generator(np.random.Philox(seed))
    psi, h = random_pair(n, rng)
    rho = np.max(np.abs(np.linalg.eigvalsh(h)))
    c = lorenz(WeightDistribution.from_amplitudes(psi))
    for et in (0.3, 0.1, 0.03):
        eps = et * 2 * math.sqrt(2) * rho
        b = theorem_bounds(c, eps, rho, 0.01)
        assert prominent_subspace_error(psi, h, b.N_R_sufficient) <= eps + 1e-9


@settings(max_examples=50, deadline=None)
@given(weights_strategy)
def test_corollary_below_theorem(w):
    d = dist(w)
    c = lorenz(d)
    G = gini(c)
    cap = approx_intersection(c, G)
    for et in (0.3, 0.1, 0.03):
        if G >= 1 - 1e-12 or et**2 >= cap:
            continue
        tb = theorem_bounds(c, et * 2 * math.sqrt(2), 1.0, 0.01)
        nr, ns = corollary_bounds(G, d.n, et, 0.01)
        assert nr <= tb.N_R_sufficient
        assert ns <= tb.N_S_sufficient


def test_miss_probability_at_theorem_shots(rng):
    n = 6
    w = exponential_weights(n, 0.15)
    c = lorenz(dist(w))
    eta = 0.05
    b = theorem_bounds(c, 0.05 * 2 * math.sqrt(2), 1.0, eta)
    top = np.argsort(-w)[: b.N_R_sufficient]
    trials = 4000
    draws = rng.multinomial(b.N_S_sufficient, w, size=trials)
    missed = np.mean(np.any(draws[:, top] == 0, axis=1))
    sigma = math.sqrt(eta * (1 - eta) / trials)
    assert missed <= eta + 3 * sigma
    assert miss_probability(w, b.N_R_sufficient, b.N_S_sufficient) <= eta + 1e-12


def test_coupon_collector():
    assert coupon_collector_shots(1) == 1
    assert coupon_collector_shots(2) == pytest.approx(3)
    assert coupon_collector_shots(4) == pytest.approx(4 * (1 + 1 / 2 + 1 / 3 + 1 / 4))


# -- analytic curves ---------------------------------------------------------------------------


def test_exponential_asymptote():
    a = analytic_curve("exponential", 1.0, 20)
    assert a.one_minus_gini * 2**20 == pytest.approx(2.0, rel=1e-12)
    assert a.asymptotic


@pytest.mark.parametrize("n", [8, 10, 12])
def test_exponential_gini_matches_closed_form(n):
    a = analytic_curve("exponential", 1.0, n)
    assert gini(dist(exponential_weights(n, 1.0))) == pytest.approx(a.gini, rel=0.01)


def test_exponential_discrete_offset_oracle():
    # With unit spacing 1 - G = (2 / N) (1 / (e^lam - 1) + 1 / 2) up to e^(-lam N).
    for n in (8, 10, 12):
        N = 2**n
        expected = 2 / N * (1 / math.expm1(1.0) + 0.5)
        assert 1 - gini(dist(exponential_weights(n, 1.0))) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("lam", [1 / 16, 1 / 64])
def test_exponential_continuum_regime(lam):
    n = 14
    a = analytic_curve("exponential", lam, n)
    assert 1 - gini(dist(exponential_weights(n, lam))) == pytest.approx(a.one_minus_gini, rel=0.01)
    x = np.linspace(0.999, 1.0, 20)
    np.testing.assert_allclose(a.inverse(a.value(x)), x, atol=1e-12)


@pytest.mark.parametrize("gamma", [2.0, 3.0])
@pytest.mark.parametrize("n", [8, 10, 12])
def test_powerlaw_gini_matches_closed_form(gamma, n):
    a = analytic_curve("powerlaw", 1.0, n, gamma)
    assert gini(dist(powerlaw_weights(n, 1.0, gamma))) == pytest.approx(a.gini, rel=0.05)


def test_powerlaw_gamma3_zeta_oracle():
    # Unit spacing: 1 - G = (2 / N) sum (k + 1/2)(k + 1)^-3 / sum (k + 1)^-3.
    n = 12
    N = 2**n
    expected = 2 / N * (ZETA2 - ZETA3 / 2) / ZETA3
    assert 1 - gini(dist(powerlaw_weights(n, 1.0, 3.0))) == pytest.approx(expected, rel=1e-3)


def test_powerlaw_gamma3_continuum_regime():
    n, lam = 16, 1 / 64
    a = analytic_curve("powerlaw", lam, n, 3.0)
    assert 1 - gini(dist(powerlaw_weights(n, lam, 3.0))) == pytest.approx(a.one_minus_gini, rel=0.05)


def test_analytic_curve_shapes():
    for a in (analytic_curve("exponential", 0.01, 12), analytic_curve("powerlaw", 0.01, 12, 2.5)):
        x = np.linspace(0, 1, 200)
        y = a.value(x)
        assert np.all(np.diff(y) >= 0) and y[-1] == pytest.approx(1.0, abs=1e-3)
        mid = x[100]
        h = 1e-7
        assert a.derivative(mid) == pytest.approx((a.value(mid + h) - a.value(mid - h)) / (2 * h), rel=1e-5)


def test_analytic_curve_validation():
    with pytest.raises(ValidationError):
        analytic_curve("exponential", 0.0, 4)
    with pytest.raises(ValidationError):
        analytic_curve("powerlaw", 1.0, 4, 1.0)
    with pytest.raises(ValidationError):
        analytic_curve("gaussian", 1.0, 4)
    assert not analytic_curve("exponential", 0.1, 4).asymptotic


# -- scaling fit and spectral norm ---------------------------------------------------------------


def test_gini_scaling_fit_examples():
    pts = [(n, 1 - 2.0 ** (0.5 * n) / 2.0**n) for n in range(8, 21, 2)]
    fit = fit_gini_scaling(pts)
    assert fit.g == pytest.approx(0.5, abs=1e-12) and fit.c == pytest.approx(0.0, abs=1e-10)
    fit = fit_gini_scaling([(n, 1 - 2.0**-n) for n in range(4, 12)])
    assert fit.g == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        fit_gini_scaling([(4, 0.5), (6, 0.6)])


def test_spectral_norm_examples():
    h = ising_mpo(2, 1.0, 1.0, 0.0)
    assert spectral_norm(h) == pytest.approx(math.sqrt(5))
    assert spectral_norm(h, "term_bound", ising_term_norms(2, 1.0, 1.0, 0.0)) == pytest.approx(3.0)
    assert spectral_norm(identity_mpo(4)) == pytest.approx(1.0)
    h8 = ising_mpo(8, 1.0, 0.7, 0.2)
    assert spectral_norm(h8) <= spectral_norm(h8, "term_bound", ising_term_norms(8, 1.0, 0.7, 0.2))
    with pytest.raises(ValidationError):
        spectral_norm(ising_mpo(16, 1.0, 1.0, 0.0))
    with pytest.raises(ValidationError):
        spectral_norm(h, "term_bound")


# -- IO and reports --------------------------------------------------------------------------------


def test_distribution_csv_round_trip(rng):
    d = dist(rng.random(16))
    back = distribution_from_csv(distribution_csv(d))
    assert back.n == 4
    assert gini(back) == pytest.approx(gini(d), abs=1e-15)
    with pytest.raises(ValidationError):
        distribution_from_csv("a,b\n0,1\n")


def test_distribution_binary_round_trip(tmp_path, rng):
    d = dist(rng.random(32))
    path = tmp_path / "w.npy"
    save_distribution_binary(path, d)
    back = load_distribution_binary(path)
    np.testing.assert_array_equal(back.weights, d.weights)
    sparse = WeightDistribution(5, np.array([0.25, 0.75]), "empirical", np.array([30, 2]))
    save_distribution_binary(path, sparse)
    loaded = load_distribution_binary(path).weights
    assert loaded[30] == 0.25 and loaded[2] == 0.75


def test_report_and_lorenz_csv():
    d = dist(exponential_weights(6, 0.5))
    rep = sparsity_report(d, [0.3, 0.1], 0.01)
    assert rep.gini == pytest.approx(gini(d)) and len(rep.bounds) == 2
    assert rep.bounds[0]["N_R_sufficient"] <= rep.bounds[1]["N_R_sufficient"]
    assert '"epsilon_tilde": 0.3' in rep.to_text()
    text = lorenz_csv(lorenz(d), max_points=10)
    rows = text.splitlines()
    assert rows[0] == "x,L" and len(rows) <= 11
    assert rows[-1] == "1.0,1.0" or float(rows[-1].split(",")[1]) == pytest.approx(1.0)

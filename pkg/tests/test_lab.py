import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gibbsmix import CapExceededError, DomainError, builtin_target, expression_target
from gibbsmix import bounds as bc
from gibbsmix import lab
from gibbsmix.conditional import Grid1D

# normal probabilities of [-1, 1] and (-inf, -1]
MASS_UNIT = 0.6826894921370859
TAIL_UNIT = 0.15865525393145707
# Upsilon_PI(2; q=2, C=1) * Psi(TAIL_UNIT), evaluated at 40 digits
THREE_SET_RHS = 0.0023331654989920155
FLIP = np.array([[0.7, 0.3], [0.3, 0.7]])


def test_discretized_gaussian_mass():
    disc = lab.discretize_target(builtin_target("gaussian_product", 1), 1001, box=[[-8, 8]])
    assert math.fsum(disc.pi) == pytest.approx(1.0, abs=1e-12)
    x = disc.points[:, 0]
    assert disc.pi[np.abs(x) <= 1].sum() == pytest.approx(MASS_UNIT, abs=1e-5)


def test_flat_and_symmetric_discretizations():
    flat = lab.discretize_target(expression_target("0", 2, [[0, 1], [0, 2]]), (5, 5))
    w = np.outer(flat.grids[0].widths, flat.grids[1].widths).ravel()
    np.testing.assert_allclose(flat.pi, w / w.sum(), rtol=1e-12)
    sym = lab.discretize_target(builtin_target("perturbed_laplace", 1), 401)
    np.testing.assert_allclose(sym.pi, sym.pi[::-1], atol=1e-12, rtol=0)


def test_d1_matrices_are_rank_one():
    disc = lab.discretize_target(builtin_target("laplace_mixture", 1), 9, box=[[-3, 3]])
    m = lab.build_gibbs_matrices(disc)
    np.testing.assert_allclose(m["P_SS"].rows, np.tile(disc.pi, (9, 1)), atol=1e-15)
    np.testing.assert_allclose(m["P_RS"].rows, m["P_SS"].rows, atol=1e-15)
    assert m["N"] == 1


def _brute_force_sweep(w):
    """P_SS on a 2-D array of weights by enumerating the two coordinate moves."""
    n0, n1 = w.shape
    states = list(itertools.product(range(n0), range(n1)))
    P = np.zeros((len(states), len(states)))
    for s, (i, j) in enumerate(states):
        for i2 in range(n0):
            p1 = w[i2, j] / w[:, j].sum()
            for j2 in range(n1):
                p2 = w[i2, j2] / w[i2, :].sum()
                P[s, states.index((i2, j2))] += p1 * p2
    return P


@pytest.mark.parametrize(
    "w",
    [np.outer([0.3, 0.7], [0.6, 0.4]), np.array([[0.1, 0.2], [0.3, 0.4]]), np.array([[1.0, 2.0, 0.5], [0.2, 1.0, 3.0]])],
)
def test_systematic_sweep_matches_enumeration(w):
    disc = lab.discrete_from_weights(w)
    P = lab.build_gibbs_matrices(disc)["P_SS"].rows
    np.testing.assert_allclose(P, _brute_force_sweep(w), atol=1e-15)


def test_product_sweep_is_independent_draw():
    p, q = 0.3, 0.6
    disc = lab.discrete_from_weights(np.outer([p, 1 - p], [q, 1 - q]))
    P = lab.build_gibbs_matrices(disc)["P_SS"].rows
    np.testing.assert_allclose(P, np.tile(disc.pi, (4, 1)), atol=1e-15)


def test_state_caps():
    disc = lab.discretize_target(builtin_target("gaussian_product", 2), 70)
    with pytest.raises(CapExceededError):
        lab.build_gibbs_matrices(disc)
    with pytest.raises(CapExceededError):
        lab.exact_conductance(np.full(23, 1 / 23), np.full((23, 23), 1 / 23))


def test_transition_matrix_validation():
    with pytest.raises(DomainError):
        lab.TransitionMatrix(np.array([[0.5, 0.6], [0.5, 0.5]]), [0.5, 0.5])
    with pytest.raises(DomainError):
        lab.TransitionMatrix(np.array([[0.5, 0.5], [0.2, 0.8]]), [0.5, 0.5], True)


@pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.9])
def test_two_state_conductance(p):
    P = np.array([[1 - p, p], [p, 1 - p]])
    assert lab.exact_conductance([0.5, 0.5], P).phi == pytest.approx(p, rel=1e-14)


def test_disconnected_chain_has_zero_conductance_and_gap():
    P = np.kron(np.eye(2), np.full((2, 2), 0.5))
    pi = np.full(4, 0.25)
    assert lab.exact_conductance(pi, P).phi == 0.0
    assert lab.exact_spectral_gap(pi, P) == pytest.approx(0.0, abs=1e-12)
    assert lab.exact_spectral_gap(pi, np.eye(4)) == pytest.approx(0.0, abs=1e-12)


def test_flip_chain_gap_and_decay():
    assert lab.exact_spectral_gap([0.5, 0.5], FLIP) == pytest.approx(0.6, rel=1e-12)
    curve, omega = lab.tv_decay_curve([0.5, 0.5], FLIP, [1.0, 0.0], 30)
    np.testing.assert_allclose(curve, 0.5 * 0.4 ** np.arange(31), rtol=1e-10, atol=1e-15)
    assert omega == 2.0


def test_decay_from_stationarity_is_zero():
    disc = lab.discretize_target(builtin_target("laplace_mixture", 2), 4, box=[[-1.5, 1.5]] * 2)
    P = lab.build_gibbs_matrices(disc)["P_RS"]
    curve, omega = lab.tv_decay_curve(disc, P, disc.pi, 20)
    assert np.max(curve) <= 1e-14 and omega == pytest.approx(1.0)


def test_spectral_gap_rejects_nonreversible():
    disc = lab.discretize_target(builtin_target("laplace_mixture", 2), 4, box=[[-2, 2]] * 2)
    with pytest.raises(DomainError):
        lab.exact_spectral_gap(disc, lab.build_gibbs_matrices(disc)["P_SS"])


def test_sweep_bounds_exhaustive_on_gaussian_grid():
    disc = lab.discretize_target(builtin_target("gaussian_product", 2), 4, box=[[-1.5, 1.5]] * 2)
    P = lab.build_gibbs_matrices(disc)["P_RS"]
    exh = lab.exact_conductance(disc, P)
    swp = lab.exact_conductance(disc, P, "sweep")
    assert swp.upper_bound and not exh.upper_bound
    assert swp.phi >= exh.phi - 1e-12
    assert lab.set_conductance(disc.pi, P, exh.argmin_set) == pytest.approx(exh.phi, rel=1e-12)


def _random_chain(seed, n):
    rng = np.random.default_rng(seed)
    W = rng.gamma(0.5, size=(n, n))
    W = W + W.T
    pi = W.sum(axis=1) / W.sum()
    return pi, W / W.sum(axis=1, keepdims=True)


@given(st.integers(0, 10_000), st.integers(2, 9), st.randoms(use_true_random=False))
def test_conductance_invariant_under_relabeling(seed, n, pyrng):
    pi, P = _random_chain(seed, n)
    perm = np.array(pyrng.sample(range(n), n))
    a = lab.exact_conductance(pi, P).phi
    b = lab.exact_conductance(pi[perm], P[np.ix_(perm, perm)]).phi
    assert a == pytest.approx(b, rel=1e-10, abs=1e-14)


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_complement_symmetry_at_half(seed, half):
    # symmetric doubly stochastic P keeps pi uniform; every S with pi(S) = 1/2
    # then has Phi(S) = Phi(S^c)
    n = 2 * half
    rng = np.random.default_rng(seed)
    A = sum(w * np.eye(n)[rng.permutation(n)] for w in rng.dirichlet(np.ones(4)))
    P = 0.5 * (A + A.T)
    pi = np.full(n, 1 / n)
    S = rng.choice(n, half, replace=False)
    comp = np.setdiff1d(np.arange(n), S)
    assert lab.set_conductance(pi, P, S) == pytest.approx(lab.set_conductance(pi, P, comp), rel=1e-12, abs=1e-15)


@given(st.integers(0, 10_000), st.integers(2, 10))
def test_random_reversible_sandwich(seed, n):
    pi, P = _random_chain(seed, n)
    phi = lab.exact_conductance(pi, P).phi
    lam = lab.exact_spectral_gap(pi, P)
    assert phi**2 / 2 <= lam + 1e-12
    assert lam <= 2 * phi + 1e-12


@pytest.mark.parametrize("name", ["gaussian_product", "laplace_mixture", "perturbed_laplace", "gaussian_mixture_continuous"])
def test_projections_and_reversibility(name):
    disc = lab.discretize_target(builtin_target(name, 2), (5, 7), box=[[-3, 3], [-2, 2]])
    m = lab.build_gibbs_matrices(disc)
    for Pk in m["P_k"]:
        assert np.max(np.abs(Pk.rows @ Pk.rows - Pk.rows)) <= 1e-10
    assert lab.detailed_balance_defect(disc.pi, m["P_RS"]) <= 1e-10
    assert lab.detailed_balance_defect(disc.pi, m["P_rev"]) <= 1e-10
    assert lab.detailed_balance_defect(disc.pi, m["P_RS_N"]) <= 1e-10


def test_asymmetric_target_breaks_systematic_balance():
    disc = lab.discretize_target(builtin_target("laplace_mixture", 2), 6, box=[[-3, 3]] * 2)
    assert lab.detailed_balance_defect(disc.pi, lab.build_gibbs_matrices(disc)["P_SS"]) > 1e-3


def test_random_scan_tv_decay_is_monotone_and_enveloped():
    disc = lab.discretize_target(builtin_target("perturbed_laplace", 2), 4, box=[[-1.5, 1.5]] * 2)
    P = lab.build_gibbs_matrices(disc)["P_RS"]
    phi = lab.exact_conductance(disc, P).phi
    for mu0 in lab.warm_starts(disc).values():
        curve, omega = lab.tv_decay_curve(disc, P, mu0, 200)
        assert np.all(np.diff(curve) <= 1e-15)
        assert np.all(curve <= bc.tv_envelope(phi, omega, np.arange(201)) + 1e-15)


def test_three_set_worked_example():
    pi = np.array([TAIL_UNIT, MASS_UNIT, TAIL_UNIT])
    prof = bc.IsoperimetricProfile("poincare", 2, 1.0)
    assert float(prof.upsilon(2.0)) == pytest.approx(4 / 272, rel=1e-14)
    slack, terms = lab.three_set_slack(pi, np.array([1, 3, 2]), 2.0, prof)
    assert terms["rhs"] == pytest.approx(THREE_SET_RHS, rel=1e-12)
    assert slack == pytest.approx(MASS_UNIT - THREE_SET_RHS, rel=1e-12)


def test_three_set_grid_example():
    disc = lab.discretize_target(builtin_target("gaussian_product", 1), 2001, box=[[-8, 8]])
    x = disc.points[:, 0]
    labels = np.where(x <= -1, 1, np.where(x >= 1, 2, 3)).astype(np.int8)
    gap = lab.region_gap(disc, labels)
    assert gap == pytest.approx(2.0 - disc.grids[0].spacing, abs=1e-12)
    slack, terms = lab.three_set_slack(disc.pi, labels, gap, bc.IsoperimetricProfile("poincare", 2, 1.0))
    assert terms["pi_S3"] == pytest.approx(MASS_UNIT, abs=1e-2)
    assert slack > 0.67


def test_three_set_check_small_constant_and_separated(rng):
    disc = lab.discretize_target(builtin_target("gaussian_product", 1), 257, box=[[-6, 6]])
    tiny = lab.check_three_set(disc, bc.IsoperimetricProfile("poincare", 2, 1e-9), 200, rng)
    assert tiny.passed
    res = lab.check_three_set(disc, bc.IsoperimetricProfile("log_sobolev", 2, 0.5), 300, rng)
    assert res.passed and res.min_separated_slack > 0
    assert res.n_tested == res.slacks.size == res.gaps.size


def test_three_set_2d_families(rng):
    disc = lab.discretize_target(builtin_target("gaussian_product", 2), 15, box=[[-4, 4]] * 2)
    res = lab.check_three_set(disc, bc.IsoperimetricProfile("poincare", 2, 1.0), 100, rng)
    assert res.passed


def test_overstated_constant_is_caught(rng):
    # the Gaussian Poincare constant is 1; with C = 1e6 a one-cell buffer at
    # the median carries less mass than Upsilon(spacing) Psi(1/2) ~ 1/128
    disc = lab.discretize_target(builtin_target("gaussian_product", 1), 2049, box=[[-8, 8]])
    res = lab.check_three_set(disc, bc.IsoperimetricProfile("poincare", 2, 1e6), 10, rng)
    assert not res.passed


def test_rayleigh_diagnostic_recovers_gaussian_constants():
    disc = lab.discretize_target(builtin_target("gaussian_product", 1), 2049, box=[[-8, 8]])
    assert lab.rayleigh_diagnostic(disc, "poincare")["estimate"] == pytest.approx(1.0, rel=1e-6)
    assert lab.rayleigh_diagnostic(disc, "log_sobolev")["estimate"] == pytest.approx(0.5, rel=1e-3)


def test_empirical_close_coupling_on_d1():
    disc = lab.discretize_target(builtin_target("gaussian_product", 1), 8, box=[[-2, 2]])
    P = lab.build_gibbs_matrices(disc)["P_SS"]
    for _, eps in lab.empirical_close_coupling(disc, P, [0.1, 1.0, 10.0]):
        assert eps == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("d, N, expected", [(2, 6, 0.96875), (1, 5, 1.0), (2, 1, 0.0), (3, 0, 0.0)])
def test_coupon_exact(d, N, expected):
    assert lab.coupon_probability_exact(d, N) == pytest.approx(expected, abs=1e-15)


@given(st.integers(2, 9), st.integers(0, 40))
def test_coupon_matches_stirling_oracle(d, N):
    # P(cover) = d! S(N, d) / d^N with Stirling numbers of the second kind
    S = [[0] * (d + 1) for _ in range(N + 1)]
    S[0][0] = 1
    for i in range(1, N + 1):
        for j in range(1, d + 1):
            S[i][j] = j * S[i - 1][j] + S[i - 1][j - 1]
    exact = math.factorial(d) * S[N][d] / d**N
    assert lab.coupon_probability_exact(d, N) == pytest.approx(exact, abs=1e-13)


def test_coupon_large_d_log_domain():
    from gibbsmix import coupon_block_length

    p = lab.coupon_probability_exact(400, coupon_block_length(400))
    assert 0.5 <= p <= 1.0
    assert lab.coupon_union_certificate(400, coupon_block_length(400))


def test_rho_values_and_shift_inequality():
    assert float(lab.rho(math.exp(-1))) == pytest.approx(math.exp(-1), rel=1e-15)
    assert float(lab.rho(1.0)) == 0.0
    assert float(lab.rho(0.75)) == pytest.approx(0.2157615543388357, rel=1e-14)
    assert float(lab.rho(0.5)) - 0.25 == pytest.approx(0.09657359027997265, rel=1e-13)
    rep = lab.check_rho_lemma(401)
    assert rep["passed"]


def test_marginal_regularity():
    gp = lab.check_marginal_regularity(builtin_target("gaussian_product", 2))
    assert gp["L_emp_smooth"] == pytest.approx(1.0, abs=1e-3)
    lm = lab.check_marginal_regularity(builtin_target("laplace_mixture", 2))
    assert lm["L_emp_lip"] <= 1 + 1e-3
    flat = expression_target("0", 2, [[-2, 2], [-2, 2]])
    assert lab.check_marginal_regularity(flat)["L_emp_lip"] == pytest.approx(0.0, abs=1e-9)


def test_conditional_tv_within_modulus(rng):
    t = builtin_target("perturbed_laplace", 2)
    from gibbsmix.kernels import make_grids

    res = lab.conditional_tv_pairs(t, make_grids(t, 1025), 200, rng)
    assert res["max_ratio"] <= 1 + 1e-2


def test_close_coupling_check_identical_pairs(rng):
    t = builtin_target("perturbed_laplace", 2)
    cert = bc.CloseCouplingCert(delta=1e-300, eps_exact=0.25, eps_asymptotic=0.3)
    res = lab.check_close_coupling(t, cert, "systematic", 3, 500, rng, grid_size=129, burn_in=5, thin=1)
    assert res["passed"]
    for r in res["pairs"]:
        assert r["meeting"] == 1.0 and r["tv_upper"] == 0.0

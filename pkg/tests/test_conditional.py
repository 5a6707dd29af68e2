import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from gibbsmix import (
    DegenerateSliceError,
    DiscretePMF,
    DomainError,
    Grid1D,
    GridMismatchError,
    builtin_target,
    expression_target,
    maximal_coupling_sample,
    sample_inverse_cdf,
    slice_conditional,
    tv_distance_pmf,
)
from gibbsmix.conditional import conditional_weights, inverse_cdf_batch, maximal_coupling_batch
from helpers import chi2_pvalue

GRID = Grid1D.uniform(-8.0, 8.0, 1001)
# TV(N(0,1), N(1,1)) = 2 Phi(1/2) - 1
TV_UNIT_SHIFT = 0.3829249225480262


def _normal_pmf(mu=0.0, grid=GRID):
    return DiscretePMF.from_unnormalized(grid, np.exp(-0.5 * (grid.points - mu) ** 2) * grid.widths)


def test_grid_geometry():
    g = Grid1D.uniform(0.0, 1.0, 5)
    np.testing.assert_allclose(g.edges, [0, 0.125, 0.375, 0.625, 0.875, 1.0])
    assert math.isclose(g.widths.sum(), 1.0)
    with pytest.raises(DomainError):
        Grid1D([0.0])
    with pytest.raises(DomainError):
        Grid1D([0.0, 0.0, 1.0])


def test_gaussian_slice_matches_normal_cell_masses():
    t = builtin_target("gaussian_product", 2)
    pmf, _ = slice_conditional(t, 0, [3.7, 0.0], GRID)
    exact = np.diff(stats.norm.cdf(GRID.edges))
    assert np.max(np.abs(pmf.weights - exact)) <= 1e-6


def test_flat_potential_gives_uniform_cells():
    t = expression_target("0", 2, [[-2, 2], [-2, 2]])
    g = Grid1D.uniform(-2, 2, 101)
    pmf, log_norm = slice_conditional(t, 1, [0.3, -1.0], g)
    np.testing.assert_allclose(pmf.weights, g.widths / 4.0, rtol=1e-12)
    assert log_norm == pytest.approx(math.log(4.0))


def test_perturbed_laplace_slice_is_symmetric():
    t = builtin_target("perturbed_laplace", 1)
    pmf, _ = slice_conditional(t, 0, [0.0], Grid1D.uniform(-20, 20, 2049))
    np.testing.assert_allclose(pmf.weights, pmf.weights[::-1], atol=1e-12, rtol=0)


def test_underflowing_slice_is_degenerate():
    t = expression_target("exp(abs(x1) + 800)", 1, [[-1, 1]])
    with pytest.raises(DegenerateSliceError):
        slice_conditional(t, 0, [0.0], Grid1D.uniform(-1, 1, 11))


def test_grid_outside_box_is_rejected():
    t = builtin_target("gaussian_product", 1, {"R": 2.0})
    with pytest.raises(DomainError):
        slice_conditional(t, 0, [0.0], GRID)


def test_inverse_cdf_median_and_left_edge():
    g = Grid1D.uniform(0.0, 1.0, 101)
    uni = DiscretePMF.uniform_cells(g)
    assert abs(sample_inverse_cdf(uni, 0.5) - 0.5) <= g.spacing
    w = np.zeros(101)
    w[40:60] = 1.0
    p = DiscretePMF.from_unnormalized(g, w)
    assert sample_inverse_cdf(p, 0.0) == g.edges[40]


def test_normal_quantile():
    assert sample_inverse_cdf(_normal_pmf(), 0.841345) == pytest.approx(1.0, abs=1e-3)


def test_inverse_cdf_rejects_bad_u():
    with pytest.raises(DomainError):
        sample_inverse_cdf(_normal_pmf(), 1.5)


@given(hnp.arrays(float, 30, elements=st.floats(0, 1)), st.lists(st.floats(0, 1), min_size=2, max_size=20))
def test_inverse_cdf_is_nondecreasing(w, us):
    if w.sum() <= 0:
        w[0] = 1.0
    g = Grid1D.uniform(-1, 1, 30)
    u = np.sort(np.asarray(us))
    W = np.broadcast_to(w, (u.size, w.size))
    for on_grid in (False, True):
        x = inverse_cdf_batch(W, g, u, on_grid)
        assert np.all(np.diff(x) >= 0)
        assert np.all((x >= g.low) & (x <= g.high))


def test_tv_distance_examples():
    p = _normal_pmf()
    assert tv_distance_pmf(p, p) == 0.0
    assert tv_distance_pmf(p, _normal_pmf(1.0)) == pytest.approx(TV_UNIT_SHIFT, abs=1e-4)
    g = Grid1D.uniform(0, 1, 4)
    a = DiscretePMF(g, [0.5, 0.5, 0, 0])
    b = DiscretePMF(g, [0, 0, 0.5, 0.5])
    assert tv_distance_pmf(a, b) == 1.0
    with pytest.raises(GridMismatchError):
        tv_distance_pmf(p, DiscretePMF.uniform_cells(Grid1D.uniform(-8, 8, 1000)))


simplex = hnp.arrays(float, 12, elements=st.floats(0, 1)).map(lambda w: (w + 1e-9) / (w + 1e-9).sum())


@given(simplex, simplex, simplex)
def test_tv_is_a_metric(a, b, c):
    g = Grid1D.uniform(0, 1, 12)
    p, q, r = (DiscretePMF.from_unnormalized(g, v) for v in (a, b, c))
    d_pq, d_qp = tv_distance_pmf(p, q), tv_distance_pmf(q, p)
    assert d_pq == d_qp
    assert tv_distance_pmf(p, r) <= d_pq + tv_distance_pmf(q, r) + 1e-12
    assert tv_distance_pmf(p, p) == 0.0
    assert (d_pq == 0.0) == np.array_equal(p.weights, q.weights) or d_pq < 1e-15


def test_coupling_identical_and_disjoint(rng):
    p = _normal_pmf()
    for _ in range(50):
        w, w2, met = maximal_coupling_sample(p, p, rng)
        assert met and w == w2
    g = Grid1D.uniform(0, 1, 4)
    a = DiscretePMF(g, [0.5, 0.5, 0, 0])
    b = DiscretePMF(g, [0, 0, 0.5, 0.5])
    for _ in range(50):
        w, w2, met = maximal_coupling_sample(a, b, rng)
        assert not met and w <= 0.5 <= w2


def test_unit_shift_meeting_rate(rng):
    n = 100_000
    p, q = _normal_pmf(), _normal_pmf(1.0)
    P = np.broadcast_to(p.weights, (n, GRID.n))
    Q = np.broadcast_to(q.weights, (n, GRID.n))
    _, _, met = maximal_coupling_batch(P, Q, GRID, rng.random((n, 3)))
    assert met.mean() == pytest.approx(1 - TV_UNIT_SHIFT, abs=0.005)


@pytest.mark.parametrize("shift", [0.5, 2.0])
def test_coupling_marginals_pass_chi_square(shift):
    g = Grid1D.uniform(-5, 6, 45)
    p, q = _normal_pmf(0.0, g), _normal_pmf(shift, g)
    n = 200_000
    rng = np.random.Generator(np.random.Philox(7))
    P = np.broadcast_to(p.weights, (n, g.n))
    Q = np.broadcast_to(q.weights, (n, g.n))
    w, w2, _ = maximal_coupling_batch(P, Q, g, rng.random((n, 3)), on_grid=True)
    for draws, pmf in ((w, p), (w2, q)):
        idx = np.searchsorted(g.points, draws)
        counts = np.bincount(idx, minlength=g.n)
        assert chi2_pvalue(counts, pmf.weights, n) > 1e-3


def test_conditional_weights_are_bitwise_shared():
    t = builtin_target("perturbed_laplace", 3)
    g = Grid1D.uniform(-20, 20, 257)
    X = np.array([[0.1, 0.5, -1.0], [7.0, 0.5, -1.0], [0.1, 0.6, -1.0]])
    W = conditional_weights(t, 0, X, g)
    assert np.array_equal(W[0], W[1])
    assert not np.array_equal(W[0], W[2])
    single = conditional_weights(t, 0, X[2:], g)
    np.testing.assert_allclose(single[0], W[2], rtol=1e-12, atol=1e-300)


def test_pmf_csv_roundtrip(tmp_path):
    p = _normal_pmf(grid=Grid1D.uniform(-1, 1, 5))
    text = p.to_csv(tmp_path / "pmf.csv")
    rows = text.strip().split("\n")
    assert rows[0] == "point,weight" and len(rows) == 6
    assert math.fsum(float(r.split(",")[1]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-15)

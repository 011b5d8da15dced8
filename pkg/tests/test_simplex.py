import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdtm.simplex import (HALF, QUARTER, SimplexLoss, barycenter, check_corner_affine,
                          corner_argmin, corner_scores, dir_deriv, edge_bump, edge_point, hat,
                          line_search, profile, random_point, unsymmetric_corner, vertex)

TOL = 1e-12


def test_hat_examples():
    h = hat(0, HALF, 3)
    assert abs(h(vertex(0, 3)) - 1) < TOL
    assert abs(h(vertex(1, 3))) < TOL
    assert h.pre(barycenter(3)) < 0 and h(barycenter(3)) == 0
    assert abs(h.offset - 1 / 3) < TOL


def test_edge_bump_examples():
    b = edge_bump(0, 1, 4)
    ramp = b.terms[0][1]
    assert np.allclose(ramp.normal, [1, 1, -1, -1]) and abs(ramp.offset) < TOL
    assert abs(b(edge_point(0, 1, HALF, 4)) - 1) < TOL
    assert abs(b(edge_point(2, 3, HALF, 4))) < TOL
    assert abs(b(vertex(0, 4))) < TOL


def test_unsymmetric_corner_examples():
    c = unsymmetric_corner(0, 1, QUARTER, 3)
    assert abs(c(vertex(0, 3)) - 1) < TOL
    assert abs(c(edge_point(0, 1, QUARTER, 3))) < TOL
    assert abs(c(edge_point(0, 2, HALF, 3))) < TOL
    assert c.pre(vertex(2, 3)) <= 0 and c(vertex(2, 3)) == 0


def test_profile_along_edge():
    m = 5
    p = profile(1, 3, m)
    ts = np.linspace(0, 1, 401)
    vals = np.array([p(edge_point(1, 3, t, m)) for t in ts])
    oracle = np.interp(ts, [0, 0.25, 0.5, 1.0], [0, 1, 1, 0])
    assert np.max(np.abs(vals - oracle)) < 1e-12
    assert abs(p(edge_point(1, 3, 0.75, m)) - 0.5) < TOL


def test_dir_deriv_examples():
    lin = lambda x: 2 * x[0] + 5 * x[1] + 7 * x[2]
    assert abs(dir_deriv(lin, vertex(0, 3), vertex(1, 3), QUARTER) - 3) < TOL
    x = vertex(2, 3)
    assert dir_deriv(lin, x, x, QUARTER) == 0


def test_corner_argmin_examples():
    class Table:
        m = 3

        def __call__(self, x):
            # corner values toward u = 0, 1, 2 from vertex 0 are 0, -1, -3
            return -1 * (x[1] > 0) - 3 * (x[2] > 0) + 0.0

    assert corner_argmin(Table(), 0, QUARTER) == 2
    flat = SimplexLoss(4)
    assert corner_argmin(flat, 2, QUARTER) == 2
    quad = (np.eye(3), vertex(1, 3), 1.0)
    assert corner_argmin(SimplexLoss(3), 0, 1.0, quad) == 1


def test_corner_scores_quadratic_term():
    rng = np.random.default_rng(5)
    loss = SimplexLoss(4).add_profiles([0, 1], [2, 3], [-2.0, 1.5])
    A = rng.normal(size=(2, 4))
    y = rng.normal(size=2)
    s = corner_scores(loss, 1, QUARTER, (A, y, 3.0))
    base = loss.corner_values(1, QUARTER)
    assert np.allclose(s - base, 3.0 * QUARTER * (A[:, 1] - y) @ A)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.sampled_from([QUARTER, HALF]), st.integers(0, 2 ** 31))
def test_hull_reduced_matches_geometric(m, mu, seed):
    rng = np.random.default_rng(seed)
    v, w = rng.choice(m, 2, replace=False)
    xs = np.array([random_point(m, rng) for _ in range(5)])
    pairs = [(SimplexLoss(m).add_hats([v], mu), hat(v, mu, m)),
             (SimplexLoss(m).add_edge_bumps([v], [w]), edge_bump(v, w, m)),
             (SimplexLoss(m).add_corners([v], [w], QUARTER), unsymmetric_corner(v, w, QUARTER, m)),
             (SimplexLoss(m).add_profiles([v], [w]), profile(v, w, m))]
    for red, geo in pairs:
        assert np.allclose(red(xs), [geo(x) for x in xs], atol=TOL)
        assert np.allclose(red.corner_values(v, mu),
                           [geo(edge_point(v, u, mu, m)) if u != v else geo(vertex(v, m))
                            for u in range(m)], atol=TOL)


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 7), st.integers(0, 2 ** 31))
def test_corner_affinity_of_the_basis(m, seed):
    rng = np.random.default_rng(seed)
    v, w = rng.choice(m, 2, replace=False)
    assert check_corner_affine(hat(v, QUARTER, m), m, QUARTER, rng)
    assert check_corner_affine(edge_bump(v, w, m), m, HALF, rng)
    assert check_corner_affine(profile(v, w, m), m, QUARTER, rng)
    assert check_corner_affine(unsymmetric_corner(v, w, QUARTER, m), m, QUARTER, rng)


def test_affinity_checker_detects_kinks():
    rng = np.random.default_rng(0)
    # the half hat bends at x_0 = 1/2, inside the corner of size 3/4 at e_0
    assert not check_corner_affine(hat(0, HALF, 3), 3, 0.75, rng, samples=20)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 9), st.floats(0.1, 10), st.integers(0, 2 ** 31))
def test_dir_deriv_positively_homogeneous(m, alpha, seed):
    rng = np.random.default_rng(seed)
    loss = SimplexLoss(m).add_hats(rng.integers(0, m, 4), QUARTER, rng.normal(size=4))
    x, y = vertex(0, m), random_point(m, rng)
    a = dir_deriv(loss, x, y, QUARTER)
    b = dir_deriv(lambda z: alpha * loss(z), x, y, QUARTER)
    assert abs(b - alpha * a) <= 1e-10 * max(1, abs(b))


def test_dir_deriv_matches_one_sided_difference():
    rng = np.random.default_rng(3)
    m = 6
    loss = SimplexLoss(m).add_profiles([0, 0, 2], [1, 4, 0], [1.0, -2.0, 0.5]).add_hats([0], HALF, 3.0)
    x = vertex(0, m)
    for _ in range(20):
        y = random_point(m, rng)
        h = 1e-7
        fd = (loss(x + h * (y - x)) - loss(x)) / h
        assert abs(dir_deriv(loss, x, y, QUARTER) - fd) < 1e-7


def test_all_pair_term_equals_dense_sum():
    rng = np.random.default_rng(4)
    for m in (3, 5, 9):
        iu, ju = np.triu_indices(m, 1)
        dense = SimplexLoss(m).add_edge_bumps(iu, ju, 2.5)
        packed = SimplexLoss(m).add_all_pair_bumps(2.5)
        xs = np.array([random_point(m, rng) for _ in range(30)])
        assert np.allclose(dense(xs), packed(xs), atol=1e-12)
        for v in range(m):
            for mu in (QUARTER, HALF, 0.75):
                assert np.allclose(dense.corner_values(v, mu), packed.corner_values(v, mu), atol=1e-12)
        x, y = random_point(m, rng), random_point(m, rng)
        assert line_search(dense, x, y) == line_search(packed, x, y)


def test_corner_values_match_direct_evaluation():
    rng = np.random.default_rng(6)
    m = 7
    loss = (SimplexLoss(m).add_profiles(rng.integers(0, 3, 5), rng.integers(3, 7, 5), rng.normal(size=5))
            .add_hats(np.arange(m), HALF, rng.normal(size=m)).add_all_pair_bumps(1.3))
    for v in range(m):
        direct = [loss(edge_point(v, u, QUARTER, m)) if u != v else loss(vertex(v, m)) for u in range(m)]
        assert np.allclose(loss.corner_values(v, QUARTER), direct, atol=1e-12)


def test_index_validation():
    with pytest.raises(IndexError):
        SimplexLoss(3).add_hats([5], HALF).arrays
    with pytest.raises(ValueError):
        edge_bump(1, 1, 4)

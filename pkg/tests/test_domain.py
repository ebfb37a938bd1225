import numpy as np
import pytest

from hypkob import (Domain, HeightProjection, ConfigError, OutsideShellRange,
                    PointOutsideDomain, estimate_reach, reach_details)

from conftest import EPS


def test_ball_height_closed_form(projection):
    rng = np.random.default_rng(3)
    u = rng.normal(size=(50, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = rng.uniform(0.3, 0.95, size=50)
    X = r[:, None] * u
    h = projection.height_batch(X)
    assert np.allclose(h * h, 1.0 - r, atol=1e-8)
    feet, dist = projection.project_batch(X)
    assert np.allclose(dist, 1.0 - r, atol=1e-8)
    assert np.allclose(feet, u, atol=1e-7)


def test_projection_residual_is_distance(projection):
    rng = np.random.default_rng(4)
    u = rng.normal(size=(30, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = rng.uniform(0.55, 0.97, size=30)[:, None] * u
    feet, dist = projection.project_batch(X)
    gap = np.linalg.norm(X - feet, axis=1)
    assert np.allclose(gap, dist, atol=1e-10)
    h = projection.height_batch(X)
    assert np.allclose(h * h, dist, atol=1e-10)


def test_ellipsoid_nearest_point_oracle(ellipsoid):
    # for the axis point (1,0,0,0) inside x^2/4 + y^2 + z^2 + w^2 = 1 the
    # stationarity condition pins the foot at x = 4/3 with squared
    # distance 2/3, strictly better than the axis intersection (2,0,0,0)
    proj = HeightProjection(ellipsoid, 1.0)
    x = np.array([1.0, 0.0, 0.0, 0.0])
    foot = proj.project(x)
    assert abs(foot[0] - 4.0 / 3.0) < 1e-6
    assert abs(np.linalg.norm(x - foot) ** 2 - 2.0 / 3.0) < 1e-8
    assert abs(proj.height(x) - (2.0 / 3.0) ** 0.25) < 1e-7


def test_center_tie_break_deterministic(ball):
    proj = HeightProjection(ball, EPS)
    c = np.zeros(4)
    f1 = proj.project(c)
    f2 = proj.project(c)
    assert np.array_equal(f1, f2)
    assert abs(np.linalg.norm(f1) - 1.0) < 1e-8
    assert abs(proj.height(c) - 1.0) < 1e-8


def test_deep_interior_shell_projects(projection):
    # near the center the feet nearly tie and the coupled Newton solve
    # turns singular; the ray fallback must still return boundary feet
    # with the right distance at every radius down to zero
    rng = np.random.default_rng(11)
    U = rng.normal(size=(12, 4))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    for c in (1e-2, 1e-3, 1e-4, 1e-6, 1e-9, 1e-13):
        P, dist = projection.project_batch(c * U)
        assert np.abs(np.linalg.norm(P, axis=1) - 1.0).max() < 1e-9
        assert np.abs(dist - (1.0 - c)).max() < 5e-5


def test_segment_shares_projection(projection):
    u = np.array([0.2, -0.5, 0.7, 0.4])
    u /= np.linalg.norm(u)
    f1 = projection.project(0.5 * u)
    f2 = projection.project(0.8 * u)
    assert np.allclose(f1, f2, atol=1e-8)
    assert np.allclose(f1, u, atol=1e-8)


def test_squared_height_one_lipschitz(ellipsoid):
    proj = HeightProjection(ellipsoid, 0.4)
    rng = np.random.default_rng(11)
    X = ellipsoid.sample_interior(80, seed=7)
    Y = X + rng.normal(scale=0.02, size=X.shape)
    keep = ellipsoid.rho(Y) < -1e-9
    X, Y = X[keep], Y[keep]
    dx = np.abs(proj.height_batch(X) ** 2 - proj.height_batch(Y) ** 2)
    assert np.all(dx <= np.linalg.norm(X - Y, axis=1) + 1e-10)


def test_foot_on_shell_height(projection):
    x = np.array([0.3, 0.1, -0.2, 0.4])
    for t in (0.05, 0.2, 0.45):
        p = projection.foot_on_shell(x, t)
        assert abs(projection.height(p) - np.sqrt(t)) < 1e-6
    with pytest.raises(OutsideShellRange):
        projection.foot_on_shell(x, 0.9)


def test_collar_membership(projection):
    u = np.array([1.0, 0.0, 0.0, 0.0])
    assert projection.in_collar(0.6 * u)
    assert not projection.in_collar(0.05 * u)


def test_outside_point_rejected(projection):
    with pytest.raises(PointOutsideDomain):
        projection.project(np.array([1.5, 0.0, 0.0, 0.0]))


def test_reach_estimate_ball(ball):
    est = reach_details(ball, n_samples=128, seed=2)
    assert abs(est.reach - 1.0) < 0.02
    eps = estimate_reach(ball, n_samples=128, seed=2)
    assert isinstance(eps, float)
    assert abs(eps - 0.5) < 0.02


def test_from_spec_round_trip(ball):
    assert ball.dim == 4
    assert abs(ball.rho(np.zeros(4)) + 1.0) < 1e-12
    with pytest.raises(ConfigError):
        Domain.from_spec({"dimension": 4})
    with pytest.raises(ConfigError):
        Domain.from_spec({"dimension": 1,
                          "defining_function": {"type": "ball"}})


def test_boundary_sampler_on_surface(ellipsoid):
    pts = ellipsoid.sample_boundary(64, seed=5)
    assert pts.shape == (64, 4)
    assert np.abs(ellipsoid.rho(pts)).max() < 1e-8
    again = ellipsoid.sample_boundary(64, seed=5)
    assert np.array_equal(pts, again)

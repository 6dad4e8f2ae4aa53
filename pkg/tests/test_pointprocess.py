import math

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, strategies as st

from ttessel.geometry import ConvexPolygon
from ttessel.pointprocess import (
    PointPattern,
    PointProcessError,
    PpModel,
    SeparationError,
    fit_logistic,
    fit_pl,
    logistic_criterion,
    lpl_pp,
    lpl_pp_gradient,
    papangelou,
    quadrature,
    simulate_poisson,
    simulate_strauss,
    subconfig_mean_check,
)

UNIT = ConvexPolygon.rectangle(1.0)


def pattern(rng, n, window=UNIT):
    x0, y0, x1, y1 = window.bbox()
    pts = []
    while len(pts) < n:
        p = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        if window.contains(p):
            pts.append(p)
    return PointPattern(window, pts)


def test_papangelou_examples():
    rng = np.random.default_rng(0)
    X = pattern(rng, 30)
    assert papangelou(PpModel.poisson(0.7), (0.5, 0.5), X) == pytest.approx(math.exp(0.7))
    assert papangelou(PpModel.strauss([0.0, 0.0], 0.1), (0.5, 0.5), X) == 1.0
    model = PpModel.strauss([1.2, 0.8], 0.2)
    for _ in range(20):
        u = rng.uniform(size=2)
        with_u = PointPattern(UNIT, np.vstack([X.points, u]))
        diff = model.statistic(with_u) - model.statistic(X)
        assert papangelou(model, u, X) == pytest.approx(math.exp(model.theta @ diff), rel=1e-12)


@pytest.mark.parametrize("resolution", [8, 32, 128])
def test_poisson_pl_maximizer_is_exact(resolution):
    rng = np.random.default_rng(1)
    window = ConvexPolygon.regular(7, 1.3)
    X = pattern(rng, 40, window)
    th = fit_pl(PpModel.poisson(), X, resolution=resolution)
    assert th[0] == pytest.approx(math.log(40 / X.area), abs=1e-10)


def test_quadrature_weights_sum_to_area():
    window = ConvexPolygon.regular(5, 2.0)
    _, w = quadrature(window, 64)
    assert w.sum() == pytest.approx(window_area(window))


def window_area(window):
    from ttessel.geometry import area

    return area(window)


def test_empty_pattern_poisson_lpl():
    X = PointPattern(UNIT, np.zeros((0, 2)))
    assert lpl_pp(PpModel.poisson(), X, [0.4]) == pytest.approx(-math.exp(0.4))
    with pytest.raises(SeparationError):
        fit_pl(PpModel.poisson(), X)
    with pytest.raises(SeparationError):
        fit_logistic(PpModel.poisson(), X, 100.0, np.random.default_rng(0))


def test_strauss_with_zero_interaction_nests_poisson():
    rng = np.random.default_rng(2)
    X = pattern(rng, 25)
    Y = simulate_poisson(UNIT, 200.0, rng)
    s = PpModel.strauss([0.9, 0.0], 0.1)
    p = PpModel.poisson(0.9)
    assert lpl_pp(s, X) == pytest.approx(lpl_pp(p, X), rel=1e-12)
    assert logistic_criterion(s, X, Y, 200.0) == pytest.approx(logistic_criterion(p, X, Y, 200.0), rel=1e-12)


def test_lpl_pp_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    X = pattern(rng, 60)
    model = PpModel.strauss([3.0, 0.5], 0.12)
    for _ in range(5):
        th = rng.normal(size=2) + [3.0, 0.5]
        g = lpl_pp_gradient(model, X, th, resolution=48)
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-6
            fd = (lpl_pp(model, X, th + e, 48) - lpl_pp(model, X, th - e, 48)) / 2e-6
            assert abs(fd - g[i]) <= 1e-5 * max(1.0, abs(g[i]))


def test_lpl_pp_flags_zero_intensity_at_data():
    X = PointPattern(UNIT, [(0.5, 0.5), (0.52, 0.5)])
    model = PpModel.strauss([1.0, math.inf], 0.1)
    assert lpl_pp(model, X) == -math.inf


def test_logistic_criterion_is_concave():
    rng = np.random.default_rng(4)
    X = pattern(rng, 40)
    Y = simulate_poisson(UNIT, 150.0, rng)
    model = PpModel.strauss([0.0, 0.0], 0.1)
    for _ in range(30):
        a = rng.normal(size=2) * 3
        b = rng.normal(size=2) * 3
        f = lambda th: logistic_criterion(model, X, Y, 150.0, th)
        assert f(0.5 * (a + b)) >= 0.5 * (f(a) + f(b)) - 1e-9
        h = 1e-4
        H = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
                H[i, j] = (f(a + ei + ej) - f(a + ei - ej) - f(a - ei + ej) + f(a - ei - ej)) / (4 * h * h)
        assert np.linalg.eigvalsh(H).max() <= 1e-4 * max(1.0, np.abs(H).max())


def test_logistic_fit_matches_binomial_glm():
    rng = np.random.default_rng(5)
    X = simulate_strauss(UNIT, (math.log(80), 0.7), 0.08, rng, n_steps=50_000)
    model = PpModel.strauss([0.0, 0.0], 0.08)
    rho = 400.0
    Y = simulate_poisson(UNIT, rho, rng)
    fit = fit_logistic(model, X, rho, rng, Y=Y)
    Z = np.vstack([model.data_increments(X), model.increments(Y.points, X)])
    resp = np.r_[np.ones(len(X)), np.zeros(len(Y))]
    glm = sm.GLM(resp, Z, family=sm.families.Binomial(), offset=np.full(len(resp), -math.log(rho))).fit()
    assert fit.converged
    assert np.allclose(fit.theta, glm.params, rtol=1e-6, atol=1e-8)
    assert fit.loglik == pytest.approx(logistic_criterion(model, X, Y, rho, fit.theta), rel=1e-12)


def test_logistic_criterion_tail_is_monotone():
    rng = np.random.default_rng(6)
    X = pattern(rng, 20)
    Y = simulate_poisson(UNIT, 100.0, rng)
    vals = [logistic_criterion(PpModel.poisson(), X, Y, 100.0, [t]) for t in (-2, -5, -10, -20, -40)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_coincident_points_rejected():
    X = PointPattern(UNIT, [(0.3, 0.3), (0.6, 0.6)])
    Y = PointPattern(UNIT, [(0.3, 0.3), (0.1, 0.9)])
    with pytest.raises(PointProcessError):
        logistic_criterion(PpModel.poisson(), X, Y, 10.0, [0.0])
    with pytest.raises(PointProcessError):
        PointPattern(UNIT, [(0.3, 0.3), (0.3, 0.3)])
    with pytest.raises(PointProcessError):
        PointPattern(UNIT, [(1.5, 0.3)])


def test_poisson_logistic_fit_is_centred_on_truth():
    rng = np.random.default_rng(7)
    est = []
    for _ in range(100):
        X = simulate_poisson(UNIT, 50.0, rng)
        est.append(fit_logistic(PpModel.poisson(), X, 200.0, rng).theta[0])
    est = np.array(est)
    assert abs(est.mean() - math.log(50)) < 3 * est.std(ddof=1) / math.sqrt(len(est))


def test_inhomogeneous_dummy_intensity():
    rng = np.random.default_rng(8)
    X = simulate_poisson(UNIT, 80.0, rng)
    rho = lambda p: 100.0 + 300.0 * p[:, 0]
    fit = fit_logistic(PpModel.poisson(), X, rho, rng, rho_max=400.0)
    assert fit.converged and abs(fit.theta[0] - math.log(len(X))) < 0.3
    with pytest.raises(ValueError):
        fit_logistic(PpModel.poisson(), X, rho, rng)


def test_strauss_fit_median_inside_bootstrap_band():
    truth = np.array([math.log(100.0), 1.0])
    radius = 0.06
    rng = np.random.default_rng(9)
    est = []
    for _ in range(40):
        X = simulate_strauss(UNIT, truth, radius, rng, n_steps=30_000)
        est.append(fit_logistic(PpModel.strauss([0.0, 0.0], radius), X, 400.0, rng).theta)
    est = np.array(est)
    boot = np.array([np.median(est[rng.integers(0, len(est), len(est))], axis=0) for _ in range(2000)])
    lo, hi = np.percentile(boot, [0.5, 99.5], axis=0)
    assert np.all(lo <= truth) and np.all(truth <= hi), (lo, hi)


def test_strauss_simulator_rejects_unstable_parameters():
    with pytest.raises(PointProcessError):
        simulate_strauss(UNIT, (math.log(100), -5.0), 0.1, np.random.default_rng(0),
                         n_steps=50_000, capacity=500)


def test_subconfig_identity_constant_and_indicator():
    rng = np.random.default_rng(10)
    lhs, rhs, z = subconfig_mean_check(1.0, lambda Y: 1.0, 20_000, rng)
    assert rhs == pytest.approx(math.e) and abs(z) < 3
    lhs, rhs, z = subconfig_mean_check(1.0, lambda Y: float(len(Y) == 0), 2000, rng)
    assert lhs == 1.0 and abs(z) < 3


def test_subconfig_identity_too_many_points():
    with pytest.raises(PointProcessError):
        subconfig_mean_check(30.0, lambda Y: 1.0, 10, np.random.default_rng(0))


def test_csv_round_trip(tmp_path):
    X = pattern(np.random.default_rng(11), 10)
    X.write_csv(tmp_path / "x.csv")
    back = PointPattern.read_csv(tmp_path / "x.csv", UNIT)
    assert np.array_equal(back.points, X.points)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=30, unique=True),
       st.floats(0.01, 0.5))
def test_strauss_increment_counts_neighbours(points, radius):
    pts = np.array(points)
    if len(pts) > 1:
        d = np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1))
        np.fill_diagonal(d, 1.0)
        if d.min() < 1e-6:
            return
    X = PointPattern(UNIT, pts)
    model = PpModel.strauss([0.0, 1.0], radius)
    inc = model.data_increments(X)
    d = np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1))
    expect = (d <= radius).sum(axis=1) - 1
    assert np.array_equal(-inc[:, 1], expect)

import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from vebreg import (AshPrior, DomainError, InversionOptions, ParamLayout, PointNormalPrior,
                    RegressionData, default_ash_grid, invert, make_objective, objective_compound,
                    objective_direct, penalty_compound, penalty_direct, posterior_mean)
from vebreg.objective import recover_coefficients, restrict

from conftest import central_diff, random_ash, random_point_normal, rel_err

TIGHT = InversionOptions(tol=1e-13)


def make_problem(rng, n=40, p=25, family="ash", K=5):
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 2.0, size=p)
    b = np.zeros(p)
    b[rng.choice(p, 4, replace=False)] = rng.normal(scale=2, size=4)
    y = X @ b + rng.normal(size=n)
    g = random_ash(rng, K=K) if family == "ash" else random_point_normal(rng)
    return RegressionData.from_arrays(X, y), g


def elbo_oracle(z, g, sigma2, X, y):
    """Mean-field ELBO with each factor the exact normal-means posterior at z_j.

    KL(q_j || g) follows from Bayes' rule: log q = log N(z|beta, v2) + log g - log m(z).
    """
    log_pi, var = g.mixture()
    n = y.size
    d2 = 1.0 / (X ** 2).sum(axis=0)
    total_var, kl, means = 0.0, 0.0, []
    for j, zj in enumerate(z):
        v2 = sigma2 * d2[j]
        t = var + v2
        log_w = log_pi + stats.norm.logpdf(zj, scale=np.sqrt(t))
        logml = logsumexp(log_w)
        r = np.exp(log_w - logml)
        m = zj * var / t
        s2 = var * v2 / t
        mean = r @ m
        second = r @ (s2 + m ** 2)
        vj = second - mean ** 2
        means.append(mean)
        total_var += vj / d2[j]
        e_sq = (zj - mean) ** 2 + vj
        kl += -0.5 * math.log(2 * math.pi * v2) - e_sq / (2 * v2) - logml
    b = np.array(means)
    e_rss = np.sum((y - X @ b) ** 2) + total_var
    return -0.5 * n * math.log(2 * math.pi * sigma2) - e_rss / (2 * sigma2) - kl


# -------------------------------------------------------------- penalties

def test_penalty_direct_single_normal():
    g = AshPrior([1.0])
    pen = penalty_direct(np.array([1.0]), g, 1.0)
    expected = -stats.norm.logpdf(2.0, scale=math.sqrt(2)) - 0.5
    np.testing.assert_allclose(pen.value, expected, rtol=1e-14)
    np.testing.assert_allclose(pen.value, 1.7655, atol=1e-4)
    np.testing.assert_allclose(pen.d_coef, 1.0, rtol=1e-14)


def test_penalty_direct_at_zero():
    rng = np.random.default_rng(0)
    g = random_ash(rng)
    pen = penalty_direct(np.array([0.0]), g, 0.9)
    expected = -logsumexp(np.log(g.weights) + stats.norm.logpdf(0, scale=np.sqrt(g.grid_variances + 0.9)))
    np.testing.assert_allclose(pen.value, expected, rtol=1e-13)
    assert pen.d_coef[0] == 0.0


def test_penalty_compound_at_zero_and_single_normal():
    rng = np.random.default_rng(1)
    g = random_ash(rng)
    pc, pd = penalty_compound(np.array([0.0]), g, 0.9), penalty_direct(np.array([0.0]), g, 0.9)
    np.testing.assert_allclose(pc.value, pd.value, rtol=1e-14)
    assert pc.d_coef[0] == 0.0
    pc = penalty_compound(np.array([2.0]), AshPrior([1.0]), 1.0)
    np.testing.assert_allclose(pc.value, -stats.norm.logpdf(2.0, scale=math.sqrt(2)) - 0.5,
                               rtol=1e-14)


def test_penalty_identity_random():
    rng = np.random.default_rng(2)
    for _ in range(20):
        g = random_ash(rng) if rng.random() < 0.6 else random_point_normal(rng)
        v2 = rng.uniform(0.1, 3, size=200)
        z = rng.normal(scale=6, size=200)
        b = posterior_mean(z, g, v2)
        np.testing.assert_allclose(penalty_compound(z, g, v2).value,
                                   penalty_direct(b, g, v2, T=z).value, rtol=0, atol=1e-8)


def test_penalty_partials_against_finite_differences():
    rng = np.random.default_rng(3)
    g = random_point_normal(rng)
    z = rng.normal(scale=3, size=10)
    v2 = 0.7
    h = 1e-6
    pc = penalty_compound(z, g, v2)
    fd_z = (penalty_compound(z + h, g, v2).value - penalty_compound(z - h, g, v2).value) / (2 * h)
    fd_v2 = (penalty_compound(z, g, v2 + h).value - penalty_compound(z, g, v2 - h).value) / (2 * h)
    np.testing.assert_allclose(pc.d_coef, fd_z, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(pc.d_v2, fd_v2, rtol=1e-6, atol=1e-7)
    b = posterior_mean(z, g, v2)
    pd = penalty_direct(b, g, v2, TIGHT)
    fd_b = (penalty_direct(b + h, g, v2, TIGHT).value - penalty_direct(b - h, g, v2, TIGHT).value) / (2 * h)
    np.testing.assert_allclose(pd.d_coef, fd_b, rtol=1e-5, atol=1e-6)


# ----------------------------------------------------------- objectives

@pytest.mark.parametrize("family", ["ash", "point-normal"])
def test_compound_value_equals_meanfield_elbo(family):
    rng = np.random.default_rng(4)
    data, g = make_problem(rng, family=family)
    X = data.operator.X
    layout = ParamLayout(data.p, g)
    for _ in range(3):
        z = rng.normal(scale=2, size=data.p)
        sigma2 = rng.uniform(0.3, 3)
        ov = objective_compound(layout.pack(z, g, sigma2), data, layout)
        np.testing.assert_allclose(ov.elbo, elbo_oracle(z, g, sigma2, X, data.y), rtol=1e-10)


def test_direct_equals_compound():
    rng = np.random.default_rng(5)
    for family in ("ash", "point-normal"):
        data, g = make_problem(rng, family=family)
        layout = ParamLayout(data.p, g)
        sigma2 = 1.3
        z = rng.normal(scale=3, size=data.p)
        b = recover_coefficients(z, g, sigma2, data)
        hc = objective_compound(layout.pack(z, g, sigma2), data, layout).value
        hd = objective_direct(layout.pack(b, g, sigma2), data, layout, TIGHT).value
        assert abs(hc - hd) <= 1e-7 * max(1, abs(hc))


@pytest.mark.parametrize("method", ["direct", "compound"])
@pytest.mark.parametrize("family, K", [("ash", 1), ("ash", 5), ("ash", 20), ("point-normal", 2)])
def test_gradient_finite_differences(method, family, K):
    rng = np.random.default_rng(6 + K)
    data, g = make_problem(rng, n=30, p=20, family=family, K=K)
    layout = ParamLayout(data.p, g)
    coef = rng.normal(scale=1.5, size=data.p)
    if method == "direct":
        coef = posterior_mean(coef, g, 1.0 * data.d2)
    x = layout.pack(coef, g, rng.uniform(0.5, 2))
    f = make_objective(method, data, layout, TIGHT)
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    fd = central_diff(lambda v: f(v)[0], x, h)
    assert rel_err(f(x)[1], fd) <= 1e-5


def test_shift_changes_only_residual_term():
    rng = np.random.default_rng(7)
    data, g = make_problem(rng)
    layout = ParamLayout(data.p, g)
    z = rng.normal(size=data.p)
    sigma2 = 0.8
    x = layout.pack(z, g, sigma2)
    X = data.operator.X
    shifted = RegressionData.from_arrays(X, data.y + 3.0)
    b = recover_coefficients(z, g, sigma2, data)
    expected = (np.sum((data.y + 3 - X @ b) ** 2) - np.sum((data.y - X @ b) ** 2)) / (2 * sigma2)
    delta = objective_compound(x, shifted, layout).value - objective_compound(x, data, layout).value
    np.testing.assert_allclose(delta, expected, rtol=1e-10)


@pytest.mark.parametrize("method", ["direct", "compound"])
def test_one_product_each_way_per_evaluation(method):
    rng = np.random.default_rng(8)
    data, g = make_problem(rng)
    layout = ParamLayout(data.p, g)
    f = make_objective(method, data, layout)
    x = layout.pack(posterior_mean(rng.normal(size=data.p), g, data.d2), g, 1.0)
    data.operator.reset_counters()
    for _ in range(3):
        f(x)
    assert (data.operator.n_matvec, data.operator.n_rmatvec) == (3, 3)


def test_recover_coefficients():
    rng = np.random.default_rng(9)
    data, _ = make_problem(rng)
    g = AshPrior([1.5])
    z = rng.normal(size=data.p)
    v2 = 0.6 * data.d2
    np.testing.assert_allclose(recover_coefficients(z, g, 0.6, data), z * 1.5 / (1.5 + v2),
                               rtol=1e-14)
    np.testing.assert_array_equal(recover_coefficients(np.zeros(data.p), g, 0.6, data), 0.0)


def test_layout_round_trip():
    g = AshPrior(default_ash_grid(4), [0.1, 0.2, 0.3, 0.4])
    layout = ParamLayout(3, g)
    x = layout.pack([1.0, -2.0, 3.0], g, 0.25)
    assert x.size == layout.size == 3 + 3 + 1
    coef, g2, s2 = layout.unpack(x)
    np.testing.assert_array_equal(coef, [1.0, -2.0, 3.0])
    np.testing.assert_allclose(g2.weights, g.weights, atol=1e-12)
    np.testing.assert_allclose(s2, 0.25, rtol=1e-12)
    with pytest.raises(DomainError):
        layout.unpack(np.zeros(5))
    with pytest.raises(DomainError):
        layout.pack([1.0, 2.0], g, 1.0)


def test_restrict_freezes_other_blocks():
    rng = np.random.default_rng(10)
    data, g = make_problem(rng)
    layout = ParamLayout(data.p, g)
    x = layout.pack(rng.normal(size=data.p), g, 1.0)
    f = make_objective("compound", data, layout)
    fr, embed = restrict(f, x, layout.prior_block)
    v, gr = fr(x[layout.prior_block])
    vf, gf = f(x)
    assert v == vf
    np.testing.assert_array_equal(gr, gf[layout.prior_block])
    np.testing.assert_array_equal(embed(x[layout.prior_block]), x)


def test_data_validation():
    with pytest.raises(DomainError):
        RegressionData.from_arrays(np.ones((3, 2)), np.ones(4))
    X = np.ones((3, 2))
    X[:, 1] = 0
    with pytest.raises(DomainError):
        RegressionData.from_arrays(X, np.ones(3))
    rng = np.random.default_rng(0)
    data, g = make_problem(rng)
    with pytest.raises(DomainError):
        make_objective("newton", data, ParamLayout(data.p, g))

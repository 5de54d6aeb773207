import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import rosen, rosen_der

from vebreg import DomainError, NumericalError, SolverOptions, minimize


def quadratic(c):
    return lambda x: (0.5 * float((x - c) @ (x - c)), x - c)


def spd_quadratic(rng, dim):
    Q = rng.normal(size=(dim, dim))
    A = Q @ Q.T + dim * np.eye(dim)
    b = rng.normal(size=dim)
    return (lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b)), np.linalg.solve(A, b)


def test_isotropic_quadratic():
    c = np.array([3.0, -1.0, 2.0])
    res = minimize(quadratic(c), np.zeros(3), SolverOptions(grad_tol=1e-10))
    assert res.n_iters <= 3
    assert res.grad_norm <= 1e-10
    np.testing.assert_allclose(res.x, c, atol=1e-10)
    assert res.status == "converged_grad" and res.converged


def test_rosenbrock():
    f = lambda x: (rosen(x), rosen_der(x))
    res = minimize(f, np.array([-1.2, 1.0]), SolverOptions(grad_tol=1e-10, rel_obj_tol=0))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)


@pytest.mark.parametrize("dim", [5, 10, 20, 40])
def test_full_memory_quadratic_finite_termination(dim):
    rng = np.random.default_rng(dim)
    f, x_star = spd_quadratic(rng, dim)
    # finite termination needs (near) exact line searches, hence the tiny c2
    opts = SolverOptions(memory=dim, grad_tol=1e-5, rel_obj_tol=0.0, c1=1e-6, c2=1e-4)
    res = minimize(f, rng.normal(size=dim), opts)
    assert res.status == "converged_grad"
    assert res.n_iters <= dim + 1
    np.testing.assert_allclose(res.x, x_star, atol=1e-6)


def test_accepted_steps_satisfy_strong_wolfe():
    rng = np.random.default_rng(1)
    f, _ = spd_quadratic(rng, 15)
    opts = SolverOptions(memory=3, grad_tol=1e-9, rel_obj_tol=0.0)
    steps = []
    minimize(lambda x: (rosen(x), rosen_der(x)), np.full(6, -1.0), opts, callback=steps.append)
    minimize(f, rng.normal(size=15), opts, callback=steps.append)
    assert len(steps) > 10
    for s in steps:
        assert s.dphi0 < 0
        assert s.f <= s.f0 + opts.c1 * s.step * s.dphi0 + 1e-12 * abs(s.f0)
        assert abs(s.dphi) <= opts.c2 * abs(s.dphi0) + 1e-12


def test_trace_monotone():
    f = lambda x: (rosen(x), rosen_der(x))
    res = minimize(f, np.full(10, 2.0), SolverOptions(max_iters=300))
    assert np.all(np.diff(res.trace) <= 0)
    assert len(res.trace) == res.n_iters + 1


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_quadratic_from_any_start(x0):
    c = np.linspace(-1, 1, len(x0))
    res = minimize(quadratic(c), np.array(x0), SolverOptions(grad_tol=1e-9))
    np.testing.assert_allclose(res.x, c, atol=1e-8)


def test_separable_convex_large_scale():
    # sum softplus-like terms: strictly convex, separable
    def f(x, a):
        e = np.exp(-np.abs(x))
        val = np.sum(np.abs(x) + 2 * np.log1p(e) + 0.5 * a * x * x - x)
        grad = np.tanh(x / 2) + a * x - 1.0
        return float(val), grad

    times = []
    for p in (10_000, 40_000):
        a = np.linspace(0.5, 2.0, p)
        t0 = time.perf_counter()
        res = minimize(lambda x: f(x, a), np.zeros(p), SolverOptions(grad_tol=1e-8))
        times.append((time.perf_counter() - t0) / max(res.n_iters, 1))
        assert res.converged
        assert res.grad_norm <= 1e-8 or res.status == "converged_obj"
    # four times the size should cost well under sixteen times per iteration
    assert times[1] / times[0] < 10


def test_max_iters_status():
    f = lambda x: (rosen(x), rosen_der(x))
    res = minimize(f, np.array([-1.2, 1.0]), SolverOptions(max_iters=3))
    assert res.status == "max_iters" and res.n_iters == 3 and not res.converged


def test_line_search_failure_reported():
    # gradient points the wrong way, so no step can decrease f
    f = lambda x: (float(x @ x), -2 * x)
    res = minimize(f, np.array([1.0, 2.0]))
    assert res.status == "line_search_failure"


def test_nonfinite_start_raises():
    with pytest.raises(NumericalError):
        minimize(quadratic(np.zeros(2)), np.array([np.nan, 0.0]))


def test_options_validation():
    with pytest.raises(DomainError):
        SolverOptions(c1=0.9, c2=0.1)
    with pytest.raises(DomainError):
        SolverOptions(memory=0)

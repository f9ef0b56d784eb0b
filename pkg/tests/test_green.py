import math

import numpy as np
import pytest

import dichokit as dk


@pytest.fixture(scope="module")
def solve_setup():
    """Wide diag window so comparisons against closed forms have small tails."""
    sys = dk.builtin("const_diag", {"diag": (-1.0, 1.0)})
    grid = dk.make_grid(-14.0, 14.0, 0.01)
    cache = dk.propagate(sys, grid)
    report = dk.window_projector(cache)
    return cache, report


def tight_mask(sol, level=1e-4):
    return sol.tail_error_bound <= level * max(sol.f_sup, 1e-300)


def test_operator_on_constant_zero_field():
    sys = dk.constant_system(np.zeros((2, 2)), name="zero")
    cache = dk.propagate(sys, dk.make_grid(0.0, 1.0, 0.1))
    x = np.tile([2.0, -3.0], (cache.grid.n_points, 1))
    assert np.abs(dk.apply_ode_operator(cache, x)).max() <= 1e-13


def test_operator_on_exact_solution(diag_cache):
    x = np.stack([np.exp(-diag_cache.grid.points), np.zeros(diag_cache.grid.n_points)], axis=1)
    res = dk.apply_ode_operator(diag_cache, x)
    # second-order stencils: residual O(h^2) relative to the local magnitude
    assert np.all(np.abs(res[:, 0]) <= diag_cache.grid.h**2 * x[:, 0])
    assert np.abs(res[:, 1]).max() == 0.0


def test_operator_on_linear_function():
    sys = dk.constant_system(np.zeros((2, 2)), name="zero")
    cache = dk.propagate(sys, dk.make_grid(0.0, 1.0, 0.1))
    x = np.stack([cache.grid.points, np.zeros(cache.grid.n_points)], axis=1)
    res = dk.apply_ode_operator(cache, x)
    assert np.abs(res - [1.0, 0.0]).max() <= 1e-12


def test_operator_grid_too_coarse():
    sys = dk.constant_system(np.zeros((2, 2)), name="zero")
    cache = dk.propagate(sys, dk.make_grid(0.0, 1.0, 1.0))
    with pytest.raises(dk.GridTooCoarse):
        dk.apply_ode_operator(cache, np.zeros((2, 2)))


def test_kernel_closed_form(diag_cache, diag_report):
    g_fwd = dk.green_kernel(diag_cache, diag_report, 2.0, 1.0)
    assert np.abs(g_fwd - np.diag([math.exp(-1.0), 0.0])).max() <= 1e-8
    g_bwd = dk.green_kernel(diag_cache, diag_report, 1.0, 2.0)
    assert np.abs(g_bwd - np.diag([0.0, -math.exp(-1.0)])).max() <= 1e-8


def test_kernel_diagonal_is_projector(diag_cache, diag_report):
    fam = dk.projector_family(diag_cache, diag_report)
    k = diag_cache.grid.index_of(3.0)
    assert np.abs(dk.green_kernel(diag_cache, diag_report, 3.0, 3.0) - fam.projectors[k]).max() <= 1e-12


def test_kernel_decay_bound(rotating_cache, rotating_report):
    rng = np.random.default_rng(5)
    pts = rotating_cache.grid.points
    for _ in range(200):
        i, j = rng.integers(0, len(pts), 2)
        g = dk.green_kernel(rotating_cache, rotating_report, pts[i], pts[j])
        d = pts[i] - pts[j]
        if d >= 0:
            bound = rotating_report.N1 * math.exp(-rotating_report.nu1 * d)
        else:
            bound = rotating_report.N2 * math.exp(rotating_report.nu2 * d)
        assert np.linalg.norm(g, 2) <= bound * (1.0 + 1e-9)


def test_kernel_requires_dichotomy(shear_sys):
    cache = dk.propagate(shear_sys, dk.make_grid(-8.0, 8.0, 0.01))
    rep = dk.window_projector(cache)
    with pytest.raises(dk.NotDichotomic):
        dk.green_kernel(cache, rep, 1.0, 0.0)


def test_solve_constant_forcing(solve_setup):
    cache, report = solve_setup
    f = dk.make_forcing(lambda t: np.array([1.0, 1.0]), cache.grid)
    sol = dk.green_solve(cache, report, f)
    m = tight_mask(sol)
    assert m.any()
    assert np.abs(sol.u[m] - np.array([1.0, -1.0])).max() <= 1e-4
    assert sol.bound_margin >= 1.0 - 1e-6
    assert sol.residual_sup <= sol.residual_tol


def test_solve_zero_forcing_is_exactly_zero(solve_setup):
    cache, report = solve_setup
    f = dk.make_forcing(lambda t: np.zeros(2), cache.grid)
    sol = dk.green_solve(cache, report, f)
    assert np.array_equal(sol.u, np.zeros_like(sol.u))


def test_solve_cosine_forcing_closed_form(solve_setup):
    cache, report = solve_setup
    f = dk.make_forcing(lambda t: np.array([math.cos(t), 0.0]), cache.grid)
    sol = dk.green_solve(cache, report, f)
    m = tight_mask(sol)
    truth = 0.5 * (np.cos(cache.grid.points) + np.sin(cache.grid.points))
    assert np.abs(sol.u[m, 0] - truth[m]).max() <= 1e-4
    assert np.abs(sol.u[:, 1]).max() <= 1e-12


def test_solve_linearity(solve_setup):
    cache, report = solve_setup
    rng = np.random.default_rng(3)
    c1, c2 = rng.standard_normal((2, 2))
    f1 = dk.make_forcing(lambda t: c1 * math.sin(0.5 * t), cache.grid)
    f2 = dk.make_forcing(lambda t: c2 * math.cos(0.3 * t), cache.grid)
    fsum = dk.make_forcing(lambda t: c1 * math.sin(0.5 * t) + c2 * math.cos(0.3 * t), cache.grid)
    u1 = dk.green_solve(cache, report, f1).u
    u2 = dk.green_solve(cache, report, f2).u
    usum = dk.green_solve(cache, report, fsum).u
    tol = 1e-8 * (f1.sup_norm + f2.sup_norm)
    assert np.abs(usum - (u1 + u2)).max() <= tol


def test_solve_residual_second_order():
    sys = dk.builtin("const_diag", {"diag": (-1.0, 1.0)})
    sups = {}
    for h in (0.01, 0.005):
        grid = dk.make_grid(-10.0, 10.0, h)
        cache = dk.propagate(sys, grid)
        report = dk.window_projector(cache)
        f = dk.make_forcing(lambda t: np.array([math.cos(t), 0.0]), grid)
        sups[h] = dk.green_solve(cache, report, f).residual_sup
    assert sups[0.01] / sups[0.005] >= 3.5


def test_solve_residual_tolerance_on_catalog(rotating_cache, rotating_report,
                                             periodic_cache):
    per_report = dk.window_projector(periodic_cache)
    for cache, report in ((rotating_cache, rotating_report), (periodic_cache, per_report)):
        f = dk.make_forcing(lambda t: np.array([math.cos(t), math.sin(0.7 * t)]), cache.grid)
        sol = dk.green_solve(cache, report, f)
        assert sol.residual_sup <= sol.residual_tol


def test_solve_tail_dominates_short_window():
    # wide enough to certify the dichotomy, too short for a 1% tail anywhere
    sys = dk.builtin("const_diag", {"diag": (-1.0, 1.0)})
    grid = dk.make_grid(-4.0, 4.0, 0.01)
    cache = dk.propagate(sys, grid)
    report = dk.window_projector(cache)
    assert report.is_dichotomic
    f = dk.make_forcing(lambda t: np.array([1.0, 1.0]), grid)
    with pytest.raises(dk.TailDominates):
        dk.green_solve(cache, report, f)


def test_solve_requires_dichotomy(shear_sys):
    cache = dk.propagate(shear_sys, dk.make_grid(-8.0, 8.0, 0.01))
    rep = dk.window_projector(cache)
    f = dk.make_forcing(lambda t: np.array([1.0, 0.0]), cache.grid)
    with pytest.raises(dk.NotDichotomic):
        dk.green_solve(cache, rep, f)


def test_inverse_bound_constant_forcing(solve_setup):
    cache, report = solve_setup
    f = dk.make_forcing(lambda t: np.array([1.0, 1.0]), cache.grid)
    sol = dk.green_solve(cache, report, f)
    ib = dk.check_inverse_bound(sol, report)
    assert ib.passed
    assert ib.ratio == pytest.approx(1.0, abs=1e-3)
    assert ib.bound == pytest.approx(2.0, abs=0.05)


def test_inverse_bound_zero_forcing(solve_setup):
    cache, report = solve_setup
    sol = dk.green_solve(cache, report, dk.make_forcing(lambda t: np.zeros(2), cache.grid))
    assert dk.check_inverse_bound(sol, report).ratio == 0.0


def test_inverse_bound_violation_detected(solve_setup):
    cache, report = solve_setup
    f = dk.make_forcing(lambda t: np.array([1.0, 1.0]), cache.grid)
    sol = dk.green_solve(cache, report, f)
    # Constants claiming 4x the true rates imply a bound of 0.5 < realized 1.
    inflated = dk.DichotomyReport(
        verdict=report.verdict, gap_ratio=report.gap_ratio, t_ref=report.t_ref,
        P=report.P, Q=report.Q, X1_basis=report.X1_basis, X2_basis=report.X2_basis,
        N1=report.N1, nu1=4.0 * report.nu1, N2=report.N2, nu2=4.0 * report.nu2,
    )
    with pytest.raises(dk.BoundViolated):
        dk.check_inverse_bound(sol, inflated)


@pytest.fixture(scope="module")
def split_setup():
    sys = dk.builtin("const_diag", {"diag": (-1.0, 1.0)})
    grid = dk.make_grid(-8.0, 8.0, 0.001)
    cache = dk.propagate(sys, grid)
    report = dk.window_projector(cache)
    return cache, report


def test_split_stable_direction(split_setup):
    cache, report = split_setup
    res = dk.constructive_split(cache, report, np.array([1.0, 0.0]))
    assert np.abs(res.x1 - [1.0, 0.0]).max() <= 1e-6
    assert np.abs(res.x2).max() <= 1e-6
    # the homogeneous solution grows backward to exp(T), and the discrete
    # residual is second order relative to that scale
    assert res.homogeneous_residual <= cache.grid.h**2 * math.exp(cache.grid.t_max)


def test_split_zero_vector(split_setup):
    cache, report = split_setup
    res = dk.constructive_split(cache, report, np.zeros(2))
    assert np.array_equal(res.x1, np.zeros(2))
    assert np.array_equal(res.x2, np.zeros(2))


def test_split_matches_projection(split_setup):
    cache, report = split_setup
    q = np.eye(2) - report.P
    rng = np.random.default_rng(17)
    for _ in range(10):
        x = rng.standard_normal(2)
        res = dk.constructive_split(cache, report, x)
        assert np.abs(res.x1 + res.x2 - x).max() <= 1e-9 * max(1.0, np.linalg.norm(x))
        assert np.abs(res.x1 - report.P @ x).max() <= 1e-5
        assert np.abs(res.x2 - q @ x).max() <= 1e-5
        assert math.isfinite(res.forward_sup) and math.isfinite(res.backward_sup)


def test_scalar_system_vacuous_backward_side():
    grid = dk.make_grid(-10.0, 10.0, 0.01)
    res = dk.analyze_system(dk.constant_system([[-0.8]], name="scalar"), grid)
    assert res.report.is_dichotomic and res.report.q_vacuous
    assert res.report.inverse_norm_bound() == pytest.approx(1.25, rel=0.02)
    sol = dk.green_solve(res.cache, res.report,
                         dk.make_forcing(lambda t: np.array([1.0]), res.cache.grid))
    m = tight_mask(sol)
    assert np.abs(sol.u[m, 0] - 1.25).max() <= 1e-3


def test_scalar_system_vacuous_forward_side():
    # all-growing scalar mode: the bounded response integrates backward
    grid = dk.make_grid(-10.0, 10.0, 0.01)
    res = dk.analyze_system(dk.constant_system([[0.5]], name="scalar_up"), grid)
    assert res.report.is_dichotomic and res.report.p_vacuous
    sol = dk.green_solve(res.cache, res.report,
                         dk.make_forcing(lambda t: np.array([1.0]), res.cache.grid))
    m = tight_mask(sol)
    assert np.abs(sol.u[m, 0] + 2.0).max() <= 1e-3


def test_inverse_bound_random_forcings_on_catalog(rotating_cache, rotating_report,
                                                  periodic_cache):
    per_report = dk.window_projector(periodic_cache)
    rng = np.random.default_rng(31)
    for cache, report in ((rotating_cache, rotating_report), (periodic_cache, per_report)):
        for _ in range(10):
            c = rng.standard_normal((2, 2))
            w = rng.uniform(0.3, 1.5)

            def f(t, _c=c, _w=w):
                return _c[0] + _c[1] * math.sin(_w * t)

            sol = dk.green_solve(cache, report, dk.make_forcing(f, cache.grid))
            ib = dk.check_inverse_bound(sol, report)
            assert ib.passed and ib.ratio <= ib.bound + 1e-9


def test_split_needs_wide_window(diag_sys):
    grid = dk.make_grid(-2.0, 2.0, 0.01)
    cache = dk.propagate(diag_sys, grid)
    report = dk.window_projector(cache)
    with pytest.raises(dk.InvalidGrid):
        dk.constructive_split(cache, report, np.array([1.0, 0.0]))

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from eztc.errors import (
    CostMismatch,
    InsolventState,
    OutOfDomain,
    OutOfRange,
    PoleHit,
)
from eztc.fbsolver import solve_free_boundary
from eztc.model import CostParams
from eztc.policy import (
    MobiusTransform,
    build_tables,
    kappa_right_anchored,
    mobius,
    real_boundaries,
)


def test_mobius_fixed_points_and_values():
    for c in (0.3, 1.0, 1.3, 2.7):
        assert mobius(c, 0.0) == 0.0
        assert mobius(c, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert mobius(1.3, 0.5) == pytest.approx(0.65 / 1.15, rel=1e-15)


def test_mobius_group_law_and_inverse():
    rng = np.random.default_rng(5)
    for _ in range(200):
        c, d = rng.uniform(0.5, 3.0, 2)
        q = rng.uniform(-0.4, 1.4)
        if abs(1.0 + (d - 1.0) * q) < 1e-3:
            continue
        inner = mobius(d, q)
        if abs(1.0 + (c - 1.0) * inner) < 1e-3 or abs(1.0 + (c * d - 1.0) * q) < 1e-3:
            continue
        assert mobius(c, inner) == pytest.approx(mobius(c * d, q), abs=1e-12)
        assert mobius(c, mobius(1.0 / c, q)) == pytest.approx(q, abs=1e-12)


def test_mobius_pole():
    with pytest.raises(PoleHit):
        mobius(1.3, 1.0 / (1.0 - 1.3))
    t = MobiusTransform(1.3)
    assert t.pole == pytest.approx(1.0 / (1.0 - 1.3))
    assert t.inverse().c == pytest.approx(1 / 1.3)
    assert t.compose(MobiusTransform(2.0)).c == pytest.approx(2.6)


def test_kappa_boundaries_and_monotone(ex1_tables, costs_set1):
    tab = ex1_tables
    assert tab.kappa_grid[0] == pytest.approx(costs_set1.gamma_up, abs=1e-9)
    assert tab.kappa_grid[-1] == pytest.approx(1.0 / costs_set1.gamma_down, abs=1e-9)
    # decreasing (flat only to rounding at the tangency boundaries)
    assert np.all(np.diff(tab.kappa_grid) < 1e-14)
    assert np.all(tab.kappa_grid <= costs_set1.gamma_up + 1e-8)
    assert np.all(tab.kappa_grid >= 1.0 / costs_set1.gamma_down - 1e-8)


def test_kappa_right_anchored_agrees(ex1_tables, ex2_tables):
    for tab in (ex1_tables, ex2_tables):
        right = kappa_right_anchored(tab)
        assert np.max(np.abs(right / tab.kappa_grid - 1.0)) < 1e-8


def test_kappa_rescaled_costs(ex1_sol, costs_set1, costs_set3):
    # same xi, different split: kappa scales by the ratio of gamma_up
    t1 = build_tables(ex1_sol, costs_set1)
    t3 = build_tables(ex1_sol, costs_set3)
    ratio = costs_set3.gamma_up / costs_set1.gamma_up
    assert np.max(np.abs(t3.kappa_grid / t1.kappa_grid - ratio)) < 1e-12


def test_kappa_cost_mismatch(ex1_sol):
    with pytest.raises(CostMismatch):
        build_tables(ex1_sol, CostParams(1.4, 1.3))


def test_kappa_out_of_range(ex1_tables):
    with pytest.raises(OutOfRange):
        ex1_tables.kappa(ex1_tables.shadow.q_star - 0.01)


def test_key_identity_kappa_prime(ex1_tables, ex2_tables):
    # kappa'/kappa = S/(1-S) n'/(q n), central differences at 100 interior grid nodes
    for tab in (ex1_tables, ex2_tables):
        sol = tab.shadow
        params = sol.params
        kprime = np.gradient(tab.kappa_grid, sol.grid_q)
        lhs = kprime / tab.kappa_grid
        rhs = params.S / (1.0 - params.S) * sol.n_prime_at(sol.grid_q) \
            / (sol.grid_q * sol.grid_n)
        width = sol.q_upper - sol.q_star
        interior = np.where((sol.grid_q > sol.q_star + 0.1 * width)
                            & (sol.grid_q < sol.q_upper - 0.1 * width))[0]
        idx = interior[np.linspace(0, len(interior) - 1, 100).astype(int)]
        err = np.abs(lhs[idx] - rhs[idx])
        assert np.max(err / (1.0 + np.abs(rhs[idx]))) < 1e-6


def test_kappa_ode_residual(ex1_tables):
    sol = ex1_tables.shadow
    params = sol.params
    qs = np.linspace(sol.q_star, sol.q_upper, 120)[10:-10]
    h = 1e-6
    kprime = (ex1_tables.kappa(qs + h) - ex1_tables.kappa(qs - h)) / (2 * h)
    expected = ex1_tables.kappa(qs) / (qs * (1 - qs)) \
        * (params.m(qs) - sol.n_at(qs)) / (params.ell(qs) - sol.n_at(qs))
    assert np.max(np.abs(kprime - expected)) < 1e-6 * (1 + np.max(np.abs(expected)))


def test_real_boundaries_ordering(ex1, ex1_sol, costs_set1):
    p_star, p_upper = real_boundaries(ex1_sol, costs_set1)
    assert 0 < p_star < ex1.q_M < p_upper < 1
    assert p_star == pytest.approx(
        ex1_sol.q_star / (1.3 + (1 - 1.3) * ex1_sol.q_star), rel=1e-14)


def test_real_boundaries_cost_split(ex1_sol, costs_set1, costs_set3):
    # Set 1 and Set 3 share xi (same shadow wedge) but Set 1 has larger p_* and p^*
    p1 = real_boundaries(ex1_sol, costs_set1)
    p3 = real_boundaries(ex1_sol, costs_set3)
    assert p1[0] > p3[0]
    assert p1[1] > p3[1]


def test_zero_cost_limit_boundaries(ex2):
    sol = solve_free_boundary(ex2, 1.0 + 1e-9)
    costs = CostParams(1.0, 1.0 + 1e-9)
    p_star, p_upper = real_boundaries(sol, costs)
    assert p_star == pytest.approx(sol.q_star, abs=1e-8)
    assert p_upper == pytest.approx(sol.q_upper, abs=1e-8)


def test_example2_p_upper_insensitive_to_gamma_up(ex2, ex2_sol):
    # both xi values cross the singular point, so q^* and hence p^* at fixed
    # gamma_down do not move when gamma_up changes
    other = solve_free_boundary(ex2, 2.1125)
    pu1 = real_boundaries(ex2_sol, CostParams(1.3, 1.3))[1]
    pu2 = real_boundaries(other, CostParams(1.625, 1.3))[1]
    assert pu1 == pytest.approx(pu2, abs=1e-8)


def test_q_of_p_endpoints_and_monotone(ex1_tables):
    tab = ex1_tables
    assert tab.q_of_p(tab.p_star) == pytest.approx(tab.shadow.q_star, abs=1e-12)
    assert tab.q_of_p(tab.p_upper) == pytest.approx(tab.shadow.q_upper, abs=1e-12)
    ps = np.linspace(tab.p_star, tab.p_upper, 200)
    qs = tab.q_of_p(ps)
    assert np.all(np.diff(qs) > 0)
    with pytest.raises(OutOfRange):
        tab.q_of_p(tab.p_star - 1e-3)


def test_q_of_p_fixes_one_when_crossed(ex2_tables):
    assert ex2_tables.p_star < 1.0 < ex2_tables.p_upper
    assert ex2_tables.q_of_p(1.0) == pytest.approx(1.0, abs=1e-10)
    assert ex2_tables.p_of_q(1.0) == pytest.approx(1.0, abs=1e-10)


def test_q_of_p_ode_residual(ex1_tables):
    # q'(p) = (ell(q) - n(q)) / (ell(p) - m(p)) at interior points
    tab = ex1_tables
    sol = tab.shadow
    params = sol.params
    ps = np.linspace(tab.p_star, tab.p_upper, 120)[10:-10]
    h = 1e-7
    qprime = (tab.q_of_p(ps + h) - tab.q_of_p(ps - h)) / (2 * h)
    qs = tab.q_of_p(ps)
    expected = (params.ell(qs) - sol.n_at(qs)) / (params.ell(ps) - params.m(ps))
    assert np.max(np.abs(qprime - expected)) < 1e-6 * np.max(1.0 + np.abs(expected))


def test_q_of_p_against_direct_ode_integration(ex1_tables):
    # independent oracle: integrate q'(p) from p_* and compare midway
    tab = ex1_tables
    sol = tab.shadow
    params = sol.params

    def rhs(p, q):
        return (params.ell(q[0]) - sol.n_at(q[0])) / (params.ell(p) - params.m(p))

    p_mid = 0.5 * (tab.p_star + tab.p_upper)
    res = solve_ivp(rhs, (tab.p_star, p_mid), [sol.q_star], method="DOP853",
                    rtol=1e-10, atol=1e-12)
    assert res.success
    assert tab.q_of_p(p_mid) == pytest.approx(res.y[0][-1], abs=5e-7)


def test_fraction_identity(ex1):
    # (m(q) - ell(q))/(m(p) - ell(p)) = q(1-q)/(p(1-p)) exactly on the quadratics
    rng = np.random.default_rng(7)
    for _ in range(32):
        p, q = rng.uniform(0.05, 0.9, 2)
        lhs = (ex1.m(q) - ex1.ell(q)) / (ex1.m(p) - ex1.ell(p))
        rhs = q * (1 - q) / (p * (1 - p))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_extended_policy_clamps(ex1_tables, costs_set1):
    tab = ex1_tables
    sol = tab.shadow
    below = tab.p_star - 0.05
    q_bar, kap, n_bar = tab.extended(below)
    assert kap == costs_set1.gamma_up
    assert n_bar == pytest.approx(sol.params.m(sol.q_star))
    assert q_bar == pytest.approx(mobius(costs_set1.gamma_up, below))
    above = tab.p_upper + 0.02
    q_bar, kap, n_bar = tab.extended(above)
    assert kap == 1.0 / costs_set1.gamma_down
    assert n_bar == pytest.approx(sol.params.m(sol.q_upper))
    inside = 0.5 * (tab.p_star + tab.p_upper)
    q_bar, kap, n_bar = tab.extended(inside)
    assert sol.q_star < q_bar < sol.q_upper
    with pytest.raises(OutOfDomain):
        tab.extended(tab.extended_domain[0] - 0.01)


def test_value_function_frictionless_limit(ex2):
    # all-cash position with vanishing costs reduces to the frictionless value
    xi = 1.0 + 1e-6
    sol = solve_free_boundary(ex2, xi)
    tab = build_tables(sol, CostParams.from_xi(xi))
    x = 2.0
    v = tab.value(0.0, x, 1.0, 0.0)
    v0 = x ** (1 - ex2.R) / (1 - ex2.R) * ex2.m_M ** (-ex2.theta * ex2.S)
    assert v == pytest.approx(v0, rel=1e-3)
    c = tab.consumption(x, 1.0, 0.0)
    assert c == pytest.approx(x * ex2.m_M, rel=1e-3)


def test_value_scale_invariance(ex1_tables, ex1):
    lam = 1.7
    for x, y, phi in ((0.5, 1.0, 0.5), (0.2, 2.0, 0.8), (1.0, 1.0, -0.1)):
        v1 = ex1_tables.value(0.3, x, y, phi)
        v2 = ex1_tables.value(0.3, lam * x, y, lam * phi)
        assert v2 == pytest.approx(lam ** (1 - ex1.R) * v1, rel=1e-11)


def test_value_monotonicity(ex1_tables):
    v0 = ex1_tables.value(0.0, 0.5, 1.0, 0.5)
    # add a solvency-region increment: never decreases the value
    for dx, dphi in ((0.1, 0.0), (0.0, 0.1), (0.13, -0.1), (-0.077, 0.1)):
        if dx + max(dphi, 0.0) / 1.3 - max(-dphi, 0.0) * 1.3 < 0:
            continue
        assert ex1_tables.value(0.0, 0.5 + dx, 1.0, 0.5 + dphi) >= v0 - 1e-12


def test_value_bulk_trade_indifference(ex1_tables, costs_set1):
    # below p_*: trading up to the boundary at cost gamma_up leaves V unchanged
    tab = ex1_tables
    gu = costs_set1.gamma_up
    x, y, phi = 1.0, 1.0, 0.05
    p = phi * y / (x + phi * y)
    assert p < tab.p_star
    phi_new = tab.p_star * (x + gu * y * phi) / (y * (1.0 - tab.p_star * (1.0 - gu)))
    x_new = x - gu * y * (phi_new - phi)
    p_new = phi_new * y / (x_new + phi_new * y)
    assert p_new == pytest.approx(tab.p_star, abs=1e-12)
    assert tab.value(0.0, x_new, 1.0, phi_new) == pytest.approx(
        tab.value(0.0, x, 1.0, phi), rel=1e-12)


def test_value_insolvent_raises(ex1_tables):
    with pytest.raises(InsolventState):
        ex1_tables.value(0.0, -1.0, 1.0, 0.5)
    with pytest.raises(InsolventState):
        ex1_tables.consumption(0.1, 1.0, -0.5)


def test_consumption_boundary_value(ex1_tables, ex1, costs_set1):
    # at p = p_*: C = (x + phi y gamma_up) m(q_*)
    tab = ex1_tables
    y = 1.0
    x = 1.0
    phi = tab.p_star * x / (y * (1.0 - tab.p_star))
    c = tab.consumption(x, y, phi)
    expected = (x + phi * y * costs_set1.gamma_up) * ex1.m(tab.shadow.q_star)
    assert c == pytest.approx(expected, rel=1e-9)


def test_consumption_interior_against_fine_grid(ex1, ex1_tables, costs_set1):
    # independent evaluation from a doubled-resolution solve
    fine = solve_free_boundary(ex1, costs_set1, grid_points=6001)
    fine_tab = build_tables(fine, costs_set1)
    for pfrac in (0.25, 0.5, 0.75):
        p = ex1_tables.p_star + pfrac * (ex1_tables.p_upper - ex1_tables.p_star)
        x, y = 1.0, 1.0
        phi = p * x / (y * (1.0 - p))
        a = ex1_tables.consumption(x, y, phi)
        b = fine_tab.consumption(x, y, phi)
        assert a == pytest.approx(b, rel=1e-8)

import math

import numpy as np
import pytest

from eztc.errors import InsolventStart, OutOfRange, TooFewPaths
from eztc.model import CostParams
from eztc.fbsolver import solve_free_boundary
from eztc.policy import build_tables
from eztc.simulate import (
    SimConfig,
    drift_diffusion,
    initial_bulk_trade,
    martingale_check,
    path_diagnostics,
    simulate_paths,
)


def _small_cfg(**kw):
    base = dict(initial_state=(0.5, 1.0, 0.5), dt=1e-3, horizon=0.3,
                n_paths=64, seed=11, thin=1)
    base.update(kw)
    return SimConfig(**base)


def test_drift_diffusion_identity_forms(ex1, ex1_sol):
    qs = np.linspace(ex1_sol.q_star, ex1_sol.q_upper, 41)
    a, b = drift_diffusion(ex1_sol, qs)
    gap = ex1_sol.ell_minus_n_at(qs)
    # two displayed forms of a_Q agree: 2S/(sigma(1-S)) (ell-n) = sigma (ell-n)/D
    assert np.max(np.abs(a - ex1.sigma * gap / ex1.D)) < 1e-14
    n = ex1_sol.n_at(qs)
    assert np.max(np.abs(b - qs * (n - 2 * ex1.theta * ex1.S * gap))) < 1e-15


def test_drift_diffusion_boundary_value(ex1, ex1_sol):
    # at q_*: n = m so ell - n = D q(1-q) and a_Q = sigma q_*(1 - q_*)
    a, _ = drift_diffusion(ex1_sol, ex1_sol.q_star)
    assert a == pytest.approx(ex1.sigma * ex1_sol.q_star * (1 - ex1_sol.q_star), rel=1e-9)
    with pytest.raises(OutOfRange):
        drift_diffusion(ex1_sol, ex1_sol.q_upper + 0.01)


def test_drift_diffusion_at_singular_point(ex2, ex2_sol):
    # a_Q(1) = 0 and b_Q(1) = n(1) = m(1) > 0
    a, b = drift_diffusion(ex2_sol, 1.0)
    assert abs(a) < 1e-10
    assert b == pytest.approx(ex2.m(1.0), rel=1e-9)
    assert b > 0


def test_initial_bulk_trade_cases(ex1_sol, ex1_tables):
    gu, gd = 1.3, 1.3
    y = 1.0
    # all cash: buy up to the lower boundary
    q0, phi0, x0 = initial_bulk_trade(ex1_sol, ex1_tables, 1.0, y, 0.0)
    assert q0 == pytest.approx(ex1_sol.q_star)
    assert phi0 == pytest.approx(ex1_sol.q_star * (0.0 + 1.0 / (y * gu)))
    assert x0 == pytest.approx(1.0 - gu * y * phi0, rel=1e-9)
    # interior: no trade
    p_mid = 0.5 * (ex1_tables.p_star + ex1_tables.p_upper)
    phi = p_mid / (1.0 - p_mid)
    q0, phi0, x0 = initial_bulk_trade(ex1_sol, ex1_tables, 1.0, y, phi)
    assert phi0 == phi
    assert x0 == pytest.approx(1.0, rel=1e-9)
    assert ex1_sol.q_star < q0 < ex1_sol.q_upper
    # mostly stock: sell down to the upper boundary
    q0, phi0, x0 = initial_bulk_trade(ex1_sol, ex1_tables, 0.01, y, 5.0)
    assert q0 == pytest.approx(ex1_sol.q_upper)
    assert phi0 == pytest.approx(ex1_sol.q_upper * (5.0 + 0.01 * gd / y))
    assert x0 == pytest.approx(0.01 + y / gd * (5.0 - phi0), rel=1e-8)


def test_initial_insolvent_raises(ex1_sol, ex1_tables):
    with pytest.raises(InsolventStart):
        initial_bulk_trade(ex1_sol, ex1_tables, -1.0, 1.0, 0.5)


def test_degenerate_drift_only_reflection(ex1_sol, ex1_tables):
    # force a_Q = 0 and b_Q > 0: Q ramps deterministically to q^* and G_down
    # alone becomes active
    cfg = _small_cfg(n_paths=2, horizon=2.0, dt=1e-2)

    def override(q, n, gap):
        return np.zeros_like(q), np.full_like(q, 0.3)

    paths = simulate_paths(ex1_sol, ex1_tables, cfg, coeff_override=override)
    for p in paths:
        assert p.Q_hat[-1] == pytest.approx(ex1_sol.q_upper, abs=1e-12)
        assert p.G_up[-1] == 0.0
        assert p.G_down[-1] > 0.0
        assert np.all(np.diff(p.G_down) >= 0.0)


def test_path_contract(ex1_sol, ex1_tables):
    paths = simulate_paths(ex1_sol, ex1_tables, _small_cfg())
    for p in paths[:8]:
        d = path_diagnostics(p, ex1_tables)
        assert d.self_consistency_max < 1e-12
        assert d.confinement_violation == 0.0
        assert d.push_up_gap == 0.0 and d.push_down_gap == 0.0
        assert d.g_monotone
        assert d.phi_sign_constant
        assert d.solvency_ok
    # Q stays inside the wedge at recorded times
    q_all = np.concatenate([p.Q_hat for p in paths])
    assert q_all.min() >= ex1_sol.q_star - 1e-15
    assert q_all.max() <= ex1_sol.q_upper + 1e-15


def test_reproducibility(ex1_sol, ex1_tables):
    a = simulate_paths(ex1_sol, ex1_tables, _small_cfg())
    b = simulate_paths(ex1_sol, ex1_tables, _small_cfg())
    c = simulate_paths(ex1_sol, ex1_tables, _small_cfg(seed=12))
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.Q_hat, pb.Q_hat)
        assert np.array_equal(pa.X_hat, pb.X_hat)
    assert not np.array_equal(a[0].Q_hat, c[0].Q_hat)


def test_cash_dynamics_residual_shrinks(ex1_sol, ex1_tables):
    coarse = simulate_paths(ex1_sol, ex1_tables, _small_cfg(dt=2e-3))
    fine = simulate_paths(ex1_sol, ex1_tables, _small_cfg(dt=1e-3))
    rc = np.mean([p.summary["cash_resid_mean"] for p in coarse])
    rf = np.mean([p.summary["cash_resid_mean"] for p in fine])
    assert rc / rf >= 1.8


def test_martingale_small_run(ex1_sol, ex1_tables):
    cfg = SimConfig(initial_state=(0.5, 1.0, 0.5), dt=1e-3, horizon=0.5,
                    n_paths=1500, seed=3, thin=25)
    paths = simulate_paths(ex1_sol, ex1_tables, cfg)
    mc = martingale_check(paths, ex1_tables, 0.5)
    assert mc.z_score < 4.0
    assert mc.closed_form_max_rel_dev < 0.05
    # t = 0 reduces to the exact initial value
    mc0 = martingale_check(paths, ex1_tables, 0.0)
    assert mc0.mean == pytest.approx(mc0.m0, abs=1e-14)
    assert mc0.z_score == pytest.approx(0.0, abs=1e-9)


def test_martingale_m0_equals_value_after_bulk_trade(ex1_sol, ex1_tables):
    cfg = SimConfig(initial_state=(1.0, 1.0, 0.0), dt=1e-3, horizon=0.1,
                    n_paths=1000, seed=5, thin=10)
    paths = simulate_paths(ex1_sol, ex1_tables, cfg)
    mc = martingale_check(paths, ex1_tables, 0.0)
    # the value is invariant under the initial bulk trade (smooth pasting)
    v_pre = ex1_tables.value(0.0, 1.0, 1.0, 0.0)
    assert mc.m0 == pytest.approx(v_pre, rel=1e-9)


def test_closed_form_deviation_scales_with_dt(ex1_sol, ex1_tables):
    devs = []
    for dt in (2e-3, 1e-3):
        cfg = SimConfig(initial_state=(0.5, 1.0, 0.5), dt=dt, horizon=0.2,
                        n_paths=1000, seed=9, thin=int(0.2 / dt))
        paths = simulate_paths(ex1_sol, ex1_tables, cfg)
        mc = martingale_check(paths, ex1_tables, 0.2)
        devs.append(mc.closed_form_max_rel_dev)
    assert devs[1] < devs[0]


def test_too_few_paths(ex1_sol, ex1_tables):
    paths = simulate_paths(ex1_sol, ex1_tables, _small_cfg(n_paths=4))
    with pytest.raises(TooFewPaths):
        martingale_check(paths, ex1_tables, 0.3)


def test_one_way_crossing_example2(ex2, ex2_sol, costs_set1):
    # once Q exceeds 1 it must not return below (up to a vanishing dt bias)
    tables = build_tables(ex2_sol, costs_set1)
    # start just below the all-stock point so tau arrives quickly
    x0 = 0.05
    phi0 = 0.95
    cfg = SimConfig(initial_state=(x0, 1.0, phi0), dt=5e-4, horizon=1.0,
                    n_paths=128, seed=21, thin=40)
    paths = simulate_paths(ex2_sol, tables, cfg)
    crossed = [p for p in paths if p.summary["tau_step"] >= 0]
    assert crossed, "no path crossed the all-stock point"
    c = 2.0 * max(abs(drift_diffusion(ex2_sol, q)[0])
                  for q in np.linspace(ex2_sol.q_star, min(1.0, ex2_sol.q_upper), 64))
    for p in crossed:
        assert p.summary["post_tau_min"] >= 1.0 - c * math.sqrt(cfg.dt)


def test_phi_negative_branch(ex1_sol, ex1_tables):
    # short initial stock position: bulk trade buys up to the wedge
    q0, phi0, x0 = initial_bulk_trade(ex1_sol, ex1_tables, 2.0, 1.0, -0.2)
    assert q0 == pytest.approx(ex1_sol.q_star)
    assert phi0 > 0

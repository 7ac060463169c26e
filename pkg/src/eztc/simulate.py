"""Monte Carlo simulation of the optimal policy as a reflected diffusion.

The shadow fraction of wealth follows

    dQ = a_Q(Q) dB + b_Q(Q) dt + dG_up - dG_down,
    a_Q(q) = 2S/(sigma(1-S)) (ell(q) - n(q)) = sigma (ell(q) - n(q))/D,
    b_Q(q) = q (n(q) - 2 theta S (ell(q) - n(q))),

reflected at the no-trade boundaries by the local times G_up (at q_*) and
G_down (at q^*).  The scheme is projection (Skorokhod-map) Euler: each step
proposes an unconstrained increment and projects back onto [q_*, q^*],
recording the projection amount as the local-time increment.  Shares, cash and
consumption follow by the closed-form identities

    Phi_t = Phi_0 exp(G_up/q_* - G_down/q^*),
    C_t   = Y kappa(Q) Phi n(Q) / Q,
    X_t   = (1-Q)/Q * Y kappa(Q) Phi,

with the same Brownian motion driving Y.  Randomness comes from counter-based
per-path substreams (Philox keyed by (seed, path index)), so results are
reproducible regardless of scheduling or batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsolventStart, OutOfRange, TooFewPaths
from .fbsolver import ShadowSolution
from .policy import PolicyTables

_BLOCK_STEPS = 1000  # Gaussian increments are generated in blocks of this many steps


@dataclass(frozen=True)
class SimConfig:
    """Discretisation, sample size and initial portfolio for one experiment."""

    initial_state: tuple[float, float, float]   # (x, y, phi)
    dt: float = 1e-4
    horizon: float = 1.0
    n_paths: int = 10_000
    seed: int = 0
    thin: int = 100           # record every thin-th step (1 keeps everything)

    def __post_init__(self):
        if not (self.dt > 0.0 and self.horizon >= self.dt):
            raise ValueError(f"need dt > 0 and horizon >= dt, got {self.dt}, {self.horizon}")
        if self.n_paths < 1 or self.thin < 1:
            raise ValueError("n_paths and thin must be positive")


@dataclass(eq=False)
class SimPath:
    """Recorded trajectory of one path plus online full-resolution diagnostics."""

    times: np.ndarray
    Q_hat: np.ndarray
    G_up: np.ndarray
    G_down: np.ndarray
    Phi_hat: np.ndarray
    X_hat: np.ndarray
    C_hat: np.ndarray
    Y: np.ndarray
    value: np.ndarray          # candidate value process along the path
    gez_integral: np.ndarray   # cumulative aggregator integral (trapezoid)
    log_mart: np.ndarray       # sigma(1-R) int Q dB - 1/2 sigma^2(1-R)^2 int Q^2 ds
    n_integral: np.ndarray     # int n(Q) ds
    summary: dict


def drift_diffusion(sol: ShadowSolution, q):
    """Diffusion and drift coefficients (a_Q, b_Q) of the reflected SDE."""
    q_arr = np.asarray(q, dtype=float)
    tol = 1e-12 * (1.0 + abs(sol.q_star) + abs(sol.q_upper))
    if np.any(q_arr < sol.q_star - tol) or np.any(q_arr > sol.q_upper + tol):
        raise OutOfRange(f"q outside [{sol.q_star:.12g}, {sol.q_upper:.12g}]")
    p = sol.params
    gap = sol.ell_minus_n_at(q_arr)
    n = sol.n_at(q_arr)
    a = 2.0 * p.S / (p.sigma * (1.0 - p.S)) * gap
    b = q_arr * (n - 2.0 * p.theta * p.S * gap)
    if np.isscalar(q) or q_arr.ndim == 0:
        return float(a), float(b)
    return a, b


def initial_bulk_trade(sol: ShadowSolution, tables: PolicyTables,
                       x: float, y: float, phi: float) -> tuple[float, float, float]:
    """Initial (Q_0, Phi_0, X_0) after the time-0- block trade (three cases)."""
    gu, gd = tables.costs.gamma_up, tables.costs.gamma_down
    q_lo, q_hi = sol.q_star, sol.q_upper
    if x + max(phi, 0.0) * y / gd - max(-phi, 0.0) * y * gu <= 0.0:
        raise InsolventStart(f"initial state ({x}, {y}, {phi}) not in the open solvency region")
    if phi * y * gu * (1.0 - q_lo) < q_lo * x:
        phi0 = q_lo * (phi + x / (y * gu))           # buy up to the lower boundary
    elif phi * y / gd * (1.0 - q_hi) > q_hi * x:
        phi0 = q_hi * (phi + x * gd / y)             # sell down to the upper boundary
    else:
        phi0 = phi
    p0 = phi * y / (x + phi * y)
    q0 = min(max(tables.extended(p0)[0], q_lo), q_hi)
    x0 = (1.0 - q0) / q0 * y * tables.kappa(q0) * phi0
    return q0, phi0, x0


def simulate_paths(sol: ShadowSolution, tables: PolicyTables, cfg: SimConfig,
                   coeff_override=None) -> list[SimPath]:
    """Simulate the optimal policy; returns one SimPath per path.

    coeff_override, if given, is called as coeff_override(q, n, gap) and must
    return (a_Q, b_Q) arrays; it exists for degenerate-dynamics tests.
    """
    params = sol.params
    x_init, y_init, phi_init = cfg.initial_state
    q_lo, q_hi = sol.q_star, sol.q_upper
    n_steps = int(round(cfg.horizon / cfg.dt))
    dt = cfg.dt
    sqdt = math.sqrt(dt)
    npaths = cfg.n_paths

    q0, phi0, x0 = initial_bulk_trade(sol, tables, x_init, y_init, phi_init)

    rec_idx = list(range(0, n_steps + 1, cfg.thin))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    rec_set = {k: j for j, k in enumerate(rec_idx)}
    n_rec = len(rec_idx)
    times = np.array(rec_idx, dtype=float) * dt

    # State vectors across paths.
    Q = np.full(npaths, q0)
    Gu = np.zeros(npaths)
    Gd = np.zeros(npaths)
    Y = np.full(npaths, float(y_init))
    gez_int = np.zeros(npaths)
    n_int = np.zeros(npaths)
    int_qdb = np.zeros(npaths)
    int_q2 = np.zeros(npaths)

    # Online diagnostics (full resolution).
    cash_resid_sum = np.zeros(npaths)
    cash_resid_max = np.zeros(npaths)
    push_up_gap = np.zeros(npaths)    # max |Q - q_*| over steps with dG_up > 0
    push_dn_gap = np.zeros(npaths)    # max |Q - q^*| over steps with dG_down > 0
    confine_viol = np.zeros(npaths)   # max distance outside [q_*, q^*] after projection
    tau_idx = np.full(npaths, -1, dtype=np.int64)   # first step index with Q >= 1
    post_tau_min = np.full(npaths, np.inf)

    theta, S, R = params.theta, params.S, params.R
    sig, mu, r, delta = params.sigma, params.mu, params.r, params.delta
    track_tau = bool(sol.crossed_one) and q_lo < 1.0 <= q_hi

    rec = {name: np.empty((n_rec, npaths)) for name in
           ("Q", "Gu", "Gd", "Phi", "X", "C", "Y", "V", "gez", "logm", "nint")}

    def curves(qv):
        n = sol.n_at(qv)
        gap = sol.ell_minus_n_at(qv)
        kap = tables.kappa(qv)
        return n, gap, kap

    def value_of(qv, n, kap, phiv, yv, t):
        wealth = yv * kap * phiv / qv
        return math.exp(-delta * theta * t) * wealth ** (1.0 - R) / (1.0 - R) \
            * n ** (-theta * S)

    n_cur, gap_cur, kap_cur = curves(Q)
    Phi = np.full(npaths, phi0)
    X = (1.0 - Q) / Q * Y * kap_cur * Phi
    C = Y * kap_cur * Phi * n_cur / Q
    V = value_of(Q, n_cur, kap_cur, Phi, Y, 0.0)
    gez_cur = math.exp(0.0) * C ** (1.0 - S) / (1.0 - S) * ((1.0 - R) * V) ** params.rho

    def record(k):
        j = rec_set[k]
        logm = sig * (1.0 - R) * int_qdb - 0.5 * sig**2 * (1.0 - R) ** 2 * int_q2
        for name, arr in (("Q", Q), ("Gu", Gu), ("Gd", Gd), ("Phi", Phi), ("X", X),
                          ("C", C), ("Y", Y), ("V", V), ("gez", gez_int),
                          ("logm", logm), ("nint", n_int)):
            rec[name][j] = arr

    record(0)

    for block_lo in range(0, n_steps, _BLOCK_STEPS):
        block_hi = min(block_lo + _BLOCK_STEPS, n_steps)
        zblock = _gaussian_block(cfg.seed, npaths, block_lo, block_hi)
        for k in range(block_lo, block_hi):
            z = zblock[k - block_lo]
            if coeff_override is None:
                a = 2.0 * S / (sig * (1.0 - S)) * gap_cur
                b = Q * (n_cur - 2.0 * theta * S * gap_cur)
            else:
                a, b = coeff_override(Q, n_cur, gap_cur)
            db = sqdt * z
            proposal = Q + a * db + b * dt
            Q_new = np.clip(proposal, q_lo, q_hi)
            dGu = Q_new - proposal
            dGu[dGu < 0.0] = 0.0
            dGd = proposal - Q_new
            dGd[dGd < 0.0] = 0.0
            np.maximum(push_up_gap, np.where(dGu > 0.0, np.abs(Q_new - q_lo), 0.0),
                       out=push_up_gap)
            np.maximum(push_dn_gap, np.where(dGd > 0.0, np.abs(Q_new - q_hi), 0.0),
                       out=push_dn_gap)
            over = np.maximum(Q_new - q_hi, q_lo - Q_new)
            np.maximum(confine_viol, over, out=confine_viol)

            int_qdb += Q * db
            int_q2 += Q * Q * dt
            n_int += n_cur * dt

            Gu += dGu
            Gd += dGd
            Y_new = Y * np.exp(sig * db + (mu - 0.5 * sig**2) * dt)
            Phi_new = Phi * np.exp(dGu / q_lo - dGd / q_hi)

            n_new, gap_new, kap_new = curves(Q_new)
            X_new = (1.0 - Q_new) / Q_new * Y_new * kap_new * Phi_new
            C_new = Y_new * kap_new * Phi_new * n_new / Q_new
            t_new = (k + 1) * dt
            V_new = value_of(Q_new, n_new, kap_new, Phi_new, Y_new, t_new)
            gez_new = math.exp(-delta * t_new) * C_new ** (1.0 - S) / (1.0 - S) \
                * ((1.0 - R) * V_new) ** params.rho
            gez_int += 0.5 * (gez_cur + gez_new) * dt

            resid = np.abs(X_new - X - (r * X - C) * dt
                           + Y_new * kap_new * (Phi_new - Phi))
            cash_resid_sum += resid
            np.maximum(cash_resid_max, resid, out=cash_resid_max)

            if track_tau:
                hit = (Q_new >= 1.0) & (tau_idx < 0)
                tau_idx[hit] = k + 1
                seen = tau_idx >= 0
                post_tau_min[seen] = np.minimum(post_tau_min[seen], Q_new[seen])

            Q, Y, Phi, X, C, V = Q_new, Y_new, Phi_new, X_new, C_new, V_new
            n_cur, gap_cur, kap_cur = n_new, gap_new, kap_new
            gez_cur = gez_new
            if (k + 1) in rec_set:
                record(k + 1)

    paths = []
    for i in range(npaths):
        summary = {
            "cash_resid_mean": float(cash_resid_sum[i] / n_steps),
            "cash_resid_max": float(cash_resid_max[i]),
            "push_up_gap": float(push_up_gap[i]),
            "push_down_gap": float(push_dn_gap[i]),
            "confinement_violation": float(confine_viol[i]),
            "tau_step": int(tau_idx[i]),
            "post_tau_min": float(post_tau_min[i]),
            "dt": dt,
            "n_steps": n_steps,
            "q_star": q_lo,
            "q_upper": q_hi,
        }
        paths.append(SimPath(
            times=times,
            Q_hat=rec["Q"][:, i].copy(), G_up=rec["Gu"][:, i].copy(),
            G_down=rec["Gd"][:, i].copy(), Phi_hat=rec["Phi"][:, i].copy(),
            X_hat=rec["X"][:, i].copy(), C_hat=rec["C"][:, i].copy(),
            Y=rec["Y"][:, i].copy(), value=rec["V"][:, i].copy(),
            gez_integral=rec["gez"][:, i].copy(),
            log_mart=rec["logm"][:, i].copy(), n_integral=rec["nint"][:, i].copy(),
            summary=summary,
        ))
    return paths


def _gaussian_block(seed: int, npaths: int, k0: int, k1: int) -> np.ndarray:
    """Normals of shape (k1-k0, npaths); column i comes from substream (seed, i).

    Each (path, block) pair owns a disjoint Philox counter range, so the
    increment at step k of path i is a pure function of (seed, i, k) and the
    batching or scheduling cannot change the draws.
    """
    out = np.empty((npaths, k1 - k0))
    block = k0 // _BLOCK_STEPS
    counter = np.array([0, 0, block, 0], dtype=np.uint64)
    for i in range(npaths):
        bg = np.random.Philox(key=np.array([seed, i], dtype=np.uint64), counter=counter)
        out[i] = np.random.Generator(bg).standard_normal(k1 - k0)
    return np.ascontiguousarray(out.T)


@dataclass(frozen=True)
class PathDiagnostics:
    self_consistency_max: float
    cash_resid_mean: float
    cash_resid_max: float
    g_monotone: bool
    push_up_gap: float
    push_down_gap: float
    confinement_violation: float
    phi_sign_constant: bool
    solvency_ok: bool
    post_tau_return: float   # max(1 - min Q after tau, 0); 0 when never crossed


def path_diagnostics(path: SimPath, tables: PolicyTables) -> PathDiagnostics:
    """Self-consistency and bookkeeping checks on one simulated path."""
    kap = tables.kappa(path.Q_hat)
    shadow_stock = path.Y * kap * path.Phi_hat
    recon = shadow_stock / (path.X_hat + shadow_stock)
    self_err = float(np.max(np.abs(recon - path.Q_hat)))
    g_mono = bool(np.all(np.diff(path.G_up) >= -1e-15)
                  and np.all(np.diff(path.G_down) >= -1e-15))
    gu, gd = tables.costs.gamma_up, tables.costs.gamma_down
    slack = path.X_hat + np.maximum(path.Phi_hat, 0.0) * path.Y / gd \
        - np.maximum(-path.Phi_hat, 0.0) * path.Y * gu
    sgn = np.sign(path.Phi_hat)
    post_tau = 0.0
    if path.summary["tau_step"] >= 0 and np.isfinite(path.summary["post_tau_min"]):
        post_tau = max(1.0 - path.summary["post_tau_min"], 0.0)
    return PathDiagnostics(
        self_consistency_max=self_err,
        cash_resid_mean=path.summary["cash_resid_mean"],
        cash_resid_max=path.summary["cash_resid_max"],
        g_monotone=g_mono,
        push_up_gap=path.summary["push_up_gap"],
        push_down_gap=path.summary["push_down_gap"],
        confinement_violation=path.summary["confinement_violation"],
        phi_sign_constant=bool(np.all(sgn == sgn[0])),
        solvency_ok=bool(np.all(slack > 0.0)),
        post_tau_return=post_tau,
    )


@dataclass(frozen=True)
class MartingaleCheck:
    mean: float
    std_err: float
    m0: float
    z_score: float
    closed_form_max_rel_dev: float


def martingale_check(paths: list[SimPath], tables: PolicyTables,
                     t_check: float) -> MartingaleCheck:
    """Monte Carlo test that M_t = int_0^t g ds + V_t has constant expectation.

    Also compares the value process against its closed form
    V_t = V_0 * E(sigma(1-R) Q . B)_t * exp(-theta int_0^t n(Q) ds).
    """
    if len(paths) < 1000:
        raise TooFewPaths(f"martingale check needs >= 1000 paths, got {len(paths)}")
    times = paths[0].times
    j = int(np.argmin(np.abs(times - t_check)))
    if abs(times[j] - t_check) > 1e-9 * max(1.0, t_check):
        raise ValueError(f"t_check = {t_check} not on the recorded time grid")
    theta = tables.shadow.params.theta
    m_vals = np.array([p.gez_integral[j] + p.value[j] for p in paths])
    m0 = paths[0].value[0]
    mean = float(np.mean(m_vals))
    std_err = float(np.std(m_vals, ddof=1) / math.sqrt(len(paths)))
    vals_direct = np.array([p.value[j] for p in paths])
    vals_closed = np.array([
        p.value[0] * math.exp(p.log_mart[j] - theta * p.n_integral[j]) for p in paths
    ])
    rel = float(np.max(np.abs(vals_closed / vals_direct - 1.0)))
    z = abs(mean - m0) / std_err if std_err > 0 else math.inf
    return MartingaleCheck(mean=mean, std_err=std_err, m0=m0, z_score=z,
                           closed_form_max_rel_dev=rel)

"""Comparative statics: parameter sweeps and monotonicity-condition checks.

Sufficient conditions for the no-trade boundaries to be monotone in risk
aversion rest on the auxiliary function c(q) solving O(q, c)/c = 2/q:

    c(q) = ell(q) + (S-1) q (m(q) - ell(q)) / (2S - (S+1) q),

continuously extended by c(0) = m(0) and c(1) = m(1), with a pole at
q = 2S/(S+1).  The boundaries are monotone decreasing in R whenever
2 n(q) - q n'(q) > 0 on the no-trade interval, for which any of these
suffices: (a) S < 1; (b) S > 1, m(0) > 0 and either (i) 2c - qc' > 0 on the
relevant interval (itself implied by ell'(0) >= 0, i.e. (1-S)(sigma-2lambda)
>= 0) or (ii) R >= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PoleHit
from .fbsolver import ShadowSolution, solve_free_boundary
from .model import CostParams, ModelParams
from .policy import real_boundaries
from .wellposed import classify

_SWEEPABLE = ("r", "mu", "sigma", "R", "S", "delta")


@dataclass(frozen=True)
class SweepRow:
    value: float
    well_posed: bool
    q_star: float = math.nan
    q_upper: float = math.nan
    p_star: float = math.nan
    p_upper: float = math.nan


@dataclass(frozen=True)
class SweepResult:
    axis: str
    values: tuple[float, ...]
    rows: tuple[SweepRow, ...]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])


def sweep(param: str, grid, base: ModelParams, costs: CostParams,
          rtol: float = 1e-10) -> SweepResult:
    """Solve the free boundary across a parameter grid.

    Ill-posed grid points are flagged (well_posed=False) rather than raised;
    rows are returned in input order.
    """
    if param not in _SWEEPABLE:
        raise ValueError(f"sweep axis must be one of {_SWEEPABLE}, got {param!r}")
    rows = []
    for value in grid:
        params = base.replace(**{param: float(value)})
        verdict = classify(params, costs)
        if not verdict.is_well_posed:
            rows.append(SweepRow(value=float(value), well_posed=False))
            continue
        sol = solve_free_boundary(params, costs, rtol=rtol)
        p_star, p_upper = real_boundaries(sol, costs)
        rows.append(SweepRow(value=float(value), well_posed=True,
                             q_star=sol.q_star, q_upper=sol.q_upper,
                             p_star=p_star, p_upper=p_upper))
    return SweepResult(axis=param, values=tuple(float(v) for v in grid), rows=tuple(rows))


def aux_c(params: ModelParams, q: float) -> float:
    """Auxiliary comparison curve c(q); PoleHit at q = 2S/(S+1)."""
    S = params.S
    if abs(q) < 1e-14:
        return params.m(0.0)
    if abs(q - 1.0) < 1e-14:
        return params.m(1.0)
    denom = 2.0 * S - (S + 1.0) * q
    if abs(denom) < 1e-12 * (1.0 + abs(q)):
        raise PoleHit(f"c(q) has a pole at q = {2.0 * S / (S + 1.0):.12g}")
    return params.ell(q) + (S - 1.0) * q * (params.m(q) - params.ell(q)) / denom


def aux_c_prime(params: ModelParams, q: float) -> float:
    """c'(q) in closed form (using m - ell = -D q (1-q))."""
    S = params.S
    denom = 2.0 * S - (S + 1.0) * q
    if abs(denom) < 1e-12 * (1.0 + abs(q)):
        raise PoleHit(f"c'(q) has a pole at q = {2.0 * S / (S + 1.0):.12g}")
    g_prime = ((2.0 * q - 3.0 * q * q) * denom + (q * q - q**3) * (S + 1.0)) / denom**2
    return params.ell_prime(q) - (S - 1.0) * params.D * g_prime


@dataclass(frozen=True)
class MonotonicityReport:
    condition_a: bool           # S < 1
    condition_b1: bool          # S > 1, m(0) > 0, 2c - qc' > 0 on the interval
    condition_b1_shortcut: bool  # (1-S)(sigma - 2 lambda) >= 0, implies (b)(i)
    condition_b2: bool          # S > 1, m(0) > 0, R >= 2
    any_condition: bool
    direct_min: float           # min over the solved grid of 2n - qn'
    direct_ok: bool


def check_monotonicity_conditions(sol: ShadowSolution, samples: int = 400) -> MonotonicityReport:
    """Evaluate the sufficient conditions and directly test 2n - qn' > 0."""
    params = sol.params
    cond_a = params.S < 1.0
    shortcut = (1.0 - params.S) * (params.sigma - 2.0 * params.lam) >= 0.0
    cond_b1 = False
    cond_b2 = params.S > 1.0 and params.m(0.0) > 0.0 and params.R >= 2.0
    if params.S > 1.0 and params.m(0.0) > 0.0:
        if shortcut:
            cond_b1 = True
        else:
            hi = 1.0 if params.q_M < 1.0 else 2.0 * params.S / (params.S + 1.0)
            qs = np.linspace(1e-6, hi - 1e-6, samples)
            vals = np.array([2.0 * aux_c(params, q) - q * aux_c_prime(params, q) for q in qs])
            cond_b1 = bool(np.all(vals > 0.0))
    q = sol.grid_q
    direct = 2.0 * sol.grid_n - q * sol.n_prime_at(q)
    direct_min = float(np.min(direct))
    return MonotonicityReport(
        condition_a=cond_a, condition_b1=cond_b1, condition_b1_shortcut=shortcut,
        condition_b2=cond_b2,
        any_condition=cond_a or cond_b1 or cond_b2,
        direct_min=direct_min, direct_ok=direct_min > 0.0,
    )


def one_period_consumption(x: float, big_d: float, S: float) -> float:
    """One-period rule c = D^(1 - 1/S) x; increasing in D exactly when S > 1."""
    if x <= 0.0 or big_d <= 0.0:
        raise ValueError(f"need x > 0 and D > 0, got x={x}, D={big_d}")
    return big_d ** (1.0 - 1.0 / S) * x

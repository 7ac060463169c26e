"""Well-posedness classification and the threshold round-trip cost xi_bar.

With risk aversion R < 1 the problem is well-posed only for costs *above* a
threshold xi_bar; with R > 1 only *below* it.  The threshold is

    xi_bar = exp( int_{q-}^{q+} -m(q) / (q (1-q) ell(q)) dq )

over the interval between the two zeros q- < q+ of m (and xi_bar = 1 when m
has at most one zero).  The integral may diverge, in which case xi_bar = +inf;
divergence happens exactly when 0, 1, or a zero of ell lies strictly inside
(q-, q+), and for R > 1 there is a closed-form shortcut: xi_bar = inf iff
max_{[0,1]} ell >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from scipy.integrate import fixed_quad, quad

from .errors import InvalidParameters, QuadratureFailure
from .model import CostParams, ModelParams

# Declare xi_bar infinite once the log-threshold exceeds exp-overflow of 1e12.
_LOG_XI_CAP = math.log(1e12)


class Verdict(str, Enum):
    WELL_POSED = "WellPosed"
    ILL_POSED = "IllPosed"


class Reason(str, Enum):
    R_LESS_ONE_LARGE_COST = "RLessOneLargeCost"
    R_GREATER_ONE_SMALL_COST = "RGreaterOneSmallCost"
    M_ZERO_NONPOSITIVE = "MZeroNonpositive"
    M_ONE_NONPOSITIVE = "MOneNonpositive"
    M_MERTON_NONPOSITIVE = "MMertonNonpositive"
    COST_BEYOND_THRESHOLD = "CostBeyondThreshold"


@dataclass(frozen=True)
class WellPosedness:
    verdict: Verdict
    reason: Reason
    xi_bar: float

    @property
    def is_well_posed(self) -> bool:
        return self.verdict is Verdict.WELL_POSED

    def to_dict(self) -> dict:
        xb = "inf" if math.isinf(self.xi_bar) else self.xi_bar
        return {"verdict": self.verdict.value, "reason": self.reason.value, "xi_bar": xb}


def m_roots(params: ModelParams) -> tuple[float, float] | None:
    """Ordered real zeros of the quadratic m, or None when there is at most one.

    A vanishing discriminant (tangent root) counts as "at most one zero".
    """
    a, b, c = params.m_coeffs()
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return None
    sq = math.sqrt(disc)
    # Citardauq pairing avoids cancellation for the root near -c/b.
    r1 = (-b - math.copysign(sq, b)) / (2.0 * a)
    r2 = c / (a * r1)
    lo, hi = (r1, r2) if r1 < r2 else (r2, r1)
    return lo, hi


def max_ell_01(params: ModelParams) -> float:
    """Maximum of ell over [0, 1] (endpoint or interior vertex of the quadratic)."""
    a, b, _ = params.ell_coeffs()
    best = max(params.ell(0.0), params.ell(1.0))
    if a != 0.0:
        v = -b / (2.0 * a)
        if 0.0 < v < 1.0 and a < 0.0:
            best = max(best, params.ell(v))
    return best


def _ell_roots(params: ModelParams) -> list[float]:
    a, b, c = params.ell_coeffs()
    if a == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    if b == 0.0 and sq == 0.0:
        return [0.0]
    r1 = (-b - math.copysign(sq, b)) / (2.0 * a) if (b != 0.0 or sq != 0.0) else 0.0
    r2 = c / (a * r1) if r1 != 0.0 else -b / a - r1
    return sorted({r1, r2})


def _quad_checked(f, a: float, b: float, rtol: float, atol: float) -> float:
    out = quad(f, a, b, epsrel=rtol, epsabs=atol, limit=400, full_output=1)
    if len(out) >= 4 and out[3]:
        raise QuadratureFailure(f"quad failed on [{a:.6g}, {b:.6g}]: {out[3]}")
    return out[0]


class _Diverged(Exception):
    pass


def _integral_to_singular(f, sing: float, far: float, rtol: float, atol: float) -> float:
    """Oriented integral of f from the singular point `sing` to `far`.

    Approaches the singularity by geometric halving, each piece integrated by
    fixed-order Gauss-Legendre (the integrand is smooth away from the
    endpoint).  Raises _Diverged once the absolute accumulation exceeds the
    overflow cap, and QuadratureFailure if the refinement neither converges
    nor clearly diverges.
    """
    total = 0.0
    abs_total = 0.0
    prev = far
    w = far - sing
    for j in range(200):
        w *= 0.5
        edge = sing + w
        piece = float(fixed_quad(f, edge, prev, n=31)[0])
        total += piece
        abs_total += abs(piece)
        if abs_total > _LOG_XI_CAP:
            raise _Diverged
        if j > 3 and abs(piece) < max(atol, 1e-13 * max(1.0, abs(total))):
            return total
        prev = edge
    raise QuadratureFailure(
        f"integrability probe near q = {sing:.6g} did not settle after 200 refinements"
    )


def threshold_xi_bar(params: ModelParams, rtol: float = 1e-10, atol: float = 1e-14) -> float:
    """Threshold round-trip cost xi_bar (1, a finite value > 1, or +inf)."""
    roots = m_roots(params)
    if roots is None:
        return 1.0
    q_lo, q_hi = roots

    if params.R > 1.0 and max_ell_01(params) >= 0.0:
        return math.inf

    def integrand(q):
        return -params.m(q) / (q * (1.0 - q) * params.ell(q))

    # Points where the integrand can blow up strictly inside (q_lo, q_hi).
    pad = 1e-12 * (1.0 + q_hi - q_lo)
    singular = sorted(
        s for s in ([0.0, 1.0] + _ell_roots(params))
        if q_lo + pad < s < q_hi - pad
    )
    try:
        if not singular:
            log_xi = _quad_checked(integrand, q_lo, q_hi, rtol, atol)
        else:
            log_xi = 0.0
            cuts = [q_lo] + singular + [q_hi]
            for a, b in zip(cuts[:-1], cuts[1:]):
                left_sing = a in singular
                right_sing = b in singular
                if left_sing and right_sing:
                    mid = 0.5 * (a + b)
                    log_xi += _integral_to_singular(integrand, a, mid, rtol, atol)
                    log_xi -= _integral_to_singular(integrand, b, mid, rtol, atol)
                elif left_sing:
                    log_xi += _integral_to_singular(integrand, a, b, rtol, atol)
                elif right_sing:
                    log_xi -= _integral_to_singular(integrand, b, a, rtol, atol)
                else:
                    log_xi += _quad_checked(integrand, a, b, rtol, atol)
    except _Diverged:
        return math.inf
    if log_xi > _LOG_XI_CAP:
        return math.inf
    return math.exp(log_xi)


def classify(params: ModelParams, costs: CostParams,
             rtol: float = 1e-10, atol: float = 1e-14) -> WellPosedness:
    """Classify (params, xi) as well- or ill-posed and report the threshold."""
    if not costs.xi > 1.0:
        raise InvalidParameters(f"classification requires xi > 1, got {costs.xi}")
    xi = costs.xi
    xi_bar = threshold_xi_bar(params, rtol=rtol, atol=atol)
    if params.R < 1.0:
        if params.m(0.0) <= 0.0:
            return WellPosedness(Verdict.ILL_POSED, Reason.M_ZERO_NONPOSITIVE, xi_bar)
        if params.m(1.0) <= 0.0:
            return WellPosedness(Verdict.ILL_POSED, Reason.M_ONE_NONPOSITIVE, xi_bar)
        if xi > xi_bar:
            return WellPosedness(Verdict.WELL_POSED, Reason.R_LESS_ONE_LARGE_COST, xi_bar)
        return WellPosedness(Verdict.ILL_POSED, Reason.COST_BEYOND_THRESHOLD, xi_bar)
    if params.m_M <= 0.0:
        return WellPosedness(Verdict.ILL_POSED, Reason.M_MERTON_NONPOSITIVE, xi_bar)
    if xi < xi_bar:
        return WellPosedness(Verdict.WELL_POSED, Reason.R_GREATER_ONE_SMALL_COST, xi_bar)
    return WellPosedness(Verdict.ILL_POSED, Reason.COST_BEYOND_THRESHOLD, xi_bar)

"""Small transaction-cost expansions of the no-trade boundaries and consumption.

With eps = gamma_up*gamma_down - 1 small, the shadow boundaries expand as

    q_* = q^ - Delta^(1/3) eps^(1/3) - Sigma Delta^(2/3) eps^(2/3) - Psi Delta eps + O(eps^(4/3))
    q^* = q^ + Delta^(1/3) eps^(1/3) - Sigma Delta^(2/3) eps^(2/3) + Psi Delta eps + O(eps^(4/3))

around the Merton ratio q^ (with m^ = m(q^)), where

    Delta = 3 q^2 (1-q^)^2 / (4R)
    zeta1 = 4 m^ / (3 sigma^2 q^ (1-q^)^2),   Sigma = zeta1 / 2
    Psi   = Sigma^2/5 + (5q^-3)/(5 q^(1-q^)) Sigma
            - ((3 - 10q^ + 10q^2) + 4R q^(1-q^)) / (15 q^2 (1-q^)^2)

The real boundaries add the leading-order individual-cost terms
-/+ eps_up/down * q^(1-q^); individual costs enter only at linear order.
The optimal consumption picks up a p-independent eps^(2/3) correction whose
sign is sign(1-S), plus order-eps terms involving h3(v) = (1+v)^2 (2-v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateMertonRatio, HypothesisFail
from .model import ModelParams


def h3(v: float) -> float:
    """Cubic profile of the order-eps consumption correction; h3(-1)=0, h3(1)=4."""
    return (1.0 + v) ** 2 * (2.0 - v)


@dataclass(frozen=True)
class AsymptoticCoeffs:
    delta_coef: float
    sigma_coef: float
    psi_coef: float
    zeta1: float
    q_hat: float
    m_hat: float


def coeffs(params: ModelParams) -> AsymptoticCoeffs:
    """Expansion constants (Delta, Sigma, Psi) for a parameter set.

    Requires q_M away from {0, 1} and the small-cost well-posedness pattern
    (R, S < 1 with m_hat >= 0, or R, S > 1 with m_hat > 0).
    """
    qh, mh = params.q_M, params.m_M
    if min(abs(qh), abs(qh - 1.0)) < 1e-9:
        raise DegenerateMertonRatio(
            f"q_M = {qh!r}: the standard eps^(1/3) expansion degenerates"
        )
    ok = (params.R < 1.0 and params.S < 1.0 and mh >= 0.0) or \
        (params.R > 1.0 and params.S > 1.0 and mh > 0.0)
    if not ok:
        raise HypothesisFail(
            f"expansion needs small costs well-posed: R={params.R}, S={params.S}, "
            f"m_hat={mh:.6g}"
        )
    delta = 3.0 * qh**2 * (1.0 - qh) ** 2 / (4.0 * params.R)
    zeta1 = 4.0 * mh / (3.0 * params.sigma**2 * qh * (1.0 - qh) ** 2)
    sigma = 0.5 * zeta1
    psi = sigma**2 / 5.0 + (5.0 * qh - 3.0) / (5.0 * qh * (1.0 - qh)) * sigma \
        - ((3.0 - 10.0 * qh + 10.0 * qh**2) + 4.0 * params.R * qh * (1.0 - qh)) \
        / (15.0 * qh**2 * (1.0 - qh) ** 2)
    return AsymptoticCoeffs(delta_coef=delta, sigma_coef=sigma, psi_coef=psi,
                            zeta1=zeta1, q_hat=qh, m_hat=mh)


def shadow_boundary_expansion(params: ModelParams, eps: float) -> tuple[float, float]:
    """Expanded (q_*, q^*) for round-trip cost xi = 1 + eps."""
    c = coeffs(params)
    e13 = c.delta_coef ** (1.0 / 3.0) * eps ** (1.0 / 3.0)
    e23 = c.sigma_coef * c.delta_coef ** (2.0 / 3.0) * eps ** (2.0 / 3.0)
    e1 = c.psi_coef * c.delta_coef * eps
    return c.q_hat - e13 - e23 - e1, c.q_hat + e13 - e23 + e1


def real_boundary_expansion(params: ModelParams, eps_up: float,
                            eps_down: float) -> tuple[float, float]:
    """Expanded (p_*, p^*) for gamma_up = 1+eps_up, gamma_down = 1/(1-eps_down).

    The fractional-power terms involve only eps_up + eps_down; the individual
    costs enter at linear order through -/+ eps q^(1-q^).
    """
    c = coeffs(params)
    eps = eps_up + eps_down
    e13 = c.delta_coef ** (1.0 / 3.0) * eps ** (1.0 / 3.0)
    e23 = c.sigma_coef * c.delta_coef ** (2.0 / 3.0) * eps ** (2.0 / 3.0)
    e1 = c.psi_coef * c.delta_coef * eps
    tilt = c.q_hat * (1.0 - c.q_hat)
    p_star = c.q_hat - e13 - e23 - e1 - eps_up * tilt
    p_upper = c.q_hat + e13 - e23 + e1 + eps_down * tilt
    return p_star, p_upper


def consumption_expansion(params: ModelParams, eps_up: float, eps_down: float,
                          x: float, y: float, phi: float) -> float:
    """Expanded optimal consumption at state (x, y, phi).

    The zero-cost rate (x + y phi) m_hat is corrected at order eps^(2/3)
    (p-independent, sign = sign(1-S)) and at order eps through h3 evaluated at
    the scaled distance v = (p - q^)/(Delta^(1/3) eps^(1/3)).
    """
    c = coeffs(params)
    base = (x + y * phi) * c.m_hat
    eps = eps_up + eps_down
    if eps == 0.0:
        return base
    p = y * phi / (x + y * phi)
    v = (p - c.q_hat) / (c.delta_coef ** (1.0 / 3.0) * eps ** (1.0 / 3.0))
    corr23 = params.R * (1.0 - params.S) / params.S * params.sigma**2 \
        / (2.0 * c.m_hat) * c.delta_coef ** (2.0 / 3.0) * eps ** (2.0 / 3.0)
    corr1 = c.q_hat / (2.0 * params.S) * (1.0 - 0.5 * h3(v)) * eps
    corr_ind = 0.5 * c.q_hat * (eps_up - eps_down)
    return base * (1.0 + corr23 + corr1 + corr_ind)


def consumption_correction_sign(params: ModelParams) -> float:
    """Sign of the leading (eps^(2/3)) consumption correction: sign(1-S)."""
    c = coeffs(params)
    coef = params.R * (1.0 - params.S) / params.S * params.sigma**2 / (2.0 * c.m_hat)
    return math.copysign(1.0, coef)

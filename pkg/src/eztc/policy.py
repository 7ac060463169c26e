"""Policy layer: relative shadow price, real no-trade boundaries, value function.

From a solved shadow no-trade region this module builds
  * kappa(q), the ratio of shadow to quoted price, decreasing from gamma_up at
    q_* to 1/gamma_down at q^*,
  * the Moebius link between real and shadow fractions of wealth,
    p(q) = tau_{1/kappa(q)}(q) and its inverse q(p),
  * the clamped extensions (constant outside the no-trade region) that define
    the value function and optimal consumption on the whole solvency region.

kappa is computed by the integral formula anchored at q_*,

    kappa(q) = gamma_up * exp( S/(1-S) * int_{q_*}^q n'(v)/(v n(v)) dv ),

with the right-anchored variant kept as a consistency check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator

from .errors import CostMismatch, InsolventState, OutOfDomain, OutOfRange, PoleHit
from .fbsolver import ShadowSolution
from .model import CostParams


def mobius(c: float, q):
    """Real Moebius transformation tau_c(q) = c q / (1 + (c-1) q).

    Fixes 0 and 1 for every c > 0, and satisfies the group law
    tau_c(tau_d(q)) = tau_{cd}(q).  Raises PoleHit at q = 1/(1-c).
    """
    if c <= 0.0:
        raise PoleHit(f"Moebius parameter must be positive, got {c}")
    q_arr = np.asarray(q, dtype=float)
    denom = 1.0 + (c - 1.0) * q_arr
    if np.any(np.abs(denom) < 1e-300):
        raise PoleHit(f"tau_{c:g} evaluated at its pole q = {1.0 / (1.0 - c):.12g}")
    out = c * q_arr / denom
    return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out


@dataclass(frozen=True)
class MobiusTransform:
    """tau_c as a callable with group structure."""

    c: float

    def __call__(self, q):
        return mobius(self.c, q)

    @property
    def pole(self) -> float:
        return math.inf if self.c == 1.0 else 1.0 / (1.0 - self.c)

    def inverse(self) -> "MobiusTransform":
        return MobiusTransform(1.0 / self.c)

    def compose(self, other: "MobiusTransform") -> "MobiusTransform":
        return MobiusTransform(self.c * other.c)


def real_boundaries(sol: ShadowSolution, costs: CostParams) -> tuple[float, float]:
    """No-trade boundaries in real fractions of wealth.

    p_* = tau_{1/gamma_up}(q_*) and p^* = tau_{gamma_down}(q^*).
    """
    p_star = sol.q_star / (costs.gamma_up + (1.0 - costs.gamma_up) * sol.q_star)
    p_upper = costs.gamma_down * sol.q_upper / (1.0 + (costs.gamma_down - 1.0) * sol.q_upper)
    return p_star, p_upper


@dataclass(frozen=True, eq=False)
class PolicyTables:
    """Tabulated kappa, p <-> q maps, and the policy evaluators."""

    shadow: ShadowSolution
    costs: CostParams
    p_star: float
    p_upper: float
    kappa_grid: np.ndarray
    p_grid: np.ndarray
    kappa_integral: np.ndarray   # S/(1-S) * int_{q_*}^q n'/(v n) dv on the grid
    _kap: PchipInterpolator = field(init=False, repr=False)
    _p_of_q: PchipInterpolator = field(init=False, repr=False)
    _q_of_p: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        _set = object.__setattr__
        _set(self, "_kap", PchipInterpolator(self.shadow.grid_q, self.kappa_grid))
        _set(self, "_p_of_q", PchipInterpolator(self.shadow.grid_q, self.p_grid))
        _set(self, "_q_of_p", PchipInterpolator(self.p_grid, self.shadow.grid_q))

    # -- interval evaluators ----------------------------------------------------

    def kappa(self, q):
        """Relative shadow price on [q_*, q^*]."""
        sol = self.shadow
        q_arr = np.asarray(q, dtype=float)
        tol = 1e-12 * (1.0 + abs(sol.q_star) + abs(sol.q_upper))
        if np.any(q_arr < sol.q_star - tol) or np.any(q_arr > sol.q_upper + tol):
            raise OutOfRange(f"q = {q!r} outside [{sol.q_star:.12g}, {sol.q_upper:.12g}]")
        out = self._kap(np.clip(q_arr, sol.q_star, sol.q_upper))
        return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out

    def p_of_q(self, q):
        sol = self.shadow
        q_arr = np.asarray(q, dtype=float)
        tol = 1e-12 * (1.0 + abs(sol.q_star) + abs(sol.q_upper))
        if np.any(q_arr < sol.q_star - tol) or np.any(q_arr > sol.q_upper + tol):
            raise OutOfRange(f"q = {q!r} outside [{sol.q_star:.12g}, {sol.q_upper:.12g}]")
        out = self._p_of_q(np.clip(q_arr, sol.q_star, sol.q_upper))
        return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out

    def q_of_p(self, p):
        """Shadow fraction from real fraction on [p_*, p^*] (monotone cubic inverse)."""
        p_arr = np.asarray(p, dtype=float)
        tol = 1e-12 * (1.0 + abs(self.p_star) + abs(self.p_upper))
        if np.any(p_arr < self.p_star - tol) or np.any(p_arr > self.p_upper + tol):
            raise OutOfRange(f"p = {p!r} outside [{self.p_star:.12g}, {self.p_upper:.12g}]")
        out = self._q_of_p(np.clip(p_arr, self.p_star, self.p_upper))
        return float(out) if np.isscalar(p) or p_arr.ndim == 0 else out

    # -- extended (whole solvency region) evaluators ------------------------------

    @property
    def extended_domain(self) -> tuple[float, float]:
        gu, gd = self.costs.gamma_up, self.costs.gamma_down
        lo = -math.inf if gu == 1.0 else -1.0 / (gu - 1.0)
        hi = math.inf if gd == 1.0 else gd / (gd - 1.0)
        return lo, hi

    def extended(self, p: float) -> tuple[float, float, float]:
        """(q_bar, kappa_bar, n_bar) at real fraction p, clamped outside the region."""
        lo, hi = self.extended_domain
        if not (lo < p < hi):
            raise OutOfDomain(f"p = {p!r} outside the extended domain ({lo:.6g}, {hi:.6g})")
        sol = self.shadow
        if p < self.p_star:
            return mobius(self.costs.gamma_up, p), self.costs.gamma_up, sol.params.m(sol.q_star)
        if p > self.p_upper:
            return (mobius(1.0 / self.costs.gamma_down, p), 1.0 / self.costs.gamma_down,
                    sol.params.m(sol.q_upper))
        q = self.q_of_p(p)
        return q, self.kappa(q), sol.n_at(q)

    def _solvency_check(self, x: float, y: float, phi: float) -> None:
        if y <= 0.0:
            raise InsolventState(f"price must be positive, got y = {y}")
        slack = x + max(phi, 0.0) * y / self.costs.gamma_down \
            - max(-phi, 0.0) * y * self.costs.gamma_up
        if not slack > 0.0:
            raise InsolventState(
                f"(x, y, phi) = ({x}, {y}, {phi}) outside the open solvency region"
            )

    def value(self, t: float, x: float, y: float, phi: float) -> float:
        """Candidate value function; sign equals sign(1 - R)."""
        self._solvency_check(x, y, phi)
        params = self.shadow.params
        p = phi * y / (x + phi * y)
        _, kap, n = self.extended(p)
        wealth = x + phi * y * kap
        return (math.exp(-params.delta * params.theta * t)
                * wealth ** (1.0 - params.R) / (1.0 - params.R)
                * n ** (-params.theta * params.S))

    def consumption(self, x: float, y: float, phi: float) -> float:
        """Optimal consumption rate (x + phi y kappa_bar) * n_bar; nonnegative."""
        self._solvency_check(x, y, phi)
        p = phi * y / (x + phi * y)
        _, kap, n = self.extended(p)
        return (x + phi * y * kap) * n

    def certainty_equivalent(self, t: float, x: float, y: float, phi: float) -> float:
        """Wealth-denominated transform ((1-R) e^{delta theta t} V)^(1/(1-R))."""
        params = self.shadow.params
        v = self.value(t, x, y, phi)
        return ((1.0 - params.R) * v * math.exp(params.delta * params.theta * t)) \
            ** (1.0 / (1.0 - params.R))


def build_tables(sol: ShadowSolution, costs: CostParams) -> PolicyTables:
    """Tabulate kappa and the p <-> q maps for one (solution, costs) pair."""
    if abs(costs.xi - sol.xi) > 1e-9 * sol.xi:
        raise CostMismatch(
            f"costs give xi = {costs.xi:.12g} but the solution was built for xi = {sol.xi:.12g}"
        )
    params = sol.params
    q = sol.grid_q
    n = sol.grid_n
    nprime = sol.n_prime_at(q)
    integrand = params.S / (1.0 - params.S) * nprime / (q * n)
    integral = np.concatenate([[0.0], cumulative_simpson(integrand, x=q)])
    kappa_grid = costs.gamma_up * np.exp(integral)
    p_grid = q / (kappa_grid + (1.0 - kappa_grid) * q)
    p_star, p_upper = real_boundaries(sol, costs)
    # Pin the endpoints exactly; interior nodes keep the quadrature values.
    p_grid[0], p_grid[-1] = p_star, p_upper
    return PolicyTables(
        shadow=sol, costs=costs, p_star=p_star, p_upper=p_upper,
        kappa_grid=kappa_grid, p_grid=p_grid, kappa_integral=integral,
    )


def kappa_right_anchored(tables: PolicyTables) -> np.ndarray:
    """kappa from the q^*-anchored integral form (consistency companion)."""
    total = tables.kappa_integral[-1]
    return (1.0 / tables.costs.gamma_down) * np.exp(tables.kappa_integral - total)

"""Free-boundary solver for the no-transaction region in shadow coordinates.

The consumption rate n per unit of shadow wealth satisfies the autonomous ODE

    n'(q) = O(n, q) = (1-S)/S * n/(1-q) * (m(q) - n) / (ell(q) - n)

on the no-trade interval [q_*, q^*], with n = m and n' = 0 at both ends, and
the round-trip cost pins the interval through the integral constraint

    xi = exp( int_{q_*}^{q^*} -(1/(q(1-q))) * (m - n)/(ell - n) dq ).

The solver shoots trajectories n_(z) off the curve n = m (the starting point z
is a double root of the ODE, so the first step uses a local quadratic series),
finds the next crossing zeta(z) with m by event detection, accumulates the log
of the cost integral as an augmented ODE state, and root-finds the unique z
with Sigma(z) = xi on the monotone shooting map.  When the Merton ratio
exceeds one and z < 1 the trajectory passes through the singular point
(1, m(1)) with matched value and slope; the integrator jumps across it on a
local series.  The case q_M < 0 is mirrored (integration runs right-to-left).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import (
    BracketFailure,
    NoCrossing,
    NotWellPosed,
    OutOfRange,
    SingularPoint,
    StiffnessFailure,
)
from .model import CostParams, ModelParams
from .wellposed import classify, m_roots

_SEED_SCALE = 1e-6    # first step off the double root, relative to max(1, |q_M|)
_CROSS_H = 1e-6       # half-width of the jump across the singular point q = 1


def ode_rhs(params: ModelParams, q: float, n: float) -> float:
    """Right-hand side O(n, q) of the autonomous consumption ODE.

    Raises SingularPoint when evaluated too close to q = 1 or to n = ell(q);
    callers must switch to the local series there.
    """
    if abs(1.0 - q) < 1e-12:
        raise SingularPoint(f"q = {q!r} is too close to the singular point 1")
    gap = params.ell(q) - n
    if abs(gap) < 1e-12 * (1.0 + abs(n)):
        raise SingularPoint(f"n is too close to ell({q!r})")
    return (1.0 - params.S) / params.S * n / (1.0 - q) * (params.m(q) - n) / gap


def _rhs(params: ModelParams):
    """Vector field in deviation form: state y = [w, A] with w = n - m(q).

    Carrying w instead of n avoids the catastrophic cancellation of m - n near
    the boundaries and the singular point, where the two curves are tangent:
        w' = (1-S)/S * (m+w)/(1-q) * (-w)/(D q (1-q) - w) - m'(q)
        A' = w / (q (1-q) (D q (1-q) - w))          (log-cost integrand)
    """
    cS = (1.0 - params.S) / params.S
    D = params.D
    m = params.m
    m_prime = params.m_prime

    def f(q, y):
        w = y[0]
        gap = D * q * (1.0 - q) - w       # = ell(q) - n
        dw = -cS * (m(q) + w) / (1.0 - q) * w / gap - m_prime(q)
        da = w / (q * (1.0 - q) * gap)
        return (dw, da)

    return f


def _jac(params: ModelParams):
    """Analytic Jacobian of the deviation-form field (used by the stiff solver).

    Trajectories funnel onto the crossing solution with local rate of order
    1/(1-q)^2 near the singular point, which makes shots that approach q = 1
    stiff; an A-stable method with this Jacobian steps through at the accuracy
    limit instead of the stability limit.
    """
    cS = (1.0 - params.S) / params.S
    D = params.D
    m = params.m

    def jac(q, y):
        w = y[0]
        big_g = D * q * (1.0 - q)
        gap = big_g - w
        mq = m(q)
        j00 = -cS / (1.0 - q) * ((mq + 2.0 * w) * gap + (mq + w) * w) / gap**2
        j10 = big_g / (q * (1.0 - q) * gap**2)
        return ((j00, 0.0), (j10, 0.0))

    return jac


def seed_curvature(params: ModelParams, z: float) -> float:
    """Curvature c2 of the departure series n(z+h) = m(z) + c2 h^2.

    One l'Hopital pass on O along n - m at the double root (z, m(z)).
    """
    return params.m(z) * params.m_prime(z) / (params.sigma**2 * z * (1.0 - z) ** 2)


def crossing_curvature(params: ModelParams) -> float:
    """Curvature c1 of the singular-point series n(1 +/- h) = m(1 +/- h) + c1 h^2."""
    return -params.sigma**2 * params.m_prime(1.0) / (2.0 * params.m(1.0))


@dataclass(frozen=True, eq=False)
class ShadowSolution:
    """Solved no-transaction region [q_star, q_upper] and the n-curve on it.

    grid_w holds the deviation w = n - m(q), which is the numerically reliable
    representation near the tangency points; grid_logsig holds
    A(q) = int_{q_star}^q of the cost integrand, so that exp(A(q_upper)) = xi
    and the relative shadow price is gamma_up * exp(-A(q)).
    """

    params: ModelParams
    xi: float
    q_star: float
    q_upper: float
    grid_q: np.ndarray
    grid_n: np.ndarray
    grid_w: np.ndarray
    grid_logsig: np.ndarray
    crossed_one: bool
    log_sigma: float
    _n_interp: PchipInterpolator = field(init=False, repr=False)
    _w_interp: PchipInterpolator = field(init=False, repr=False)
    _a_interp: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        _set = object.__setattr__
        _set(self, "_n_interp", PchipInterpolator(self.grid_q, self.grid_n))
        _set(self, "_w_interp", PchipInterpolator(self.grid_q, self.grid_w))
        _set(self, "_a_interp", PchipInterpolator(self.grid_q, self.grid_logsig))

    @property
    def grid(self) -> np.ndarray:
        """(q, n, log-cost accumulator) samples as an (N, 3) array."""
        return np.column_stack([self.grid_q, self.grid_n, self.grid_logsig])

    def _check_range(self, q_arr):
        tol = 1e-12 * (1.0 + abs(self.q_upper) + abs(self.q_star))
        if np.any(q_arr < self.q_star - tol) or np.any(q_arr > self.q_upper + tol):
            raise OutOfRange(
                f"q outside [{self.q_star:.12g}, {self.q_upper:.12g}]"
            )
        return np.clip(q_arr, self.q_star, self.q_upper)

    def n_at(self, q):
        """Monotone interpolation of n on [q_star, q_upper]; exact at grid nodes."""
        q_arr = self._check_range(np.asarray(q, dtype=float))
        out = self._n_interp(q_arr)
        return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out

    def w_at(self, q):
        """Deviation n(q) - m(q), interpolated in deviation form (no cancellation)."""
        q_arr = self._check_range(np.asarray(q, dtype=float))
        out = self._w_interp(q_arr)
        return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out

    def ell_minus_n_at(self, q):
        """ell(q) - n(q) = D q (1-q) - w(q), stable near the singular point."""
        q_arr = self._check_range(np.asarray(q, dtype=float))
        out = self.params.D * q_arr * (1.0 - q_arr) - self._w_interp(q_arr)
        return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out

    def logsig_at(self, q):
        """Interpolated cost accumulator A(q)."""
        q_arr = np.clip(np.asarray(q, dtype=float), self.q_star, self.q_upper)
        out = self._a_interp(q_arr)
        return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out

    def n_prime_at(self, q):
        """n'(q) via the ODE right-hand side, evaluated in deviation form."""
        q_arr = np.asarray(np.clip(q, self.q_star, self.q_upper), dtype=float)
        w = self._w_interp(q_arr)
        n = self._n_interp(q_arr)
        gap = self.params.D * q_arr * (1.0 - q_arr) - w
        cS = (1.0 - self.params.S) / self.params.S
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -cS * n / (1.0 - q_arr) * w / gap
        # At the singular node the slope is m'(1).
        out = np.where(np.abs(1.0 - q_arr) < 1e-11, self.params.m_prime(1.0), out)
        return float(out) if np.isscalar(q) or np.asarray(q).ndim == 0 else out


@dataclass
class _Shot:
    zeta: float
    n_zeta: float
    log_sigma: float
    pieces: list            # solve_ivp results, in integration order
    jump: tuple | None      # (q_left, q_right, n_right, a_mid) across q = 1


def _integrate(params, q0, y0, q1, events, rtol, atol, stiff=False, dense=False):
    kwargs = dict(rtol=rtol, atol=np.asarray(atol), dense_output=dense, events=events)
    if stiff:
        kwargs.update(method="Radau", jac=_jac(params))
    else:
        kwargs.update(method="DOP853")
    res = solve_ivp(_rhs(params), (q0, q1), y0, **kwargs)
    if res.status == -1:
        raise StiffnessFailure(f"integration failed near q = {res.t[-1]:.8g}: {res.message}")
    return res


def _cost_integrand(params: ModelParams, q: float, w: float) -> float:
    return w / (q * (1.0 - q) * (params.D * q * (1.0 - q) - w))


# Half-width of the stiff funnel zone flanking the singular point q = 1: inside
# it the explicit integrator's stability limit collapses, so an A-stable one
# takes over.
_STIFF_DELTA = 0.03


def shoot(params: ModelParams, z: float, rtol: float = 1e-10, atol=(1e-16, 1e-13),
          dense: bool = False) -> _Shot:
    """Integrate one trajectory off (z, m(z)) to its next crossing with m.

    Returns the crossing point zeta(z), the accumulated log of the cost map
    Sigma(z), and the integration pieces (in deviation form w = n - m) for
    dense post-processing (pass dense=True to keep interpolants).
    """
    q_M = params.q_M
    direction = 1.0 if q_M > 0 else -1.0
    h = direction * _SEED_SCALE * max(1.0, abs(q_M))
    c2 = seed_curvature(params, z)
    m2 = params.m_coeffs()[0]  # m''(q)/2
    # Departure series relative to the moving curve m(q); m is a quadratic so
    # its Taylor shift is exact.
    w0 = -params.m_prime(z) * h + (c2 - m2) * h * h
    a0 = -params.m_prime(z) * h * h / (2.0 * params.D * z**2 * (1.0 - z) ** 2)
    q0 = z + h

    # Interior sign of w is sign(1-R); the crossing event sees it return to 0.
    w_sign = 1.0 if params.R < 1.0 else -1.0

    def cross_event(q, y):
        return y[0]

    cross_event.terminal = True
    cross_event.direction = -w_sign

    pieces = []
    jump = None

    if abs(q_M - 1.0) < 1e-9:
        # Degenerate upper boundary: the trajectory lands tangentially on (1, m(1)).
        if 1.0 - z < 10.0 * _CROSS_H:
            raise NoCrossing(f"start z = {z:.10g} indistinguishable from the singular point")
        res = _integrate(params, q0, (w0, a0), 1.0 - _CROSS_H, None, rtol, atol,
                         stiff=True, dense=dense)
        pieces.append(res)
        w_end, a_end = res.y[0][-1], res.y[1][-1]
        g_end = _cost_integrand(params, 1.0 - _CROSS_H, w_end)
        return _Shot(1.0, params.m(1.0), a_end + g_end * _CROSS_H, pieces, None)

    if q_M > 1.0 and z < 1.0:
        # Trajectory passes through the singular point (1, m(1)).
        c1 = crossing_curvature(params)
        if 1.0 - z < 10.0 * abs(h):
            # Departure series breaks down against the singular layer.
            raise NoCrossing(
                f"start z = {z:.10g} is numerically indistinguishable from the singular point"
            )
        if q0 < 1.0 - _STIFF_DELTA:
            res = _integrate(params, q0, (w0, a0), 1.0 - _STIFF_DELTA, None,
                             rtol, atol, stiff=False, dense=dense)
            pieces.append(res)
            q0, (w0, a0) = res.t[-1], res.y[:, -1]
        res = _integrate(params, q0, (w0, a0), 1.0 - _CROSS_H, None,
                         rtol, atol, stiff=True, dense=dense)
        pieces.append(res)
        q_l, w_l, a_l = res.t[-1], res.y[0][-1], res.y[1][-1]
        w_r = c1 * _CROSS_H**2
        # Cost integrand has a removable singularity at 1; Simpson with the
        # analytic midpoint value c1/D.
        g_l = _cost_integrand(params, q_l, w_l)
        g_r = _cost_integrand(params, 1.0 + _CROSS_H, w_r)
        a_r = a_l + (g_l + 4.0 * c1 / params.D + g_r) * (2.0 * _CROSS_H / 6.0)
        jump = (q_l, 1.0 + _CROSS_H, w_r, 0.5 * (a_l + a_r))
        q0, w0, a0 = 1.0 + _CROSS_H, w_r, a_r

    if q_M > 1.0:
        q_end = 2.0 * q_M - 1.0 + 0.05 * (q_M - 1.0)
    elif q_M > 0.0:
        q_end = 1.0 - 1e-13
    else:
        q_end = 2.0 * q_M - 0.05 * abs(q_M)

    res = None
    if q_M > 1.0 and q0 < 1.0 + _STIFF_DELTA:
        # Leave the funnel zone with the stiff solver (event may fire inside).
        res = _integrate(params, q0, (w0, a0), min(1.0 + _STIFF_DELTA, q_end),
                         [cross_event], rtol, atol, stiff=True, dense=dense)
        pieces.append(res)
        if res.status != 1:
            q0, (w0, a0) = res.t[-1], res.y[:, -1]
    if res is None or (res.status != 1 and q0 < q_end):
        res = _integrate(params, q0, (w0, a0), q_end, [cross_event], rtol, atol,
                         stiff=False, dense=dense)
        pieces.append(res)
    if res.status != 1:
        raise NoCrossing(
            f"trajectory from z = {z:.10g} left the admissible strip without re-crossing m"
        )
    zeta = float(res.t_events[0][0])
    w_zeta, a_zeta = (float(v) for v in res.y_events[0][0])
    log_sigma = a_zeta if direction > 0 else -a_zeta
    return _Shot(zeta, params.m(zeta) + w_zeta, log_sigma, pieces, jump)


def _shot_domain(params: ModelParams) -> tuple[float, float]:
    """Open interval of admissible starting points z = {m > 0} side of q_M."""
    roots = m_roots(params)
    q_M = params.q_M
    if q_M > 0:
        z_lo, z_hi = 0.0, q_M
        if params.m_M < 0:
            z_hi = roots[0]
        if params.m(0.0) <= 0.0:
            z_lo = max(0.0, roots[0])
    else:
        z_lo, z_hi = q_M, 0.0
        if params.m_M < 0:
            z_lo = roots[1]
        if params.m(0.0) <= 0.0:
            z_hi = min(0.0, roots[1])
    return z_lo, z_hi


def solve_free_boundary(
    params: ModelParams,
    costs: CostParams | float,
    rtol: float = 1e-10,
    atol: float = 1e-13,
    grid_points: int = 3001,
) -> ShadowSolution:
    """Locate the no-transaction region for round-trip cost xi.

    Root-finds the starting point z with Sigma(z) = xi on the monotone
    shooting map, then densifies the winning trajectory.  Raises NotWellPosed
    for inputs outside the well-posedness range and BracketFailure if the
    shooting map never brackets xi (inconsistent classification).
    """
    costs = costs if isinstance(costs, CostParams) else CostParams.from_xi(float(costs))
    verdict = classify(params, costs)
    if not verdict.is_well_posed:
        raise NotWellPosed(
            f"(params, xi={costs.xi:.6g}) ill-posed: {verdict.reason.value}, "
            f"xi_bar = {verdict.xi_bar:.6g}"
        )
    xi = costs.xi
    log_xi = math.log(xi)
    z_lo, z_hi = _shot_domain(params)
    atol_pair = (min(1e-16, atol), atol)

    cache: dict[float, _Shot] = {}

    def f_res(z: float) -> float:
        if z not in cache:
            cache[z] = shoot(params, z, rtol=rtol, atol=atol_pair)
        return cache[z].log_sigma - log_xi

    try:
        a, b = _bracket_root(f_res, z_lo, z_hi)
        if a == b:
            z_star = a
        else:
            z_star = brentq(f_res, a, b, xtol=1e-13, rtol=8 * np.finfo(float).eps)
    except NoCrossing as exc:
        # Requested cost level puts q_* inside the unresolvable singular sliver.
        raise BracketFailure(
            f"xi = {xi:.10g} places the buy boundary within ~1e-5 of the singular "
            f"point q = 1, outside the solver's resolution"
        ) from exc
    final = shoot(params, z_star, rtol=rtol, atol=atol_pair, dense=True)
    residual = abs(math.expm1(final.log_sigma - log_xi))
    if residual > 1e-8:
        raise BracketFailure(
            f"root refinement stalled at z = {z_star:.10g}: |Sigma - xi|/xi = {residual:.3g}"
        )
    return _densify(params, xi, z_star, final, grid_points)


def _bracket_root(f, z_lo: float, z_hi: float) -> tuple[float, float]:
    """Bracket the root of the strictly monotone residual f on (z_lo, z_hi)."""
    width = z_hi - z_lo
    a = z_lo + 0.50 * width
    b = z_lo + 0.75 * width
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a, a
    if fb == 0.0:
        return b, b
    if fa * fb < 0.0:
        return a, b
    # Walk geometrically toward the endpoint where the sign must flip.
    increasing = fb > fa
    target = z_lo if (fa > 0.0) == increasing else z_hi
    prev, fprev = (a, fa) if abs(a - target) < abs(b - target) else (b, fb)
    gap = target - prev
    for _ in range(80):
        gap *= 0.5
        znew = target - gap
        fnew = f(znew)
        if fnew == 0.0:
            return znew, znew
        if fnew * fprev < 0.0:
            return (min(prev, znew), max(prev, znew))
        prev, fprev = znew, fnew
    raise BracketFailure(
        "shooting map does not bracket the requested cost level on its domain"
    )


def _densify(params, xi, z_star, final: _Shot, grid_points: int) -> ShadowSolution:
    """Resample the winning trajectory onto a dense monotone grid."""
    q_M = params.q_M
    mirrored = q_M < 0
    zeta = final.zeta
    a_end = final.log_sigma if not mirrored else -final.log_sigma

    # Exact nodes first so they win the de-duplication against piece samples.
    nodes_q = [np.array([z_star, zeta])]
    nodes_w = [np.array([0.0, 0.0])]
    nodes_a = [np.array([0.0, a_end])]
    if final.jump is not None:
        nodes_q.append(np.array([1.0]))
        nodes_w.append(np.array([0.0]))
        nodes_a.append(np.array([final.jump[3]]))

    total_span = abs(zeta - z_star)
    for piece in final.pieces:
        t0, t1 = piece.t[0], piece.t[-1]
        npts = max(12, int(grid_points * abs(t1 - t0) / total_span))
        qs = np.linspace(t0, t1, npts)
        ys = piece.sol(qs)
        nodes_q.append(qs)
        nodes_w.append(ys[0])
        nodes_a.append(ys[1])

    # A node hugging the crossing end mirrors the seed node at the departure
    # end, so boundary slopes can be read off the first/last grid intervals.
    h = (1.0 if q_M > 0 else -1.0) * _SEED_SCALE * max(1.0, abs(q_M))
    if total_span > 4.0 * abs(h):
        q_near = zeta - h
        ys = final.pieces[-1].sol(q_near)
        nodes_q.append(np.array([q_near]))
        nodes_w.append(np.array([ys[0]]))
        nodes_a.append(np.array([ys[1]]))

    q = np.concatenate(nodes_q)
    w = np.concatenate(nodes_w)
    a = np.concatenate(nodes_a)
    order = np.argsort(q, kind="stable")
    q, w, a = q[order], w[order], a[order]
    keep = np.concatenate([[True], np.diff(q) > 1e-14])
    q, w, a = q[keep], w[keep], a[keep]

    if mirrored:
        # Accumulator was integrated right-to-left; re-anchor at the lower boundary.
        a = a - a[0]
        q_star, q_upper = zeta, z_star
    else:
        q_star, q_upper = z_star, zeta

    crossed = q_star <= 1.0 <= q_upper
    return ShadowSolution(
        params=params, xi=xi, q_star=q_star, q_upper=q_upper,
        grid_q=q, grid_n=params.m(q) + w, grid_w=w, grid_logsig=a,
        crossed_one=bool(crossed), log_sigma=final.log_sigma,
    )

"""Market/preference parameters and the three fundamental scalar functions.

The model is a Black-Scholes market (r, mu, sigma) together with Epstein-Zin
preferences (R = relative risk aversion, S = elasticity of intertemporal
complementarity, delta = discount rate).  Everything else in the library is
driven by three functions of the fraction of wealth q held in the risky asset:

    m(q)   optimal consumption rate per unit wealth for an agent constrained
           to keep a constant fraction q in the risky asset,
    ell(q) the companion quadratic appearing in the HJB drift term,
    H(q,c) the effective discount rate of a constant-(q, c) strategy.

They satisfy ell(q) - m(q) = D*q*(1-q) exactly, with D = (1-S)/S * sigma^2/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import IllPosedFrictionless, InvalidParameters

# Unit-utility exclusion band: the formulas for theta and D blow up at R=1 or S=1.
_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Immutable market + preference parameters with derived constants.

    Derived quantities (computed eagerly at construction):
      lam    market price of risk (mu - r)/sigma, must be nonzero
      theta  (1-R)/(1-S), must be positive
      rho    (S-R)/(1-R)
      alpha  effective impatience rate delta - r(1-S)
      q_M    Merton ratio lam/(sigma R)
      D      (1-S)/S * sigma^2/2
      m_M    m(q_M), the frictionless optimal consumption rate per unit wealth
    """

    r: float
    mu: float
    sigma: float
    R: float
    S: float
    delta: float
    lam: float = field(init=False)
    theta: float = field(init=False)
    rho: float = field(init=False)
    alpha: float = field(init=False)
    q_M: float = field(init=False)
    D: float = field(init=False)
    m_M: float = field(init=False)

    def __post_init__(self):
        problems = []
        if not self.sigma > 0.0:
            problems.append(f"sigma must be > 0, got {self.sigma}")
        if self.R <= 0.0 or abs(self.R - 1.0) < _UNIT_TOL:
            problems.append(f"R must be positive and != 1, got {self.R}")
        if self.S <= 0.0 or abs(self.S - 1.0) < _UNIT_TOL:
            problems.append(f"S must be positive and != 1, got {self.S}")
        if problems:
            raise InvalidParameters("; ".join(problems))
        if (1.0 - self.R) * (1.0 - self.S) <= 0.0:
            raise InvalidParameters(
                f"theta = (1-R)/(1-S) must be positive: R={self.R}, S={self.S} "
                "put R and S on opposite sides of 1"
            )
        lam = (self.mu - self.r) / self.sigma
        if lam == 0.0:
            raise InvalidParameters("market price of risk lambda = (mu-r)/sigma must be nonzero")
        _set = object.__setattr__
        _set(self, "lam", lam)
        _set(self, "theta", (1.0 - self.R) / (1.0 - self.S))
        _set(self, "rho", (self.S - self.R) / (1.0 - self.R))
        _set(self, "alpha", self.delta - self.r * (1.0 - self.S))
        _set(self, "q_M", lam / (self.sigma * self.R))
        _set(self, "D", (1.0 - self.S) / self.S * 0.5 * self.sigma**2)
        _set(self, "m_M", self.m(self.q_M))

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        """Build from a JSON-style object {"r":..,"mu":..,"sigma":..,"R":..,"S":..,"delta":..}."""
        required = {"r", "mu", "sigma", "R", "S", "delta"}
        missing = required - d.keys()
        unknown = d.keys() - required
        if missing or unknown:
            raise InvalidParameters(
                f"model keys: missing {sorted(missing)}, unknown {sorted(unknown)}"
            )
        return cls(**{k: float(d[k]) for k in required})

    # -- the fundamental quadratics -------------------------------------------

    def m(self, q):
        """Constrained-optimal consumption rate per unit wealth at fraction q."""
        cS = (1.0 - self.S) / self.S
        return self.alpha / self.S - cS * self.lam * self.sigma * q \
            + self.R * cS * 0.5 * self.sigma**2 * q * q

    def ell(self, q):
        """Companion quadratic; satisfies ell(q) - m(q) = D q (1-q)."""
        cS = (1.0 - self.S) / self.S
        return self.alpha / self.S - cS * (self.lam * self.sigma - 0.5 * self.sigma**2) * q \
            - (1.0 - self.R) * cS * 0.5 * self.sigma**2 * q * q

    def m_prime(self, q):
        cS = (1.0 - self.S) / self.S
        return -cS * self.lam * self.sigma + self.R * cS * self.sigma**2 * q

    def ell_prime(self, q):
        cS = (1.0 - self.S) / self.S
        return -cS * (self.lam * self.sigma - 0.5 * self.sigma**2) \
            - (1.0 - self.R) * cS * self.sigma**2 * q

    def m_coeffs(self) -> tuple[float, float, float]:
        """Coefficients (a, b, c) of m(q) = a q^2 + b q + c."""
        cS = (1.0 - self.S) / self.S
        return (self.R * cS * 0.5 * self.sigma**2,
                -cS * self.lam * self.sigma,
                self.alpha / self.S)

    def ell_coeffs(self) -> tuple[float, float, float]:
        """Coefficients (a, b, c) of ell(q) = a q^2 + b q + c."""
        cS = (1.0 - self.S) / self.S
        return (-(1.0 - self.R) * cS * 0.5 * self.sigma**2,
                -cS * (self.lam * self.sigma - 0.5 * self.sigma**2),
                self.alpha / self.S)

    def big_h(self, q, m_val):
        """Effective discount rate H(q, m_val) of a constant-proportions strategy."""
        return self.delta + (self.S - 1.0) * (
            self.r + self.lam * self.sigma * q - m_val - 0.5 * q * q * self.sigma**2 * self.R
        )

    def frictionless_solution(self) -> tuple[float, float, float]:
        """Merton ratio, optimal consumption rate, and the value-per-wealth factor.

        Returns (q_M, m_M, m_M**(-theta*S)) so that the zero-cost value of
        wealth z is V0 = z**(1-R)/(1-R) * m_M**(-theta*S).  Raises
        IllPosedFrictionless when m_M <= 0.
        """
        if self.m_M <= 0.0:
            raise IllPosedFrictionless(
                f"frictionless problem ill-posed: m(q_M) = {self.m_M:.6g} <= 0"
            )
        return self.q_M, self.m_M, self.m_M ** (-self.theta * self.S)

    def replace(self, **changes) -> "ModelParams":
        """New parameter set with some raw fields replaced (derived recomputed)."""
        raw = {k: getattr(self, k) for k in ("r", "mu", "sigma", "R", "S", "delta")}
        raw.update(changes)
        return ModelParams(**raw)


@dataclass(frozen=True)
class CostParams:
    """Proportional transaction costs: buy at gamma_up*Y, sell at Y/gamma_down."""

    gamma_up: float
    gamma_down: float
    xi: float = field(init=False)

    def __post_init__(self):
        if self.gamma_up < 1.0 or self.gamma_down < 1.0:
            raise InvalidParameters(
                f"cost factors must be >= 1, got ({self.gamma_up}, {self.gamma_down})"
            )
        object.__setattr__(self, "xi", self.gamma_up * self.gamma_down)

    @classmethod
    def from_xi(cls, xi: float) -> "CostParams":
        """Symmetric split gamma_up = gamma_down = sqrt(xi)."""
        if xi < 1.0:
            raise InvalidParameters(f"round-trip cost xi must be >= 1, got {xi}")
        g = math.sqrt(xi)
        return cls(gamma_up=g, gamma_down=g)

    @classmethod
    def from_dict(cls, d: dict) -> "CostParams":
        keys = set(d.keys())
        if keys == {"xi"}:
            return cls.from_xi(float(d["xi"]))
        if keys == {"gamma_up", "gamma_down"}:
            return cls(gamma_up=float(d["gamma_up"]), gamma_down=float(d["gamma_down"]))
        raise InvalidParameters(
            f"cost keys must be {{'xi'}} or {{'gamma_up','gamma_down'}}, got {sorted(keys)}"
        )

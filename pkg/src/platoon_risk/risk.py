"""Value-at-risk of single and cascading inter-vehicle collisions.

The cascading risk of pair ``j`` given that pair ``i`` collided is the
smallest ``delta > 0`` with

    P(d_j < d / (delta + c) | d_i = 0) < epsilon.

Under the conditional normal law this probability is
``(1 + erf(kappa_delta)) / 2`` with ``kappa_delta`` strictly decreasing in
delta, which gives the three-branch closed form implemented here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy import special

from .errors import DegenerateCorrelationError, InvalidParameterError
from .spectral import DEGENERATE_RHO, DistanceStatistics, PlatoonConfig, correlation

NEAR_INFINITE = 1e12


def erf(x: float) -> float:
    return math.erf(x)


def erf_inv(y: float) -> float:
    """Inverse error function on (-1, 1), polished with one Newton step."""
    if not -1.0 < y < 1.0:
        raise InvalidParameterError(f"erf_inv argument {y!r} must lie strictly inside (-1, 1)")
    x = float(special.erfinv(y))
    deriv = 2.0 / math.sqrt(math.pi) * math.exp(-x * x)
    if deriv > 0:
        x -= (math.erf(x) - y) / deriv
    return x


def iota(epsilon: float) -> float:
    """Standardized threshold ``erf^-1(2 epsilon - 1)``."""
    if not 0.0 < epsilon < 1.0:
        raise InvalidParameterError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    return erf_inv(2.0 * epsilon - 1.0)


def collision_set_edge(d: float, c: float, delta: float) -> float:
    """Right end ``d / (delta + c)`` of the systemic set; 0 at delta = inf."""
    return 0.0 if math.isinf(delta) else d / (delta + c)


class RiskTag(str, enum.Enum):
    ZERO = "zero"
    FINITE = "finite"
    INFINITE = "infinite"


@dataclass(frozen=True)
class RiskValue:
    """Extended non-negative risk value with an explicit branch tag."""

    tag: RiskTag
    value: float | None = None
    near_infinite: bool = False

    def __post_init__(self):
        tag = RiskTag(self.tag)
        object.__setattr__(self, "tag", tag)
        if tag is RiskTag.FINITE:
            if self.value is None or not (self.value > 0 and math.isfinite(self.value)):
                raise InvalidParameterError(f"finite risk needs a positive finite value, got {self.value!r}")
        elif self.value is not None:
            raise InvalidParameterError(f"{tag.value} risk carries no value")

    @classmethod
    def zero(cls) -> "RiskValue":
        return cls(RiskTag.ZERO)

    @classmethod
    def infinite(cls) -> "RiskValue":
        return cls(RiskTag.INFINITE)

    @classmethod
    def finite(cls, value: float) -> "RiskValue":
        if value <= 0:
            return cls.zero()
        return cls(RiskTag.FINITE, float(value), near_infinite=value > NEAR_INFINITE)

    def __float__(self) -> float:
        if self.tag is RiskTag.ZERO:
            return 0.0
        if self.tag is RiskTag.INFINITE:
            return math.inf
        return self.value

    def to_dict(self) -> dict:
        return {"tag": self.tag.value, "value": self.value, "near_infinite": self.near_infinite}

    @classmethod
    def from_dict(cls, data: dict) -> "RiskValue":
        return cls(RiskTag(data["tag"]), data.get("value"), bool(data.get("near_infinite", False)))

    def __str__(self) -> str:
        if self.tag is RiskTag.FINITE:
            return f"{self.value:.6g}"
        return "0" if self.tag is RiskTag.ZERO else "inf"


@dataclass(frozen=True)
class KappaEndpoints:
    kappa_0: float
    kappa_inf: float
    iota: float


def _check_rho(rho: float) -> None:
    if not abs(rho) < DEGENERATE_RHO:
        raise DegenerateCorrelationError(f"|rho| = {abs(rho):.17g} is numerically 1")


def _check_moments(sigma_i: float, sigma_j: float, d: float, c: float) -> None:
    if not (sigma_i > 0 and sigma_j > 0):
        raise InvalidParameterError("standard deviations must be positive")
    if not d > 0:
        raise InvalidParameterError(f"d must be positive, got {d!r}")
    if not c >= 1:
        raise InvalidParameterError(f"c must be >= 1, got {c!r}")


def kappa_from_moments(sigma_i: float, sigma_j: float, rho: float, d: float, c: float, delta: float) -> float:
    _check_rho(rho)
    if delta < 0:
        raise InvalidParameterError(f"delta must be >= 0, got {delta!r}")
    scale = d / (math.sqrt(2.0 * (1.0 - rho * rho)) * sigma_j)
    return scale * (collision_set_edge(1.0, c, delta) + rho * sigma_j / sigma_i - 1.0)


def kappa(stats: DistanceStatistics, cfg: PlatoonConfig, i: int, j: int, delta: float) -> float:
    if i == j:
        raise InvalidParameterError("collided pair and queried pair must differ")
    return kappa_from_moments(stats.std(i), stats.std(j), correlation(stats, i, j), cfg.d, cfg.c, delta)


def kappa_endpoints_from_moments(sigma_i, sigma_j, rho, d, c, epsilon) -> KappaEndpoints:
    return KappaEndpoints(
        kappa_from_moments(sigma_i, sigma_j, rho, d, c, 0.0),
        kappa_from_moments(sigma_i, sigma_j, rho, d, c, math.inf),
        iota(epsilon),
    )


def gamma_term(sigma_i: float, sigma_j: float, rho: float, d: float, iota_eps: float) -> float:
    return iota_eps * sigma_j * sigma_i * math.sqrt(2.0 * (1.0 - rho * rho)) + d * sigma_i - d * rho * sigma_j


def cascade_risk_from_moments(
    sigma_i: float, sigma_j: float, rho: float, d: float, c: float, epsilon: float
) -> RiskValue:
    """Three-branch cascading value-at-risk from the pair moments."""
    _check_moments(sigma_i, sigma_j, d, c)
    ends = kappa_endpoints_from_moments(sigma_i, sigma_j, rho, d, c, epsilon)
    if ends.kappa_0 <= ends.iota:
        return RiskValue.zero()
    if ends.kappa_inf >= ends.iota:
        return RiskValue.infinite()
    return RiskValue.finite(d * sigma_i / gamma_term(sigma_i, sigma_j, rho, d, ends.iota) - c)


def cascading_risk(stats: DistanceStatistics, cfg: PlatoonConfig, i: int, j: int) -> RiskValue:
    if i == j:
        raise InvalidParameterError("collided pair and queried pair must differ")
    return cascade_risk_from_moments(
        stats.std(i), stats.std(j), correlation(stats, i, j), cfg.d, cfg.c, cfg.epsilon
    )


def single_risk_from_std(sigma_j: float, d: float, c: float, epsilon: float) -> RiskValue:
    """Value-at-risk of a collision at one pair with distance std ``sigma_j``."""
    _check_moments(1.0, sigma_j, d, c)
    io = iota(epsilon)
    edge = d / (math.sqrt(2.0) * sigma_j)
    if io >= edge * (1.0 - c) / c:
        return RiskValue.zero()
    if io <= -edge:
        return RiskValue.infinite()
    return RiskValue.finite(d / (io * math.sqrt(2.0) * sigma_j + d) - c)


def single_risk(sigma_j: float, cfg: PlatoonConfig) -> RiskValue:
    return single_risk_from_std(sigma_j, cfg.d, cfg.c, cfg.epsilon)


def _other_pairs(stats: DistanceStatistics, i: int) -> list[int]:
    stats._check(i)
    return [j for j in range(1, stats.pairs + 1) if j != i]


def risk_vector(stats: DistanceStatistics, cfg: PlatoonConfig, i: int) -> list[RiskValue]:
    """Cascading risks of every pair ``j != i``, ascending in ``j``."""
    return [cascading_risk(stats, cfg, i, j) for j in _other_pairs(stats, i)]


@dataclass(frozen=True)
class RiskRow:
    j: int
    risk: RiskValue
    kappa0: float
    kappainf: float
    iota: float

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "tag": self.risk.tag.value,
            "value": self.risk.value,
            "near_infinite": self.risk.near_infinite,
            "kappa0": self.kappa0,
            "kappainf": self.kappainf,
            "iota": self.iota,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RiskRow":
        risk = RiskValue(RiskTag(data["tag"]), data["value"], bool(data.get("near_infinite", False)))
        return cls(data["j"], risk, data["kappa0"], data["kappainf"], data["iota"])


def cascade_table(stats: DistanceStatistics, cfg: PlatoonConfig, i: int) -> list[RiskRow]:
    rows = []
    for j in _other_pairs(stats, i):
        ends = kappa_endpoints_from_moments(
            stats.std(i), stats.std(j), correlation(stats, i, j), cfg.d, cfg.c, cfg.epsilon
        )
        rows.append(RiskRow(j, cascading_risk(stats, cfg, i, j), ends.kappa_0, ends.kappa_inf, ends.iota))
    return rows


def single_table(stats: DistanceStatistics, cfg: PlatoonConfig) -> list[RiskRow]:
    """Single-collision risks of every pair; kappa columns use rho = 0."""
    rows = []
    for j in range(1, stats.pairs + 1):
        s = stats.std(j)
        ends = kappa_endpoints_from_moments(s, s, 0.0, cfg.d, cfg.c, cfg.epsilon)
        rows.append(RiskRow(j, single_risk(s, cfg), ends.kappa_0, ends.kappa_inf, ends.iota))
    return rows


class Regime(str, enum.Enum):
    INFINITE = "infinite"
    POSITIVE = "positive"
    ZERO = "zero"


def kappa_objective(sigma_i: float, sigma_j: float, sigma_ij: float, cfg: PlatoonConfig) -> tuple[float, Regime]:
    """Design objective K and the risk regime it implies (epsilon < 1/2 only).

    ``K >= 1`` means infinite risk, ``1 - 1/c < K < 1`` positive risk and
    ``K <= 1 - 1/c`` zero risk.
    """
    if not cfg.epsilon < 0.5:
        raise InvalidParameterError(f"K objective is defined for epsilon < 1/2, got {cfg.epsilon!r}")
    if not (sigma_i > 0 and sigma_j > 0):
        raise InvalidParameterError("standard deviations must be positive")
    radicand = sigma_j**2 - sigma_ij**2 / sigma_i**2
    if radicand <= 0:
        raise DegenerateCorrelationError("conditional variance is not positive")
    K = abs(iota(cfg.epsilon)) * math.sqrt(2.0) / cfg.d * math.sqrt(radicand) + sigma_ij / sigma_i**2
    if K >= 1.0:
        return K, Regime.INFINITE
    if K > 1.0 - 1.0 / cfg.c:
        return K, Regime.POSITIVE
    return K, Regime.ZERO


REGIME_OF_TAG = {RiskTag.ZERO: Regime.ZERO, RiskTag.FINITE: Regime.POSITIVE, RiskTag.INFINITE: Regime.INFINITE}

"""Steady-state statistics of the inter-vehicle distances.

Each nonzero Laplacian mode contributes ``g^2 tau^3 / (2 pi) * f(lam tau, beta tau)``
to the position variance, where

    f(s1, s2) = int_R dr / ((s1 s2 - r^2 cos r)^2 + r^2 (s1 - r sin r)^2).

The distance covariance follows by projecting the modes onto the
differences ``e_{i+1} - e_i``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateCorrelationError,
    InvalidParameterError,
    NumericalFailureError,
    StabilityDomainError,
)
from .graph import EigenStructure
from .stability import in_stability_set, require_stable

# Gauss-Kronrod 7/15 nodes on [-1, 1] (non-negative half, descending)
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_X15 = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_W15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_W7 = np.zeros(15)
_W7[[1, 3, 5]] = _WG[:3]
_W7[7] = _WG[3]
_W7[[9, 11, 13]] = _WG[2::-1]

TAIL_ETA = 0.5
DEFAULT_RTOL = 1e-10
MIN_RADIUS = 64.0
MAX_REFINEMENTS = 60
MAX_INTERVALS = 2_000_000
DEGENERATE_RHO = 1.0 - 1e-12
CLUSTER_RTOL = 1e-10


def integrand(r, s1: float, s2: float):
    """Mode-integral integrand; even in ``r`` and equal to ``1/(s1 s2)^2`` at 0."""
    r = np.asarray(r, dtype=float)
    a = s1 * s2 - r * r * np.cos(r)
    b = r * (s1 - r * np.sin(r))
    return 1.0 / (a * a + b * b)


def _gk15(func, a: np.ndarray, b: np.ndarray):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    vals = func(mid[:, None] + half[:, None] * _X15[None, :])
    k = half * (vals @ _W15)
    g = half * (vals @ _W7)
    return k, np.abs(k - g)


def adaptive_integrate(func, breakpoints: np.ndarray, rtol: float, atol: float = 0.0):
    """Globally adaptive G7/K15 quadrature over consecutive breakpoint panels.

    Panels whose error estimate exceeds their share of the global budget are
    bisected until ``sum(err) <= max(atol, rtol * |I|)``.  Returns
    ``(integral, error_estimate, n_intervals)``.
    """
    a = np.asarray(breakpoints[:-1], dtype=float)
    b = np.asarray(breakpoints[1:], dtype=float)
    for _ in range(MAX_REFINEMENTS):
        k, err = _gk15(func, a, b)
        total = math.fsum(k)
        total_err = float(err.sum())
        budget = max(atol, rtol * abs(total))
        if total_err <= budget:
            return total, total_err, len(a)
        split = err > budget / len(a)
        if len(a) + split.sum() > MAX_INTERVALS:
            break
        mid = 0.5 * (a[split] + b[split])
        a = np.concatenate([a[~split], a[split], mid])
        b = np.concatenate([b[~split], mid, b[split]])
        order = np.argsort(a, kind="stable")
        a, b = a[order], b[order]
    raise NumericalFailureError(
        f"adaptive quadrature stopped at relative error {total_err / max(abs(total), 1e-300):.3g}",
        residual=total_err / max(abs(total), 1e-300),
    )


def tail_bound(radius: float, eta: float = TAIL_ETA) -> float:
    """Bound on the two-sided integral beyond ``|r| > radius`` when den >= (1-eta) r^4."""
    return 2.0 / (3.0 * (1.0 - eta) * radius**3)


def _check_tail_denominator(s1: float, s2: float, radius: float, eta: float = TAIL_ETA):
    # den >= r^4 - 2 s1 r^3 - 2 s1 s2 r^2, so this is sufficient for all r >= radius
    if 2.0 * s1 / radius + 2.0 * s1 * s2 / radius**2 > eta:
        raise NumericalFailureError(f"truncation radius {radius:g} too small for the tail bound")
    r = radius * np.linspace(1.0, 4.0, 2001)
    if np.any(1.0 / integrand(r, s1, s2) < (1.0 - eta) * r**4):
        raise NumericalFailureError(f"tail denominator check failed beyond r = {radius:g}")


def _start_breakpoints(s1: float, s2: float, radius: float) -> np.ndarray:
    # resolve the low-frequency resonance near r ~ sqrt(s1 s2), width ~ s1
    small = min(s1, math.sqrt(s1 * s2), 1.0)
    geo = small * 2.0 ** np.arange(-4.0, 64.0, 0.5)
    geo = geo[geo < 2.0]
    uniform = np.arange(2.0, radius, 0.5 * math.pi)
    return np.unique(np.concatenate([[0.0], geo, uniform, [radius]]))


@lru_cache(maxsize=4096)
def _mode_integral_cached(s1: float, s2: float, rtol: float, radius_scale: float) -> tuple[float, float, float]:
    func = lambda r: integrand(r, s1, s2)  # noqa: E731
    head, head_err, _ = adaptive_integrate(func, _start_breakpoints(s1, s2, MIN_RADIUS), 0.25 * rtol)
    needed = (2.0 / (3.0 * (1.0 - TAIL_ETA) * 0.5 * rtol * 2.0 * head)) ** (1.0 / 3.0)
    radius = max(MIN_RADIUS, needed) * radius_scale
    _check_tail_denominator(s1, s2, radius)
    total, err = head, head_err
    if radius > MIN_RADIUS:
        extra = np.arange(MIN_RADIUS, radius, 0.5 * math.pi)
        rest, rest_err, _ = adaptive_integrate(
            func, np.unique(np.concatenate([extra, [radius]])), 0.25 * rtol, atol=0.25 * rtol * head
        )
        total += rest
        err += rest_err
    value = 2.0 * total
    return value, 2.0 * err + tail_bound(radius), radius


def mode_integral(
    s1: float, s2: float, rtol: float = DEFAULT_RTOL, radius_scale: float = 1.0, full_output: bool = False
):
    """Improper integral ``f(s1, s2)`` over the real line, for ``(s1, s2)`` in S.

    Computed as twice the half-line integral.  The half line is cut at a
    radius where the analytic tail bound is below half the tolerance;
    ``radius_scale`` multiplies that radius (for robustness checks).  With
    ``full_output`` returns ``(value, error_bound, radius)``.
    """
    s1, s2 = float(s1), float(s2)
    if not in_stability_set(s1, s2):
        raise StabilityDomainError(f"(s1, s2) = ({s1:g}, {s2:g}) is outside the stability set")
    if not (0.0 < rtol < 1.0) or radius_scale < 1.0:
        raise InvalidParameterError("rtol must be in (0, 1) and radius_scale >= 1")
    out = _mode_integral_cached(s1, s2, float(rtol), float(radius_scale))
    return out if full_output else out[0]


def max_workers() -> int:
    """Worker cap from ``PLATOON_RISK_THREADS`` (0 or unset = one per CPU)."""
    raw = os.environ.get("PLATOON_RISK_THREADS", "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        raise InvalidParameterError(f"PLATOON_RISK_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise InvalidParameterError("PLATOON_RISK_THREADS must be >= 0")
    return value or (os.cpu_count() or 1)


@dataclass(frozen=True)
class PlatoonConfig:
    """Physical platoon parameters plus the risk query settings.

    ``g`` is the noise diffusion, ``tau`` the delay, ``beta`` the
    position/velocity balance, ``d`` the target spacing, ``c >= 1`` the
    collision-set offset and ``epsilon`` the confidence level.
    """

    n: int
    g: float
    tau: float
    beta: float
    d: float = 2.0
    c: float = 1.0
    epsilon: float = 0.1

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise InvalidParameterError(f"n must be an integer >= 2, got {self.n!r}")
        for name in ("tau", "beta", "d"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be positive, got {value!r}")
        # g = 0 is admitted for noiseless simulation / comparison runs
        if not (self.g >= 0 and math.isfinite(self.g)):
            raise InvalidParameterError(f"g must be non-negative, got {self.g!r}")
        if not self.c >= 1:
            raise InvalidParameterError(f"c must be >= 1, got {self.c!r}")
        if not 0 < self.epsilon < 1:
            raise InvalidParameterError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")

    def replace(self, **changes) -> "PlatoonConfig":
        from dataclasses import replace

        return replace(self, **changes)


def difference_projections(eigs: EigenStructure) -> np.ndarray:
    """Matrix ``DQ`` with entry (i, k) = (e_{i+1} - e_i)^T q_k."""
    Q = eigs.Q
    return Q[1:, :] - Q[:-1, :]


def _cluster_eigenvalues(lambdas: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Group numerically equal nonzero eigenvalues (relative gap <= CLUSTER_RTOL)."""
    scale = max(float(np.max(np.abs(lambdas))), 1e-300)
    groups: list[list[int]] = []
    for k in range(1, len(lambdas)):
        if groups and abs(lambdas[k] - lambdas[groups[-1][0]]) <= CLUSTER_RTOL * scale:
            groups[-1].append(k)
        else:
            groups.append([k])
    return [(float(np.mean(lambdas[idx])), np.array(idx)) for idx in groups]


def mode_variances(eigs: EigenStructure, cfg: PlatoonConfig, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Per-mode integrals ``f(lam_k tau, beta tau)``; entry 0 (consensus mode) is 0."""
    require_stable(eigs, cfg.tau, cfg.beta)
    clusters = _cluster_eigenvalues(eigs.lambdas)
    s2 = cfg.beta * cfg.tau
    args = [(lam * cfg.tau, s2) for lam, _ in clusters]
    workers = min(max_workers(), len(args))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda a: mode_integral(a[0], a[1], rtol), args))
    else:
        values = [mode_integral(s1, s2_, rtol) for s1, s2_ in args]
    f = np.zeros(eigs.n)
    for (_, idx), value in zip(clusters, values):
        f[idx] = value
    return f


def covariance_matrix(eigs: EigenStructure, cfg: PlatoonConfig, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Steady-state distance covariance (n-1 x n-1); the zero mode is skipped."""
    if cfg.n != eigs.n:
        raise InvalidParameterError(f"config n = {cfg.n} does not match graph size {eigs.n}")
    f = mode_variances(eigs, cfg, rtol)
    P = difference_projections(eigs)[:, 1:]
    sigma = (cfg.g**2 * cfg.tau**3 / (2.0 * math.pi)) * (P * f[1:]) @ P.T
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True)
class DistanceStatistics:
    """Covariance of the steady-state distances; pair indices are 1-based."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise InvalidParameterError("covariance must be a square matrix")
        if not np.all(np.isfinite(sigma)):
            raise InvalidParameterError("covariance has non-finite entries")
        if not np.all(np.diag(sigma) > 0):
            raise InvalidParameterError("covariance diagonal must be strictly positive")
        if np.abs(sigma - sigma.T).max() > 1e-12 * np.abs(sigma).max():
            raise InvalidParameterError("covariance must be symmetric")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def pairs(self) -> int:
        return self.sigma.shape[0]

    @property
    def marginals(self) -> np.ndarray:
        """Standard deviations sigma_i."""
        return np.sqrt(np.diag(self.sigma))

    @property
    def correlations(self) -> np.ndarray:
        s = self.marginals
        rho = self.sigma / np.outer(s, s)
        np.fill_diagonal(rho, 1.0)
        return rho

    def _check(self, i: int) -> int:
        if not 1 <= i <= self.pairs:
            raise InvalidParameterError(f"pair index {i} outside 1..{self.pairs}")
        return i - 1

    def std(self, i: int) -> float:
        return float(math.sqrt(self.sigma[self._check(i), self._check(i)]))

    def cov(self, i: int, j: int) -> float:
        return float(self.sigma[self._check(i), self._check(j)])


def distance_covariance(eigs: EigenStructure, cfg: PlatoonConfig, rtol: float = DEFAULT_RTOL) -> DistanceStatistics:
    if cfg.g <= 0:
        raise InvalidParameterError("distance statistics need g > 0")
    return DistanceStatistics(covariance_matrix(eigs, cfg, rtol))


def correlation(stats: DistanceStatistics, i: int, j: int) -> float:
    if i == j:
        stats._check(i)
        return 1.0
    return stats.cov(i, j) / (stats.std(i) * stats.std(j))


@dataclass(frozen=True)
class ConditionalDistribution:
    """Normal law of pair j's distance given pair i's distance."""

    mu_tilde: float
    sigma_tilde_sq: float


def conditional_moments(sigma_i: float, sigma_j: float, rho: float, d: float, d_c: float) -> ConditionalDistribution:
    if abs(rho) >= DEGENERATE_RHO:
        raise DegenerateCorrelationError(f"|rho| = {abs(rho):.17g} is numerically 1")
    mu = d + rho * (sigma_j / sigma_i) * (d_c - d)
    var = sigma_j**2 * (1.0 - rho * rho)
    return ConditionalDistribution(mu, var)


def conditional_distribution(
    stats: DistanceStatistics, cfg: PlatoonConfig, i: int, j: int, d_c: float = 0.0
) -> ConditionalDistribution:
    """Law of ``d_j`` given ``d_i = d_c``; ``d_c = 0`` is a collision of pair i."""
    if i == j:
        raise InvalidParameterError("conditioning pair and queried pair must differ")
    rho = correlation(stats, i, j)
    return conditional_moments(stats.std(i), stats.std(j), rho, cfg.d, d_c)

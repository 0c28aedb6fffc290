"""Delay-stability set of the platoon and per-mode certification.

A mode with Laplacian eigenvalue ``lam`` is stable when the scaled pair
``(lam * tau, beta * tau)`` lies in the open set

    S = {(s1, s2) : 0 < s1 < pi/2,  0 < s2 < a / tan(a)},   a * sin(a) = s1, a in (0, pi/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidParameterError, StabilityDomainError
from .graph import EigenStructure

HALF_PI = 0.5 * math.pi
BISECTION_ITERS = 200


def solve_a(s1: float) -> float:
    """Root of ``a * sin(a) = s1`` on (0, pi/2), by bisection."""
    if not (0.0 < s1 < HALF_PI):
        raise StabilityDomainError(f"s1 = {s1!r} is outside (0, pi/2)")
    lo, hi = 0.0, HALF_PI
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if mid * math.sin(mid) < s1:
            lo = mid
        else:
            hi = mid
    # pick whichever bracket end has the smaller residual
    if abs(lo * math.sin(lo) - s1) <= abs(hi * math.sin(hi) - s1):
        return lo
    return hi


def s2_bound(s1: float) -> float:
    """Upper end ``a / tan(a)`` of the admissible s2 interval."""
    a = solve_a(s1)
    return a / math.tan(a)


def in_stability_set(s1: float, s2: float) -> bool:
    if not (math.isfinite(s1) and math.isfinite(s2)):
        return False
    if not (0.0 < s1 < HALF_PI):
        return False
    return 0.0 < s2 < s2_bound(s1)


@dataclass(frozen=True)
class ModeCheck:
    k: int  # 1-based mode index
    lam: float
    s1: float
    s2: float
    stable: bool
    bound: float | None  # a/tan(a), None when s1 is outside (0, pi/2)


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    tau: float
    beta: float
    modes: tuple[ModeCheck, ...] = field(default=())

    @property
    def first_violation(self) -> ModeCheck | None:
        for mode in self.modes:
            if not mode.stable:
                return mode
        return None

    def summary(self) -> str:
        if self.stable:
            return f"stable: all {len(self.modes)} nonzero modes inside S (tau={self.tau:g}, beta={self.beta:g})"
        bad = self.first_violation
        bound = "n/a" if bad.bound is None else f"{bad.bound:.6g}"
        return (
            f"unstable: mode k={bad.k} (lambda={bad.lam:.6g}) has s1={bad.s1:.6g}, "
            f"s2={bad.s2:.6g}, s2 bound={bound}"
        )

    def to_dict(self) -> dict:
        bad = self.first_violation
        return {
            "stable": self.stable,
            "tau": self.tau,
            "beta": self.beta,
            "first_violation": None if bad is None else bad.k,
            "modes": [
                {"k": m.k, "lambda": m.lam, "s1": m.s1, "s2": m.s2, "stable": m.stable, "bound": m.bound}
                for m in self.modes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StabilityReport":
        modes = tuple(
            ModeCheck(m["k"], m["lambda"], m["s1"], m["s2"], m["stable"], m["bound"]) for m in data["modes"]
        )
        return cls(data["stable"], data["tau"], data["beta"], modes)


def platoon_is_stable(eigs: EigenStructure, tau: float, beta: float) -> StabilityReport:
    """Check every nonzero mode; the consensus mode ``k = 1`` never moves distances and is skipped."""
    if not (tau > 0 and beta > 0):
        raise InvalidParameterError(f"tau and beta must be positive, got tau={tau!r}, beta={beta!r}")
    s2 = beta * tau
    modes = []
    for k in range(1, eigs.n):
        lam = float(eigs.lambdas[k])
        s1 = lam * tau
        bound = s2_bound(s1) if 0.0 < s1 < HALF_PI else None
        ok = bound is not None and 0.0 < s2 < bound
        modes.append(ModeCheck(k + 1, lam, s1, s2, ok, bound))
    return StabilityReport(all(m.stable for m in modes), tau, beta, tuple(modes))


def require_stable(eigs: EigenStructure, tau: float, beta: float) -> StabilityReport:
    report = platoon_is_stable(eigs, tau, beta)
    if not report.stable:
        raise StabilityDomainError(report.summary())
    return report

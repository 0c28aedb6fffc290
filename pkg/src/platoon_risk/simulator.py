"""Monte Carlo integration of the delayed stochastic platoon dynamics.

    dx = v dt
    dv = -L v(t - tau) dt - beta L (x(t - tau) - y) dt + g dW

is stepped with Euler-Maruyama on a grid whose step divides the delay, so
the delayed state is read straight from a ring buffer.  All replicas are
advanced together; replica ``r`` draws from ``PCG64(seed)`` jumped ``r``
times, which gives provably disjoint streams.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientSamplesError,
    InvalidParameterError,
    SimulationDivergenceError,
)
from .graph import WeightedGraph, graph_eigenstructure, laplacian
from .spectral import PlatoonConfig

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e9
NOISE_CHUNK = 2048
MIN_EFFECTIVE = 100
MIN_BATCHES = 20
MIN_SLAB = 200


def default_burn_in(cfg: PlatoonConfig, lambda2: float) -> float:
    return max(50.0 * cfg.tau, 20.0 / (cfg.beta * lambda2))


@dataclass(frozen=True)
class SimulationPlan:
    """Everything needed to reproduce one Monte Carlo run.

    ``burn_in=None`` selects the default ``max(50 tau, 20 / (beta lambda_2))``.
    ``check_burn_in=False`` skips the relaxation-time requirement, which
    transient studies (e.g. growth of an unstable run) need.
    """

    cfg: PlatoonConfig
    graph: WeightedGraph
    step: float
    horizon: float
    replicas: int = 1
    seed: int = 0
    sample_stride: int = 1
    burn_in: float | None = None
    initial_offset: float = 0.0
    check_burn_in: bool = True
    delay_steps: int = field(init=False)
    lambda2: float = field(init=False)

    def __post_init__(self):
        cfg = self.cfg
        if self.graph.n != cfg.n:
            raise InvalidParameterError(f"graph has {self.graph.n} nodes but config says n = {cfg.n}")
        if not self.step > 0:
            raise InvalidParameterError("step must be positive")
        m = round(cfg.tau / self.step)
        if m < 1 or abs(m * self.step - cfg.tau) > 1e-9 * cfg.tau:
            raise InvalidParameterError(f"step {self.step!r} does not divide tau = {cfg.tau!r}")
        if m < 20:
            raise InvalidParameterError(f"step must be <= tau/20 (tau/step = {m})")
        if not (isinstance(self.replicas, (int, np.integer)) and self.replicas >= 1):
            raise InvalidParameterError("replicas must be an integer >= 1")
        if not (isinstance(self.sample_stride, (int, np.integer)) and self.sample_stride >= 1):
            raise InvalidParameterError("sample_stride must be an integer >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if not self.horizon > 0:
            raise InvalidParameterError("horizon must be positive")
        lam2 = float(graph_eigenstructure(self.graph).lambdas[1])
        object.__setattr__(self, "delay_steps", int(m))
        object.__setattr__(self, "lambda2", lam2)
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", default_burn_in(cfg, lam2))
        if self.burn_in < 0:
            raise InvalidParameterError("burn_in must be non-negative")
        if self.check_burn_in and self.burn_in < 10.0 / (cfg.beta * lam2):
            raise InvalidParameterError(
                f"burn_in {self.burn_in:g} is shorter than 10 relaxation times ({10.0 / (cfg.beta * lam2):g})"
            )

    @property
    def burn_in_steps(self) -> int:
        return int(round(self.burn_in / self.step))

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon / self.step))

    @property
    def samples_per_replica(self) -> int:
        return self.horizon_steps // self.sample_stride


@dataclass(frozen=True)
class DistanceSampleSet:
    """Retained distance vectors, replica-major.

    ``samples[k]`` was taken from replica ``replica[k]`` at time ``times[k]``.
    """

    samples: np.ndarray
    replica: np.ndarray
    times: np.ndarray
    replicas: int

    @property
    def pairs(self) -> int:
        return self.samples.shape[1]

    def per_replica(self) -> np.ndarray:
        """View as (replicas, samples_per_replica, pairs)."""
        return self.samples.reshape(self.replicas, -1, self.pairs)

    def to_csv(self, path) -> None:
        header = ",".join(f"pair_{k}" for k in range(1, self.pairs + 1))
        np.savetxt(path, self.samples, delimiter=",", header=header, comments="", fmt="%.17g")


def _generators(seed: int, replicas: int) -> list[np.random.Generator]:
    base = np.random.PCG64(int(seed))
    return [np.random.Generator(base.jumped(r + 1)) for r in range(replicas)]


def simulate(plan: SimulationPlan) -> DistanceSampleSet:
    """Run all replicas and return the retained distance samples."""
    cfg = plan.cfg
    n, R, h, m = cfg.n, plan.replicas, plan.step, plan.delay_steps
    L = laplacian(plan.graph)
    y = cfg.d * np.arange(1, n + 1, dtype=float)
    noise_scale = cfg.g * math.sqrt(h)

    x = np.tile(y + plan.initial_offset, (R, 1))
    v = np.zeros((R, n))
    # ring buffer of the last m+1 states; slot k % (m+1)
    xb = np.repeat(x[None], m + 1, axis=0)
    vb = np.zeros((m + 1, R, n))

    b, H, stride = plan.burn_in_steps, plan.horizon_steps, plan.sample_stride
    total = b + H
    S = plan.samples_per_replica
    out = np.empty((R, S, n - 1))
    t_out = np.empty(S)
    gens = _generators(plan.seed, R)
    log.debug("simulate: n=%d replicas=%d steps=%d delay=%d", n, R, total, m)

    rec = 0
    k = 0
    while k < total:
        chunk = min(NOISE_CHUNK, total - k)
        noise = np.stack([gen.standard_normal((chunk, n)) for gen in gens], axis=1)
        if noise_scale != 1.0:
            noise *= noise_scale
        for c in range(chunk):
            slot = k % (m + 1)
            xb[slot] = x
            vb[slot] = v
            old = (k + 1) % (m + 1)
            # formation offsets cancel exactly, so g = 0 keeps the formation bit-exact
            acc = -((vb[old] + cfg.beta * (xb[old] - y)) @ L)
            x = x + h * v
            v = v + h * acc + noise[c]
            k += 1
            if k > b and (k - b) % stride == 0 and rec < S:
                out[:, rec, :] = x[:, 1:] - x[:, :-1]
                t_out[rec] = k * h
                rec += 1
        if not (np.all(np.abs(x) < DIVERGENCE_LIMIT) and np.all(np.abs(v) < DIVERGENCE_LIMIT)):
            bad = k
            raise SimulationDivergenceError(f"state exceeded {DIVERGENCE_LIMIT:g} by step {bad}", step=bad)

    return DistanceSampleSet(
        samples=out.reshape(R * S, n - 1),
        replica=np.repeat(np.arange(R), S),
        times=np.tile(t_out, R),
        replicas=R,
    )


@dataclass(frozen=True)
class EmpiricalStatistics:
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    effective_samples: np.ndarray
    batches: int


def _batches(samples: DistanceSampleSet, batches_per_replica: int | None) -> np.ndarray:
    """Split each replica into equal batches -> (B, batch_len, pairs)."""
    per = samples.per_replica()
    R, S, p = per.shape
    nb = batches_per_replica or max(2, math.ceil(MIN_BATCHES / R))
    if R * nb < MIN_BATCHES:
        raise InsufficientSamplesError(f"need >= {MIN_BATCHES} batches, got {R * nb}", count=R * nb)
    length = S // nb
    if length < 1:
        raise InsufficientSamplesError("fewer samples than batches", count=S)
    return per[:, : nb * length, :].reshape(R * nb, length, p)


def estimate_statistics(samples: DistanceSampleSet, batches_per_replica: int | None = None) -> EmpiricalStatistics:
    """Sample mean and covariance with batch-means standard errors."""
    data = _batches(samples, batches_per_replica)
    B, length, p = data.shape
    N = B * length
    flat = data.reshape(N, p)
    mean = flat.mean(axis=0)
    batch_means = data.mean(axis=1)
    centred = data - mean
    batch_cov = np.einsum("bti,btj->bij", centred, centred) / length
    cov = batch_cov.mean(axis=0)
    cov_se = batch_cov.std(axis=0, ddof=1) / math.sqrt(B)
    mean_se = batch_means.std(axis=0, ddof=1) / math.sqrt(B)

    var = np.diag(cov)
    asym = length * batch_means.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ess = np.where(asym > 0, N * var / asym, float(N))
    ess = np.minimum(ess, float(N))
    if np.any(ess < MIN_EFFECTIVE):
        worst = int(np.argmin(ess))
        raise InsufficientSamplesError(
            f"pair {worst + 1} has only {ess[worst]:.0f} effective samples", count=int(ess[worst])
        )
    return EmpiricalStatistics(mean, cov, mean_se, cov_se, ess, B)


@dataclass(frozen=True)
class SlabStatistics:
    """Moments of every other pair restricted to ``|d_i - d_c| < eta``.

    Arrays are indexed by 0-based pair; entry ``i - 1`` is NaN.
    """

    i: int
    d_c: float
    eta: float
    count: int
    mean: np.ndarray
    variance: np.ndarray
    mean_se: np.ndarray
    variance_se: np.ndarray


def conditional_slab_statistics(
    samples: DistanceSampleSet, i: int, d_c: float, eta: float, batches_per_replica: int | None = None
) -> SlabStatistics:
    """Slab-conditioned mean/variance of each ``d_j`` with ratio-estimator errors."""
    if not 1 <= i <= samples.pairs:
        raise InvalidParameterError(f"pair index {i} outside 1..{samples.pairs}")
    if not eta > 0:
        raise InvalidParameterError("eta must be positive")
    data = _batches(samples, batches_per_replica)
    B = data.shape[0]
    inside = np.abs(data[:, :, i - 1] - d_c) < eta
    counts = inside.sum(axis=1).astype(float)
    total = int(counts.sum())
    if total < MIN_SLAB:
        raise InsufficientSamplesError(
            f"only {total} samples fall in the slab |d_{i} - {d_c:g}| < {eta:g}; widen eta or extend the horizon",
            count=total,
        )
    w = inside[:, :, None]
    s1 = np.sum(data * w, axis=1)
    s2 = np.sum(data * data * w, axis=1)
    mean = s1.sum(axis=0) / total
    var = s2.sum(axis=0) / total - mean**2
    inflate = B / (B - 1.0)
    e_mean = s1 - mean * counts[:, None]
    e_var = s2 - 2.0 * mean * s1 + (mean**2 - var) * counts[:, None]
    mean_se = np.sqrt(inflate * np.sum(e_mean**2, axis=0)) / total
    var_se = np.sqrt(inflate * np.sum(e_var**2, axis=0)) / total
    for arr in (mean, var, mean_se, var_se):
        arr[i - 1] = np.nan
    return SlabStatistics(i, float(d_c), float(eta), total, mean, var, mean_se, var_se)


def window_variances(samples: DistanceSampleSet, horizons, window: float) -> np.ndarray:
    """Pooled variance over replicas and the time window ``(t - window, t]``, per horizon ``t``.

    Returned shape: (len(horizons), pairs).
    """
    out = []
    for t in horizons:
        sel = (samples.times > t - window) & (samples.times <= t + 1e-12)
        if sel.sum() < 2:
            raise InsufficientSamplesError(f"no samples in window ending at t = {t:g}", count=int(sel.sum()))
        out.append(samples.samples[sel].var(axis=0, ddof=1))
    return np.array(out)

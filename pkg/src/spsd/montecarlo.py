"""Monte Carlo verification of the covariance approximations.

Simulates the original SDE at scale, accumulates streaming means and
covariances at integer times, aggregates relative errors against an
approximation, and runs one-sample Kolmogorov-Smirnov tests of the marginal
normal laws. Replicas use counter-derived substreams, so a report is
bitwise reproducible for a fixed seed no matter how many threads run the
chunks.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import AssumptionViolationError, SimulationError, UsageError
from .pnoa import SpsdApproximation
from .periodic import PeriodicModel

__all__ = [
    "KsOutcome",
    "KsResult",
    "RelativeErrors",
    "SimConfig",
    "SimulationReport",
    "ks_marginal_test",
    "ks_statistic",
    "ks_threshold",
    "relative_errors",
    "simulate_statistics",
    "splitmix64",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
#: Paths are stepped in fixed blocks of this many replicas. The value is a
#: constant of the output format: regrouping the per-chunk reductions would
#: change floating-point rounding, so it is not a tuning knob.
CHUNK_SIZE = 2048


def splitmix64(seed: int, index: int) -> int:
    """Substream seed for path `index`, by the splitmix64 output function."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SimConfig:
    """Replica count, seed, step, horizon, and scheme of one simulation run.

    The horizon is a whole number of unit intervals and the step must tile
    the unit interval, so that statistics land exactly on integer times.
    `ks_times` picks the integer times whose marginals are tested; None
    selects round(theta/2), theta, 2*theta, and the horizon, clamped into
    [1, horizon].
    """

    num: int
    seed: int
    dt: float = 1e-3
    horizon: int = 400
    scheme: str = "milstein"
    ks_times: tuple[int, ...] | None = None
    ks_alpha: float = 0.02

    def __post_init__(self):
        if int(self.num) != self.num or self.num < 2:
            raise UsageError(f"replica count must be an integer >= 2, got {self.num}")
        object.__setattr__(self, "num", int(self.num))
        horizon = float(self.horizon)
        if not (horizon.is_integer() and horizon >= 1.0):
            raise UsageError(
                f"horizon must be a whole number of unit intervals, got {self.horizon}"
            )
        object.__setattr__(self, "horizon", int(horizon))
        if not 0.0 < self.dt <= 1.0:
            raise UsageError(f"step must lie in (0, 1], got {self.dt}")
        if abs(round(1.0 / self.dt) * self.dt - 1.0) > 1e-9:
            raise UsageError(
                f"step {self.dt} does not tile the unit sampling interval"
            )
        if self.scheme not in ("euler_maruyama", "milstein"):
            raise UsageError(
                f"scheme must be euler_maruyama or milstein, got {self.scheme!r}"
            )
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        if not 0.0 < self.ks_alpha < 1.0:
            raise UsageError(f"significance level must be in (0, 1), got {self.ks_alpha}")
        if self.ks_times is not None:
            if any(float(t) != int(t) for t in self.ks_times):
                raise UsageError(f"ks_times must be integers, got {self.ks_times}")
            times = tuple(sorted({int(t) for t in self.ks_times}))
            if times and (times[0] < 1 or times[-1] > self.horizon):
                raise UsageError(
                    f"ks_times must lie in [1, {self.horizon}], got {self.ks_times}"
                )
            object.__setattr__(self, "ks_times", times)

    @property
    def steps_per_unit(self) -> int:
        return round(1.0 / self.dt)


@dataclass(frozen=True)
class KsOutcome:
    statistic: float
    threshold: float
    reject: bool


@dataclass(frozen=True)
class KsResult:
    """Marginal KS test of one coordinate at one integer time."""

    time: int
    coordinate: int
    statistic: float
    threshold: float
    reject: bool


@dataclass(frozen=True)
class RelativeErrors:
    """Time-averaged relative errors of means (aee) and covariances (aev).

    Terms with an exactly zero sample denominator are dropped from the
    average; the counters say how many were dropped.
    """

    aee: np.ndarray
    aev: np.ndarray
    excluded_mean_terms: int
    excluded_cov_terms: int


@dataclass(frozen=True, eq=False)
class SimulationReport:
    """Streaming statistics of one simulation run against an approximation.

    All arrays are indexed by integer time 0..horizon. `statistics_space`
    records whether moments were taken of the state itself or of its
    logarithm (the log-normal family); reference values live in the same
    space.
    """

    statistics_space: str
    times: np.ndarray
    sample_counts: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    ref_means: np.ndarray
    ref_covariances: np.ndarray
    errors: RelativeErrors
    ks: tuple[KsResult, ...]
    num: int
    seed: int
    dt: float
    horizon: int
    scheme: str
    blown_paths: int


def ks_threshold(alpha: float, m: int) -> float:
    """Asymptotic two-sided KS acceptance threshold at level alpha."""
    return math.sqrt(-math.log(alpha / 2.0) / 2.0) / math.sqrt(m)


def ks_statistic(samples, cdf) -> float:
    """Sup distance between the empirical CDF and a reference CDF.

    Both sides of every empirical jump are candidates, so the returned
    value is the exact sup, not the one-sided upper envelope. `cdf` must
    accept a vector of sorted sample values.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise UsageError("need at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    steps = np.arange(1, m + 1) / m
    return float(max(np.max(steps - f), np.max(f - (steps - 1.0 / m))))


def ks_marginal_test(samples, mean: float, variance: float, alpha: float = 0.02) -> KsOutcome:
    """One-sample KS test of the samples against N(mean, variance)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 8:
        raise UsageError(f"need at least 8 samples for the KS test, got {x.size}")
    if not variance > 0.0:
        raise UsageError(
            "reference variance must be positive; the marginal law is degenerate"
        )
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"significance level must be in (0, 1), got {alpha}")
    scale = math.sqrt(variance)
    statistic = ks_statistic(x, lambda v: ndtr((v - mean) / scale))
    threshold = ks_threshold(alpha, x.size)
    return KsOutcome(statistic, threshold, statistic > threshold)


def relative_errors(means, covariances, ref_means, ref_covariances) -> RelativeErrors:
    """Average over integer times 1..T of |sample - reference| / |sample|.

    The sample value sits in the denominator, matching the convention of
    the published error tables. Time 0 holds the initial draw and is
    excluded. Entries whose sample value is exactly zero contribute
    nothing; they are counted instead.
    """
    means = np.asarray(means, dtype=float)
    covariances = np.asarray(covariances, dtype=float)

    def average(sample, ref):
        den = np.abs(sample)
        include = den > 0.0
        terms = np.zeros_like(sample)
        np.divide(np.abs(sample - ref), den, out=terms, where=include)
        counts = include.sum(axis=0)
        sums = terms.sum(axis=0)
        out = np.zeros(sample.shape[1:])
        np.divide(sums, counts, out=out, where=counts > 0)
        excluded = int(include.size - include.sum())
        return out, excluded

    aee, dropped_mean = average(means[1:], np.asarray(ref_means, float)[1:])
    aev, dropped_cov = average(covariances[1:], np.asarray(ref_covariances, float)[1:])
    return RelativeErrors(aee, aev, dropped_mean, dropped_cov)


def _noise_structure(model: PeriodicModel, anchor: np.ndarray):
    """Probe whether the loading is diagonal and whether it depends on x."""
    times = [0.0, 0.37 * model.period, 0.81 * model.period]
    states = [anchor, anchor * 1.31 + 0.13, anchor * 0.67 - 0.05]
    probes = [
        np.asarray(model.diffusion(t, x), dtype=float) for t in times for x in states
    ]
    diagonal = model.dim == model.noise_dim and all(
        np.all(g == np.diag(np.diagonal(g))) for g in probes
    )
    state_dependent = any(
        not np.array_equal(probes[3 * i], probes[3 * i + k])
        for i in range(3)
        for k in (1, 2)
    )
    return diagonal, state_dependent


def _diag_derivative(diffusion, t, x):
    """d Gamma_ii / d x_i by central differences, batched over paths."""
    out = np.empty_like(x)
    for i in range(x.shape[-1]):
        h = 1e-6 * (1.0 + np.abs(x[..., i]))
        xp = x.copy()
        xp[..., i] += h
        xm = x.copy()
        xm[..., i] -= h
        gp = np.asarray(diffusion(t, xp), dtype=float)
        gm = np.asarray(diffusion(t, xm), dtype=float)
        out[..., i] = (gp[..., i, i] - gm[..., i, i]) / (2.0 * h)
    return out


def _run_chunk(
    model: PeriodicModel,
    cfg: SimConfig,
    start: int,
    size: int,
    mean0: np.ndarray,
    root0: np.ndarray,
    log_space: bool,
    ks_times: tuple[int, ...],
    correction: bool,
):
    """Integrate paths [start, start+size) and return their partial sums."""
    n, nw = model.dim, model.noise_dim
    steps = cfg.steps_per_unit
    dt, horizon = cfg.dt, cfg.horizon
    sqrt_dt = math.sqrt(dt)
    sqrt_eps = math.sqrt(model.epsilon)
    rngs = [
        np.random.Generator(np.random.PCG64(splitmix64(cfg.seed, start + k)))
        for k in range(size)
    ]

    counts = np.zeros(horizon + 1, dtype=np.int64)
    sum_x = np.zeros((horizon + 1, n))
    sum_xx = np.zeros((horizon + 1, n, n))
    ks_store = {j: np.full((size, n), np.nan) for j in ks_times}

    draws = np.stack([rng.standard_normal(n) for rng in rngs])
    linear = mean0 + draws @ root0.T
    x = np.exp(linear) if log_space else linear
    alive = np.isfinite(x).all(axis=1)
    if log_space:
        alive &= (x > 0.0).all(axis=1)
    x[~alive] = np.nan

    def record(j):
        vals = np.log(x[alive]) if log_space else x[alive]
        counts[j] = vals.shape[0]
        sum_x[j] = vals.sum(axis=0)
        sum_xx[j] = vals.T @ vals
        if j in ks_store:
            ks_store[j][alive] = vals

    record(0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for block in range(horizon):
            noise = np.stack([rng.standard_normal((steps, nw)) for rng in rngs])
            for k in range(steps):
                t = block + k * dt
                f = np.asarray(model.drift(t, x), dtype=float)
                g = np.asarray(model.diffusion(t, x), dtype=float)
                dw = sqrt_dt * noise[:, k, :]
                move = f * dt + sqrt_eps * np.einsum("...ij,...j->...i", g, dw)
                if correction:
                    diag = np.diagonal(g, axis1=-2, axis2=-1)
                    deriv = _diag_derivative(model.diffusion, t, x)
                    move = move + 0.5 * model.epsilon * diag * deriv * (dw * dw - dt)
                x = x + move
            good = np.isfinite(x).all(axis=1)
            if log_space:
                good &= (x > 0.0).all(axis=1)
            alive &= good
            x[~alive] = np.nan
            record(block + 1)
    return counts, sum_x, sum_xx, size - int(alive.sum()), ks_store


def _worker_count() -> int:
    raw = os.environ.get("SPSD_THREADS", "").strip()
    if raw:
        count = int(raw)
        if count < 1:
            raise UsageError(f"SPSD_THREADS must be a positive integer, got {raw!r}")
        return count
    return min(4, os.cpu_count() or 1)


def _default_ks_times(period: float, horizon: int) -> tuple[int, ...]:
    raw = (round(period / 2.0), round(period), round(2.0 * period), horizon)
    return tuple(sorted({min(max(int(j), 1), horizon) for j in raw}))


def simulate_statistics(
    model: PeriodicModel, approx: SpsdApproximation, cfg: SimConfig
) -> SimulationReport:
    """Simulate `model` and compare its statistics with an approximation.

    Initial states are drawn from the approximation's time-zero law (the
    normal law for the plain family; its exponential for the log-normal
    family, whose statistics are then taken of ln x). Paths that leave the
    finite (or positive, in log space) region are frozen and counted; more
    than 0.1% of them aborts the run.
    """
    if model.dim != approx.model.dim or model.noise_dim != approx.model.noise_dim:
        raise UsageError(
            "model dimensions do not match the approximation's underlying system"
        )
    if approx.certificate.verdict == "indeterminate":
        raise AssumptionViolationError(
            "the covariance certificate is indeterminate; refusing to sample "
            "initial conditions from an unverified covariance"
        )
    log_space = approx.family == "log_normal"
    mean0 = approx.mean_at(0.0)
    cov0 = approx.covariance_at(0.0)
    vals, vecs = np.linalg.eigh(0.5 * (cov0 + cov0.T))
    root0 = vecs * np.sqrt(np.clip(vals, 0.0, None))

    ks_times = cfg.ks_times
    if ks_times is None:
        ks_times = _default_ks_times(model.period, cfg.horizon)

    anchor = np.exp(mean0) if log_space else mean0
    diagonal, state_dependent = _noise_structure(model, anchor)
    correction = False
    if cfg.scheme == "milstein":
        if not diagonal:
            warnings.warn(
                "noise loading is not diagonal; running the Euler-Maruyama "
                "step instead of the Milstein correction",
                stacklevel=2,
            )
        else:
            correction = state_dependent

    spans = [
        (start, min(CHUNK_SIZE, cfg.num - start))
        for start in range(0, cfg.num, CHUNK_SIZE)
    ]

    def run(span):
        return _run_chunk(
            model, cfg, span[0], span[1], mean0, root0, log_space, ks_times, correction
        )

    workers = _worker_count()
    if workers == 1 or len(spans) == 1:
        partials = [run(span) for span in spans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run, spans))

    horizon, n = cfg.horizon, model.dim
    counts = np.zeros(horizon + 1, dtype=np.int64)
    sum_x = np.zeros((horizon + 1, n))
    sum_xx = np.zeros((horizon + 1, n, n))
    blown = 0
    for part in partials:
        counts += part[0]
        sum_x += part[1]
        sum_xx += part[2]
        blown += part[3]
    if blown > 0.001 * cfg.num:
        raise SimulationError(
            f"{blown} of {cfg.num} paths blew up; the model violates the "
            "dissipativity the approximation relies on"
        )

    means = sum_x / counts[:, None]
    centered = sum_xx - counts[:, None, None] * np.einsum("ji,jk->jik", means, means)
    covariances = centered / (counts[:, None, None] - 1)
    covariances = 0.5 * (covariances + np.transpose(covariances, (0, 2, 1)))

    ref_means = np.stack([approx.mean_at(float(j)) for j in range(horizon + 1)])
    ref_covariances = np.stack(
        [approx.covariance_at(float(j)) for j in range(horizon + 1)]
    )
    errors = relative_errors(means, covariances, ref_means, ref_covariances)

    ks_results = []
    for j in ks_times:
        samples = np.concatenate([part[4][j] for part in partials], axis=0)
        for i in range(n):
            column = samples[:, i]
            column = column[np.isfinite(column)]
            variance = ref_covariances[j][i, i]
            if column.size >= 8 and variance > 0.0:
                outcome = ks_marginal_test(
                    column, ref_means[j][i], variance, cfg.ks_alpha
                )
                ks_results.append(
                    KsResult(
                        j, i, outcome.statistic, outcome.threshold, outcome.reject
                    )
                )

    return SimulationReport(
        statistics_space="log" if log_space else "state",
        times=np.arange(horizon + 1),
        sample_counts=counts,
        means=means,
        covariances=covariances,
        ref_means=ref_means,
        ref_covariances=ref_covariances,
        errors=errors,
        ks=tuple(ks_results),
        num=cfg.num,
        seed=cfg.seed,
        dt=cfg.dt,
        horizon=cfg.horizon,
        scheme=cfg.scheme,
        blown_paths=blown,
    )

"""Quenched correlation estimation over pullback attractor samples, and rate fits.

Sums are accumulated as fixed-point integers (quantum 2^-40) so an estimate
depends only on the set of samples, never on their order, the chunking, or the
number of workers. With ψ ≡ 1 the estimator cancels to exactly 0.
"""
import logging
from concurrent.futures import Executor
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from .environment import Environment, ParameterLaw
from .errors import ArgumentError, InsufficientSignalError
from .hyperbolic_times import expansion_times
from .inducing import cell_diameter
from .orbits import evolve_ensemble
from .parallel import chunk_ranges, run_tasks
from .registry import MapFamily, resolve_family

logger = logging.getLogger(__name__)

BATCHES = 32
SIGNAL_SIGMAS = 2.0
MIN_SIGNAL_LAGS = 10
CHUNK = 2**16
MAX_CHUNK = 2**20
THETA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))

_QUANTUM = float(2**40)


class ObservableKind(str, Enum):
    SMOOTH_COS = "smooth_cos"
    HOLDER_CUSP = "holder_cusp"
    FIBER_Y = "fiber_y"
    INDICATOR_HALFCIRCLE = "indicator_halfcircle"
    CONSTANT = "constant"


class Observable(BaseModel):
    """Bounded observable on states; every built-in kind satisfies |φ| ≤ 1."""
    model_config = ConfigDict(frozen=True)

    kind: ObservableKind
    eta: float = Field(default=1.0, gt=0.0, le=1.0)

    @classmethod
    def parse(cls, text: str) -> "Observable":
        """`smooth_cos`, `holder_cusp:0.3`, `fiber_y`, `indicator_halfcircle`, `const`."""
        name, _, arg = text.partition(":")
        name = name.strip().lower()
        if name in ("const", "constant", "one"):
            return cls(kind=ObservableKind.CONSTANT)
        if name in ("cos", "smooth_cos"):
            return cls(kind=ObservableKind.SMOOTH_COS)
        if name in ("cusp", "holder_cusp"):
            return cls(kind=ObservableKind.HOLDER_CUSP, eta=float(arg) if arg else 1.0)
        try:
            return cls(kind=ObservableKind(name))
        except ValueError as e:
            raise ValueError(f"Unknown observable '{text}'") from e

    def describe(self) -> str:
        if self.kind is ObservableKind.HOLDER_CUSP:
            return f"holder_cusp:{self.eta}"
        return self.kind.value

    def __call__(self, states: np.ndarray) -> np.ndarray:
        x = states[:, 0]
        if self.kind is ObservableKind.SMOOTH_COS:
            return np.cos(2.0 * np.pi * x)
        if self.kind is ObservableKind.HOLDER_CUSP:
            return np.power(np.abs(x - 0.5), self.eta)
        if self.kind is ObservableKind.FIBER_Y:
            if states.shape[1] < 2:
                raise ArgumentError("fiber_y needs states with at least two coordinates")
            return states[:, 1].copy()
        if self.kind is ObservableKind.INDICATOR_HALFCIRCLE:
            return (x < 0.5).astype(np.float64)
        return np.ones_like(x)


class CorrelationMeta(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int
    family: str
    burnin: int
    samples: int
    phi: str
    psi: str


class CorrelationSeries(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    meta: Optional[CorrelationMeta] = None


class FitModel(str, Enum):
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"
    STRETCHED = "stretched"


class RateFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: FitModel
    exponent: float
    prefactor: float
    r_squared: float = Field(ge=0.0, le=1.0)
    window: tuple[int, int]
    theta: Optional[float] = None


class CorrelationSums(BaseModel):
    """Exact per-batch integer sums, mergeable in any order."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    phi_psi: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    count: np.ndarray

    @classmethod
    def empty(cls, lags: int, batches: int) -> "CorrelationSums":
        return cls(
            phi_psi=np.zeros((lags, batches), dtype=object),
            phi=np.zeros((lags, batches), dtype=object),
            psi=np.zeros(batches, dtype=object),
            count=np.zeros(batches, dtype=object),
        )

    def merge(self, other: "CorrelationSums") -> "CorrelationSums":
        return CorrelationSums(
            phi_psi=self.phi_psi + other.phi_psi,
            phi=self.phi + other.phi,
            psi=self.psi + other.psi,
            count=self.count + other.count,
        )


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.rint(values * _QUANTUM).astype(np.int64)


def _batch_layout(index: np.ndarray, total: int, batches: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch ids of sorted sample indices and the start offset of each run."""
    ids = (index * batches) // total
    starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
    return ids[starts], starts


class _Accumulator:
    def __init__(self, index: np.ndarray, total: int, batches: int, lags: int, psi_values: np.ndarray):
        self.ids, self.starts = _batch_layout(index, total, batches)
        self.sums = CorrelationSums.empty(lags, batches)
        self.psi_values = psi_values
        self.sums.psi[self.ids] += np.add.reduceat(_quantize(psi_values), self.starts).astype(object)
        self.sums.count[self.ids] += np.diff(np.r_[self.starts, len(index)]).astype(object)

    def add_lag(self, lag: int, phi_values: np.ndarray) -> None:
        product = np.add.reduceat(_quantize(phi_values * self.psi_values), self.starts)
        single = np.add.reduceat(_quantize(phi_values), self.starts)
        self.sums.phi_psi[lag, self.ids] += product.astype(object)
        self.sums.phi[lag, self.ids] += single.astype(object)


def _covariance(phi_psi, phi, psi, count) -> float:
    scale = count * 2**40
    if scale == 0:
        return 0.0
    return phi_psi / scale - (phi / scale) * (psi / scale)


def finalize_sums(sums: CorrelationSums) -> tuple[np.ndarray, np.ndarray]:
    """Ĉ per lag from the pooled sums, and the batch-means standard error."""
    lags, batches = sums.phi.shape
    total_count = int(sums.count.sum())
    total_psi = int(sums.psi.sum())
    values = np.array(
        [_covariance(int(sums.phi_psi[n].sum()), int(sums.phi[n].sum()), total_psi, total_count) for n in range(lags)]
    )
    live = [b for b in range(batches) if sums.count[b] > 0]
    if len(live) < 2:
        return values, np.zeros(lags)
    per_batch = np.array(
        [
            [_covariance(int(sums.phi_psi[n, b]), int(sums.phi[n, b]), int(sums.psi[b]), int(sums.count[b])) for b in live]
            for n in range(lags)
        ]
    )
    stderr = per_batch.std(axis=1, ddof=1) / np.sqrt(len(live))
    return values, stderr


def estimate_correlations(phi_values: np.ndarray, psi_values: np.ndarray, batches: int = BATCHES) -> CorrelationSeries:
    """Aggregate φ(f^n x_i) (shape (lags, N)) and ψ(x_i) (shape (N,)) into Ĉ_n."""
    phi_values = np.atleast_2d(np.asarray(phi_values, dtype=np.float64))
    psi_values = np.asarray(psi_values, dtype=np.float64)
    total = psi_values.shape[0]
    batches = max(1, min(batches, total))
    sums = CorrelationSums.empty(phi_values.shape[0], batches)
    for start, stop in chunk_ranges(total, MAX_CHUNK):
        acc = _Accumulator(np.arange(start, stop), total, batches, phi_values.shape[0], psi_values[start:stop])
        for lag in range(phi_values.shape[0]):
            acc.add_lag(lag, phi_values[lag, start:stop])
        sums = sums.merge(acc.sums)
    values, stderr = finalize_sums(sums)
    return CorrelationSeries(lags=np.arange(phi_values.shape[0]), values=values, stderr=stderr)


def attractor_sample(
    env: Environment,
    family: MapFamily | str,
    m: int,
    N: int,
    start_index: int = 0,
) -> np.ndarray:
    """Reference-measure points pushed through the pullback composition f^m_{σ^{-m}ω}."""
    if m < 1 or N < 1:
        raise ArgumentError(f"burn-in and sample size must be positive, got m={m}, N={N}")
    family = resolve_family(family)
    index = np.arange(start_index, start_index + N, dtype=np.int64)
    states = family.reference_sample(env, index)
    return evolve_ensemble(env, family, states, -m, m)


def _correlation_chunk(
    env: Environment,
    family: str,
    phi: Observable,
    psi: Observable,
    n_max: int,
    m: int,
    start: int,
    stop: int,
    total: int,
    batches: int,
) -> CorrelationSums:
    states = attractor_sample(env, family, m, stop - start, start_index=start)
    acc = _Accumulator(np.arange(start, stop), total, batches, n_max + 1, psi(states))
    evolve_ensemble(env, family, states, 0, n_max, visit=lambda t, s: acc.add_lag(t, phi(s)))
    logger.debug(f"Correlation chunk [{start}, {stop}) done")
    return acc.sums


def default_burnin(n_max: int) -> int:
    return max(100, 2 * n_max)


def quenched_correlation(
    env: Environment,
    family: MapFamily | str,
    phi: Observable,
    psi: Observable,
    n_max: int,
    m: Optional[int] = None,
    N: int = 10**5,
    executor: Optional[Executor] = None,
    chunk: int = CHUNK,
    batches: int = BATCHES,
) -> CorrelationSeries:
    """Ĉ_n = mean[φ(f^n_ω x)ψ(x)] − mean[φ(f^n_ω x)]·mean[ψ(x)] for n = 0..n_max."""
    if n_max < 1:
        raise ArgumentError(f"n_max must be at least 1, got {n_max}")
    family = resolve_family(family)
    family.check_law(env.law)
    m = default_burnin(n_max) if m is None else m
    batches = max(1, min(batches, N))
    tasks = [
        (env, family.name, phi, psi, n_max, m, start, stop, N, batches)
        for start, stop in chunk_ranges(N, min(chunk, MAX_CHUNK))
    ]
    logger.info(f"Estimating correlations: {family.name}, N={N}, m={m}, n_max={n_max}, chunks={len(tasks)}")
    sums = CorrelationSums.empty(n_max + 1, batches)
    for part in run_tasks(_correlation_chunk, tasks, executor):
        sums = sums.merge(part)
    values, stderr = finalize_sums(sums)
    meta = CorrelationMeta(
        seed=env.seed, family=family.name, burnin=m, samples=N, phi=phi.describe(), psi=psi.describe()
    )
    return CorrelationSeries(lags=np.arange(n_max + 1), values=values, stderr=stderr, meta=meta)


def fit_curve(
    x: np.ndarray,
    y: np.ndarray,
    model: FitModel,
    thetas: Sequence[float] = THETA_GRID,
) -> RateFit:
    """Least squares of log y against log x, x, or x^θ (θ profiled over a grid)."""
    x = np.asarray(x, dtype=np.float64)
    logs = np.log(np.abs(np.asarray(y, dtype=np.float64)))
    model = FitModel(model)
    window = (int(x.min()), int(x.max()))
    if model is FitModel.POLYNOMIAL:
        fit = stats.linregress(np.log(x), logs)
        return RateFit(model=model, exponent=fit.slope, prefactor=np.exp(fit.intercept),
                       r_squared=min(1.0, fit.rvalue**2), window=window)
    if model is FitModel.EXPONENTIAL:
        fit = stats.linregress(x, logs)
        return RateFit(model=model, exponent=fit.slope, prefactor=np.exp(fit.intercept),
                       r_squared=min(1.0, fit.rvalue**2), window=window, theta=1.0)
    best = None
    for theta in thetas:
        fit = stats.linregress(x**theta, logs)
        if best is None or fit.rvalue**2 > best[1].rvalue**2:
            best = (theta, fit)
    theta, fit = best
    return RateFit(model=model, exponent=fit.slope, prefactor=np.exp(fit.intercept),
                   r_squared=min(1.0, fit.rvalue**2), window=window, theta=theta)


def signal_horizon(series: CorrelationSeries, sigmas: float = SIGNAL_SIGMAS) -> int:
    """Largest lag L ≥ 0 such that every lag 1..L has |Ĉ_n| > sigmas·stderr."""
    significant = (np.abs(series.values) > sigmas * series.stderr) & (series.lags >= 1)
    horizon = 0
    for lag, ok in zip(series.lags.tolist(), significant.tolist()):
        if lag < 1:
            continue
        if not ok:
            break
        horizon = lag
    return horizon


def fit_rate(
    series: CorrelationSeries,
    model: FitModel | str = FitModel.POLYNOMIAL,
    window: Optional[tuple[int, int]] = None,
) -> RateFit:
    """Fit a decay model on the significant lags inside the window.

    Raises InsufficientSignalError when fewer than ten lags stand above the
    noise floor; that outcome is itself evidence of fast decay.
    """
    horizon = signal_horizon(series)
    lo, hi = window or (1, int(series.lags.max()))
    use = (series.lags >= max(lo, 1)) & (series.lags <= min(hi, horizon))
    if use.sum() < MIN_SIGNAL_LAGS:
        raise InsufficientSignalError(
            f"only {int(use.sum())} significant lags in [{lo}, {hi}] (signal horizon {horizon})",
            signal_horizon=horizon,
        )
    return fit_curve(series.lags[use], series.values[use], FitModel(model))


def theory_exponent(alpha0: float, eta: float) -> float:
    """−min(1/α₀ − 1, η/α₀): the regularity-limited and tail-limited regimes."""
    return -min(1.0 / alpha0 - 1.0, eta / alpha0)


def bound_ratio(
    series: CorrelationSeries,
    env: Environment,
    alpha0: float,
    eta: float,
    points: int = 12,
) -> float:
    """max_n |Ĉ_n| / max{n^{−(1/α₀−1)+0.3}, δ_{n/4}^η} over a geometric grid of lags."""
    top = int(series.lags.max())
    if top < 4:
        raise ArgumentError("bound_ratio needs lags up to at least 4")
    grid = np.unique(np.round(np.geomspace(4, top, points)).astype(np.int64))
    ratio = 0.0
    for n in grid.tolist():
        envelope = max(n ** (-(1.0 / alpha0 - 1.0) + 0.3), cell_diameter(env, n // 4) ** eta)
        ratio = max(ratio, abs(float(series.values[n])) / envelope)
    return ratio


def prefactor_distribution(
    seeds: Sequence[int],
    law: ParameterLaw,
    family: MapFamily | str,
    phi: Observable,
    psi: Observable,
    n_max: int,
    N: int,
    model: FitModel | str = FitModel.POLYNOMIAL,
    m: Optional[int] = None,
    executor: Optional[Executor] = None,
) -> list[float]:
    """Fitted prefactors C_ω across seeds; seeds without enough signal are skipped."""
    prefactors = []
    for seed in seeds:
        series = quenched_correlation(Environment(seed=seed, law=law), family, phi, psi, n_max, m, N, executor)
        try:
            prefactors.append(fit_rate(series, model).prefactor)
        except InsufficientSignalError as e:
            logger.warning(f"Seed {seed}: {e}")
    return prefactors


def expansion_tail(
    env: Environment,
    family: MapFamily | str,
    start_grid: np.ndarray,
    horizon: int,
    c: float,
) -> list[tuple[int, float]]:
    """Fraction of grid starts with expansion time > n, for n = 1..horizon."""
    family = resolve_family(family)
    states = np.asarray(start_grid, dtype=np.float64).reshape(-1, family.dim)
    params = env.param_window(0, horizon, family.components)
    family.check_params(params)
    traces = np.empty((states.shape[0], horizon))
    for t, row in enumerate(params):
        traces[:, t] = family.log_inverse_expansion(row, states)
        states = family.step(row, states)
    times = expansion_times(traces, c)
    beyond = np.where(times < 0, horizon + 1, times)
    n = np.arange(1, horizon + 1)
    fractions = (beyond[None, :] > n[:, None]).mean(axis=1)
    return list(zip(n.tolist(), fractions.tolist()))

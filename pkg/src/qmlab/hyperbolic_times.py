"""Pliss-type hyperbolic times and the expansion-time function on cocycle traces.

n ≥ 1 is an α-hyperbolic time when every tail sum of the trace ending at n
satisfies Σ_{j=n−k+1}^{n} trace_j ≤ k·log α. With A_j = S_j − j·log α this is
A_n ≤ min(A_0, ..., A_{n−1}), which a running minimum checks in one pass.
"""
import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .environment import Environment
from .errors import ArgumentError
from .orbits import OrbitRequest, cocycle_trace
from .registry import MapFamily

logger = logging.getLogger(__name__)


class HyperbolicTimeReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    times: tuple[int, ...]
    horizon: int
    density_lower_bound: float
    expansion_time: Optional[int] = None
    pliss_bound: Optional[float] = None
    nue_constant: float = 0.0


def _check_log_alpha(log_alpha: float) -> None:
    if not log_alpha < 0:
        raise ArgumentError(f"log_alpha must be negative, got {log_alpha}")


def pliss_mask(traces: np.ndarray, log_alpha: float) -> np.ndarray:
    """Boolean (B, L) mask; entry [b, n−1] marks n as hyperbolic for row b."""
    _check_log_alpha(log_alpha)
    traces = np.atleast_2d(np.asarray(traces, dtype=np.float64))
    batch, length = traces.shape
    if length == 0:
        return np.zeros((batch, 0), dtype=bool)
    adjusted = np.zeros((batch, length + 1))
    adjusted[:, 1:] = np.cumsum(traces, axis=1) - log_alpha * np.arange(1, length + 1)
    running_min = np.minimum.accumulate(adjusted[:, :-1], axis=1)
    return adjusted[:, 1:] <= running_min


def pliss_times(trace: Sequence[float], log_alpha: float) -> list[int]:
    mask = pliss_mask(np.asarray(trace, dtype=np.float64)[None, :], log_alpha)[0]
    return (np.flatnonzero(mask) + 1).tolist()


def expansion_times(traces: np.ndarray, c: float) -> np.ndarray:
    """Vectorized expansion time per row; −1 where no N fits in the horizon."""
    if not c > 0:
        raise ArgumentError(f"c must be positive, got {c}")
    traces = np.atleast_2d(np.asarray(traces, dtype=np.float64))
    batch, length = traces.shape
    if length == 0:
        return np.full(batch, -1, dtype=np.int64)
    n = np.arange(1, length + 1)
    failing = ~(np.cumsum(traces, axis=1) < -c * n)
    last_fail = np.where(failing.any(axis=1), length - np.argmax(failing[:, ::-1], axis=1), 0)
    return np.where(last_fail == length, -1, last_fail + 1).astype(np.int64)


def expansion_time(trace: Sequence[float], c: float) -> Optional[int]:
    """Smallest N with (1/n) Σ_{j≤n} trace_j < −c for every N ≤ n ≤ len(trace)."""
    value = int(expansion_times(np.asarray(trace, dtype=np.float64)[None, :], c)[0])
    return None if value < 0 else value


def nue_constant(trace: Sequence[float]) -> float:
    trace = np.asarray(trace, dtype=np.float64)
    return float(-trace.mean()) if trace.size else 0.0


def pliss_density_bound(trace: Sequence[float], log_alpha: float) -> Optional[float]:
    """Classical Pliss lower bound (c − |log α|)/(H − |log α|) on the density.

    c is the negated Birkhoff average and H the largest single-step
    contraction −min(trace). Absent when c ≤ |log α|.
    """
    _check_log_alpha(log_alpha)
    trace = np.asarray(trace, dtype=np.float64)
    if trace.size == 0:
        return None
    c = nue_constant(trace)
    gap = abs(log_alpha)
    if c <= gap:
        return None
    top = -float(trace.min())
    if top <= gap:
        return 1.0
    return min(1.0, (c - gap) / (top - gap))


def hyperbolic_time_report(trace: Sequence[float], log_alpha: float, c: float) -> HyperbolicTimeReport:
    trace = np.asarray(trace, dtype=np.float64)
    times = pliss_times(trace, log_alpha)
    horizon = len(trace)
    return HyperbolicTimeReport(
        times=tuple(times),
        horizon=horizon,
        density_lower_bound=len(times) / horizon if horizon else 0.0,
        expansion_time=expansion_time(trace, c),
        pliss_bound=pliss_density_bound(trace, log_alpha),
        nue_constant=nue_constant(trace),
    )


def density_estimate(
    env: Environment,
    family: MapFamily | str,
    start: Sequence[float],
    horizon: int,
    log_alpha: float,
) -> float:
    """Fraction of hyperbolic times among 1..horizon along the forward orbit."""
    if horizon < 1:
        raise ArgumentError(f"horizon must be at least 1, got {horizon}")
    name = family if isinstance(family, str) else family.name
    trace = cocycle_trace(OrbitRequest(env=env, family=name, start=tuple(start), length=horizon))
    density = len(pliss_times(trace.log_inverse_expansion, log_alpha)) / horizon
    logger.debug(f"Hyperbolic-time density {density:.4f} over {horizon} steps")
    return density

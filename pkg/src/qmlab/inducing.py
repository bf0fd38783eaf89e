"""Random tower base for the intermittent circle family.

The preimage sequence x_n(ω) starts at x_1 = 1/2 and satisfies
x_n(ω) = (T^-_{ω_0})^{-1} x_{n−1}(σω). The symmetry T(1−u) = 1 − T(u) gives
x_n^+ = 1 − x_n^-, so only the minus side is stored; plus-side gaps 1 − x_n^+
are read from it without cancellation.

Cell n ≥ 1 is I_n^- = (x_{n+1}^-, x_n^-) or I_n^+ = (x_n^+, x_{n+1}^+), with
return time n+1: T^n maps it onto a half circle and T^{n+1} onto the circle.
Leb{R > m} = x_m^- + (1 − x_m^+) = 2·x_m^-.
"""
import heapq
import itertools
import logging
import warnings
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats

from .environment import Environment, ParameterLaw, Stream
from .errors import ArgumentError, DepthTruncationWarning, RangeError
from .maps import circle_derivative, circle_values, left_branch, left_preimage, right_branch
from .registry import IntermittentCircle

logger = logging.getLogger(__name__)

DEFAULT_MAX_N = 5000
DISTORTION_DEPTH = 32
SEPARATION_LIMIT = 40

_CIRCLE = IntermittentCircle()


class Side(str, Enum):
    MINUS = "minus"
    PLUS = "plus"


class Cell(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    side: Side
    lo: float
    hi: float
    return_time: int

    @property
    def length(self) -> float:
        return self.hi - self.lo


class ReturnPartition(BaseModel):
    """Preimage endpoints x_1, ..., x_{max_n+1} of one environment."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    env: Environment
    max_n: int
    x_minus: np.ndarray

    @property
    def x_plus(self) -> np.ndarray:
        return 1.0 - self.x_minus

    def x(self, m: int) -> float:
        """x_m^- for 1 ≤ m ≤ max_n + 1."""
        if not 1 <= m <= self.max_n + 1:
            raise RangeError(f"index {m} outside 1..{self.max_n + 1}")
        return float(self.x_minus[m - 1])

    def cell(self, n: int, side: Side = Side.MINUS) -> Cell:
        if not 1 <= n <= self.max_n:
            raise RangeError(f"cell index {n} outside 1..{self.max_n}")
        outer, inner = self.x_minus[n - 1], self.x_minus[n]
        if Side(side) is Side.MINUS:
            lo, hi = inner, outer
        else:
            lo, hi = 1.0 - outer, 1.0 - inner
        return Cell(n=n, side=side, lo=float(lo), hi=float(hi), return_time=n + 1)

    def cells(self) -> list[Cell]:
        return [self.cell(n, side) for n in range(1, self.max_n + 1) for side in Side]

    def cell_lengths(self) -> np.ndarray:
        """Minus-side lengths of cells 1..max_n (the plus side mirrors them)."""
        return self.x_minus[:-1] - self.x_minus[1:]


@lru_cache(maxsize=512)
def build_partition(env: Environment, max_n: int = DEFAULT_MAX_N) -> ReturnPartition:
    """Preimage sequence x_1..x_{max_n+1} using parameters ω_0, ..., ω_{max_n−1}.

    Random laws evaluate the triangular recursion one composition layer at a
    time over all depths at once; deterministic laws use the O(max_n) chain.
    """
    if max_n < 1:
        raise RangeError(f"max_n must be at least 1, got {max_n}")
    _CIRCLE.check_law(env.law)
    x = np.empty(max_n + 1)
    x[0] = 0.5
    if env.law.is_deterministic:
        alpha = env.param_at(0)
        for i in range(1, max_n + 1):
            x[i] = left_preimage(alpha, x[i - 1])
    else:
        params = env.param_window(0, max_n)[:, 0]
        v = np.full(max_n, 0.5)
        for r in range(max_n):
            v[r:] = left_preimage(params[: max_n - r], v[r:])
        x[1:] = v
    x.setflags(write=False)
    logger.debug(f"Built partition to depth {max_n} for seed {env.seed} offset {env.offset}")
    return ReturnPartition(env=env, max_n=max_n, x_minus=x)


def tail_curve(p: ReturnPartition) -> np.ndarray:
    """Leb{R > m} for m = 1, ..., max_n + 1."""
    return 2.0 * p.x_minus


def tail_measure(p: ReturnPartition, m: int) -> float:
    if not 1 <= m <= p.max_n + 1:
        raise RangeError(f"tail index m={m} outside 1..{p.max_n + 1}")
    return 2.0 * float(p.x_minus[m - 1])


class TailFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]


def tail_slope(p: ReturnPartition, lo: int, hi: int) -> TailFit:
    """Log-log regression of Leb{R > m} over lo ≤ m ≤ hi."""
    hi = min(hi, p.max_n + 1)
    if not 1 <= lo < hi:
        raise RangeError(f"tail window [{lo}, {hi}] is empty")
    m = np.arange(lo, hi + 1)
    fit = stats.linregress(np.log(m), np.log(tail_curve(p)[m - 1]))
    return TailFit(slope=fit.slope, intercept=fit.intercept, r_squared=fit.rvalue**2, window=(lo, hi))


def tail_threshold(p: ReturnPartition, C: float, alpha0: float) -> Optional[int]:
    """Smallest m after which Leb{R > m'} ≤ C m'^{−1/α₀} log m' for every tracked m' ≥ m."""
    m = np.arange(2, p.max_n + 2)
    holds = tail_curve(p)[1:] <= C * m ** (-1.0 / alpha0) * np.log(m)
    if not holds[-1]:
        return None
    failing = np.flatnonzero(~holds)
    return int(m[failing[-1] + 1]) if failing.size else 2


def annealed_tail(law: ParameterLaw, seeds, max_n: int = DEFAULT_MAX_N) -> np.ndarray:
    """Seed average of Leb{R_ω > m}, a Monte Carlo estimate of ∫Leb{R > m} dP."""
    curves = [tail_curve(build_partition(Environment(seed=s, law=law), max_n)) for s in seeds]
    return np.mean(curves, axis=0)


def _mirror_inverse(alpha, y):
    """Right-branch inverse written through the symmetry T(1−u) = 1 − T(u)."""
    return 1.0 - left_preimage(alpha, 1.0 - np.asarray(y, dtype=np.float64))


def _chain(p: ReturnPartition, m: int) -> np.ndarray:
    """z_j = x_{m−j}(σ^jω) for j = 0..m−1, recomputed from z_{m−1} = 1/2."""
    params = p.env.param_window(0, max(m - 1, 0))[:, 0]
    z = np.empty(m)
    z[m - 1] = 0.5
    for j in range(m - 2, -1, -1):
        z[j] = left_preimage(params[j], z[j + 1])
    return z


def markov_check(p: ReturnPartition, n: int) -> float:
    """Largest one-step defect along the endpoint chains of I_n^±.

    Final images are compared with the unreduced branch formulas.
    """
    if not 1 <= n <= p.max_n:
        raise RangeError(f"n={n} outside 1..{p.max_n}")
    params = p.env.param_window(0, n + 1)[:, 0]
    defect = 0.0
    for m in (n, n + 1):
        z = _chain(p, m)
        defect = max(defect, abs(z[0] - p.x(m)))
        a = params[: m - 1]
        defect = max(defect, float(np.max(np.abs(left_branch(a, z[:-1]) - z[1:]), initial=0.0)))
        plus = 1.0 - z
        defect = max(defect, float(np.max(np.abs(right_branch(a, plus[:-1]) - plus[1:]), initial=0.0)))
    last = params[n - 1]
    defect = max(defect, abs(float(left_branch(last, 0.5)) - 1.0), abs(float(right_branch(last, 0.5))))
    return defect


def locate(p: ReturnPartition, x) -> tuple[np.ndarray, np.ndarray]:
    """Cell index (0 when unresolved beyond max_n) and plus-side flag for each point."""
    x = np.asarray(x, dtype=np.float64)
    plus = x > 0.5
    u = np.where(plus, 1.0 - x, x)
    ascending = p.x_minus[::-1]
    below = np.searchsorted(ascending, u, side="left")
    n = p.max_n + 1 - below
    n = np.where((n > p.max_n) | (u <= 0.0), 0, n)
    return n, plus


def induced_step(p: ReturnPartition, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply T^{R} on tracked cells.

    Returns the images, log (T^R)′ and R per point; unresolved points get NaN
    and R = 0.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n, _ = locate(p, x)
    returns = np.where(n > 0, n + 1, 0)
    steps = int(returns.max(initial=0))
    params = p.env.param_window(0, steps)[:, 0]
    images = x.copy()
    log_derivative = np.zeros_like(x)
    for j in range(steps):
        active = returns > j
        log_derivative[active] += np.log(circle_derivative(params[j], images[active]))
        images[active] = circle_values(params[j], images[active])
    unresolved = returns == 0
    images[unresolved] = np.nan
    log_derivative[unresolved] = np.nan
    return images, log_derivative, returns


def separation_time(p: ReturnPartition, x: float, y: float, limit: int = SEPARATION_LIMIT) -> int:
    """Induced iterates before x and y fall in distinct (or unresolved) cells."""
    env, points, s = p.env, np.array([x, y], dtype=np.float64), 0
    part = p
    while s < limit:
        n, plus = locate(part, points)
        if n[0] == 0 or n[0] != n[1] or plus[0] != plus[1]:
            break
        points, _, returns = induced_step(part, points)
        env = env.shift(int(returns[0]))
        part = build_partition(env, p.max_n)
        s += 1
    return s


def log_distortion(p: ReturnPartition, x: float, y: float) -> float:
    """|log (T^R)′(x) − log (T^R)′(y)| for two points of one cell."""
    _, log_derivative, returns = induced_step(p, np.array([x, y]))
    if returns[0] == 0 or returns[0] != returns[1]:
        raise RangeError(f"points {x} and {y} do not share a tracked cell")
    return float(abs(log_derivative[0] - log_derivative[1]))


class DistortionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_hat: float
    beta_hat: float
    pairs: int
    separation_maxima: dict[int, float]


def distortion_report(p: ReturnPartition, samples: int, depth: int = DISTORTION_DEPTH) -> DistortionReport:
    """Fit log-distortion ≤ C β^s over sampled same-cell pairs."""
    if samples < 1:
        raise ArgumentError(f"samples must be at least 1, got {samples}")
    depth = min(depth, p.max_n)
    index = np.arange(samples)
    u = [p.env.uniforms(Stream.DISTORTION, index, c) for c in range(4)]
    n = 1 + np.minimum((u[0] * depth).astype(np.int64), depth - 1)
    outer, inner = p.x_minus[n - 1], p.x_minus[n]
    x = inner + u[2] * (outer - inner)
    y = x + (outer - x) * 10.0 ** (-10.0 * u[3])
    plus = u[1] < 0.5
    x, y = np.where(plus, 1.0 - x, x), np.where(plus, 1.0 - y, y)

    images, log_x, returns = induced_step(p, np.concatenate([x, y]))
    distortion = np.abs(log_x[:samples] - log_x[samples:])
    separation = np.empty(samples, dtype=np.int64)
    for i in range(samples):
        shifted = build_partition(p.env.shift(int(returns[i])), depth)
        separation[i] = separation_time(shifted, images[i], images[samples + i])

    maxima: dict[int, float] = {}
    for s, d in zip(separation.tolist(), distortion.tolist()):
        if d > 0:
            maxima[s] = max(maxima.get(s, 0.0), d)
    if len(maxima) >= 2:
        keys = np.array(sorted(maxima))
        fit = stats.linregress(keys, np.log([maxima[k] for k in keys]))
        beta = float(np.clip(np.exp(fit.slope), 1e-12, 1.0 - 1e-9))
    else:
        beta = 0.5
    c_hat = float(np.max(distortion / beta ** separation.astype(np.float64), initial=0.0))
    logger.info(f"Distortion fit over {samples} pairs: C={c_hat:.4g}, beta={beta:.4g}")
    return DistortionReport(c_hat=c_hat, beta_hat=beta, pairs=samples, separation_maxima=maxima)


def _cell_ops(params: np.ndarray, n: int, plus: bool) -> tuple[tuple[float, bool], ...]:
    """Inverse-branch sequence (oldest first) carrying the circle back onto cell n.

    n = 0 stands for the half circle one step before a full return. Each
    entry is (parameter, uses right branch).
    """
    return tuple((float(params[j]), plus) for j in range(n)) + ((float(params[n]), not plus),)


def _pull_back(ops, y: np.ndarray, mirrored: bool = False) -> np.ndarray:
    for alpha, right in reversed(ops):
        y = _mirror_inverse(alpha, y) if right != mirrored else left_preimage(alpha, y)
    return y


def cell_diameter(env: Environment, k: int, max_n: Optional[int] = None) -> float:
    """δ_{σ^kω,k}: largest projected image of a 2k-cylinder after k tower steps.

    Best-first search over itineraries; refinements only shrink, so a piece no
    larger than the current best is pruned. 10^{−k} (fiber) is a floor.
    """
    if k < 1:
        raise RangeError(f"k must be at least 1, got {k}")
    max_n = k + 2 if max_n is None else max_n
    base = env.shift(k)
    best = 10.0 ** (-k)
    truncated = False
    counter = itertools.count()
    heap: list = [(-1.0, next(counter), 0, ())]
    while heap:
        key, _, t, ops = heapq.heappop(heap)
        if -key <= best:
            break
        remaining = k - t
        shifted = base.shift(t)
        part = build_partition(shifted, max_n)
        short = part.max_n < remaining
        truncated = truncated or short
        params = shifted.param_window(0, max(remaining, 1))[:, 0]
        endpoints = np.concatenate([[1.0], part.x_minus, [0.0]])
        lowest = 0 if t == 0 else 1
        for plus in (False, True):
            pulled = _pull_back(ops, endpoints, mirrored=plus)
            widths = np.abs(pulled[:-2] - pulled[1:-1])
            terminal = widths[max(remaining - 1, lowest):]
            if terminal.size:
                best = max(best, float(terminal.max()))
            if short:
                best = max(best, float(abs(pulled[-2] - pulled[-1])))
            for n in range(lowest, min(remaining - 1, part.max_n + 1)):
                if widths[n] > best:
                    child = ops + _cell_ops(params, n, plus)
                    heapq.heappush(heap, (-float(widths[n]), next(counter), t + n + 1, child))
    if truncated:
        message = f"cell_diameter(k={k}) used depth {max_n} < {k}; residual intervals bound the result"
        logger.warning(message)
        warnings.warn(message, DepthTruncationWarning, stacklevel=2)
    return best

"""Abstract random-tower coupling simulator.

Two tower orbits climb levels until a freshly drawn return time is exhausted.
Auxiliary stopping times alternate between the orbits: τ₁ is the first base
visit of orbit 1 at time ≥ ℓ₀, τ_{i+1} the first base visit of the other orbit
at time ≥ τ_i + ℓ₀. The coupling time T is the first τ_i (i ≥ 2) at which both
orbits sit at the base; the construction then restarts, giving T_1 < T_2 < ….
"""
import logging
from concurrent.futures import Executor
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .environment import Environment, Stream
from .errors import ArgumentError
from .parallel import chunk_ranges, run_tasks
from .statistics import FitModel, RateFit, fit_curve

logger = logging.getLogger(__name__)

DEFAULT_ELL0 = 5
DEFAULT_EPS1 = 0.5
MAX_EPOCHS = 8
RECORD_PAIRS = 100
CHUNK = 2**16
MIN_REMAINING = 50
POLYNOMIAL_FIT_START = 20


class TailKind(str, Enum):
    EXPONENTIAL = "exponential"
    STRETCHED = "stretched"
    POLYNOMIAL = "polynomial"
    FIXED = "fixed"


class TailLaw(BaseModel):
    """Return-time law on 1..cap with survival S(n) = P{R > n}, renormalized at cap."""
    model_config = ConfigDict(frozen=True)

    kind: TailKind
    c: float = Field(default=1.0, gt=0.0)
    theta: float = Field(default=1.0, gt=0.0, le=1.0)
    a: float = Field(default=2.0, gt=1.0)
    r: int = Field(default=1, ge=1)
    cap: int = Field(default=20000, ge=1)

    @model_validator(mode="after")
    def _cap_covers_fixed(self) -> "TailLaw":
        if self.kind is TailKind.FIXED and self.r > self.cap:
            raise ValueError(f"fixed return time {self.r} exceeds cap {self.cap}")
        return self

    @classmethod
    def parse(cls, text: str, cap: int = 20000) -> "TailLaw":
        """`polynomial:2`, `exponential:1`, `stretched:1,0.5` or `fixed:3`."""
        name, _, body = text.partition(":")
        kind = TailKind(name.strip().lower())
        args = [float(v) for v in body.split(",")] if body else []
        if kind is TailKind.POLYNOMIAL:
            return cls(kind=kind, a=args[0], cap=cap)
        if kind is TailKind.EXPONENTIAL:
            return cls(kind=kind, c=args[0], cap=cap)
        if kind is TailKind.STRETCHED:
            return cls(kind=kind, c=args[0], theta=args[1], cap=cap)
        return cls(kind=kind, r=int(args[0]), cap=max(cap, int(args[0])))

    def describe(self) -> str:
        if self.kind is TailKind.POLYNOMIAL:
            return f"polynomial:{self.a}"
        if self.kind is TailKind.EXPONENTIAL:
            return f"exponential:{self.c}"
        if self.kind is TailKind.STRETCHED:
            return f"stretched:{self.c},{self.theta}"
        return f"fixed:{self.r}"

    def survival(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        if self.kind is TailKind.EXPONENTIAL:
            return np.exp(-self.c * n)
        if self.kind is TailKind.STRETCHED:
            return np.exp(-self.c * np.power(n, self.theta))
        if self.kind is TailKind.POLYNOMIAL:
            return np.power(1.0 + n, -self.a)
        return (n < self.r).astype(np.float64)

    def pmf(self) -> np.ndarray:
        """P{R = n} for n = 1..cap (index n−1)."""
        return _pmf(self)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.cap + 1), self.pmf()))

    def sample(self, u: np.ndarray) -> np.ndarray:
        index = np.searchsorted(_cdf(self), u, side="right")
        return np.minimum(index, self.cap - 1) + 1


@lru_cache(maxsize=64)
def _pmf(law: TailLaw) -> np.ndarray:
    survival = law.survival(np.arange(0, law.cap + 1))
    mass = survival[:-1] - survival[1:]
    mass = mass / mass.sum()
    mass.setflags(write=False)
    return mass


@lru_cache(maxsize=64)
def _cdf(law: TailLaw) -> np.ndarray:
    cdf = np.cumsum(_pmf(law))
    cdf.setflags(write=False)
    return cdf


def _draw(env: Environment, law: TailLaw, pairs: np.ndarray, orbit: int, t: int) -> np.ndarray:
    return law.sample(env.uniforms(Stream.TOWER, pairs, orbit, env.offset + t))


def sample_tower_orbit(env: Environment, law: TailLaw, length: int, pair: int = 0, orbit: int = 0) -> np.ndarray:
    """Levels of one tower orbit for times 0..length−1, starting at the base."""
    if length < 1:
        raise ArgumentError(f"length must be at least 1, got {length}")
    levels = np.empty(length, dtype=np.int64)
    pair_id = np.array([pair])
    level, ret = 0, int(_draw(env, law, pair_id, orbit, 0)[0])
    for t in range(length):
        levels[t] = level
        level += 1
        if level == ret:
            level, ret = 0, int(_draw(env, law, pair_id, orbit, t + 1)[0])
    return levels


class CouplingRun(BaseModel):
    """Stopping-time statistics over independent pairs of tower orbits.

    occupancy[n, i] counts pairs with exactly i coupling times ≤ n (the last
    column collects i ≥ max_epochs). first_coupling holds T per pair, −1 when
    censored at the horizon. tau_records / coupling_records keep full traces
    for the first record_pairs pairs.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    law: TailLaw
    ell0: int
    pairs: int
    horizon: int
    occupancy: np.ndarray
    first_coupling: np.ndarray
    tau_records: dict[int, list[int]] = Field(default_factory=dict)
    coupling_records: dict[int, list[int]] = Field(default_factory=dict)
    eps1: float = DEFAULT_EPS1

    @property
    def T_samples(self) -> np.ndarray:
        return self.first_coupling

    @property
    def censored(self) -> int:
        return int((self.first_coupling < 0).sum())

    def Ti_tail(self) -> dict[int, np.ndarray]:
        """P{T_i > n} for n = 0..horizon and i = 1..max_epochs."""
        cumulative = np.cumsum(self.occupancy, axis=1)
        return {i: cumulative[:, i - 1] / self.pairs for i in range(1, self.occupancy.shape[1])}


class _Chunk(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    occupancy: np.ndarray
    first_coupling: np.ndarray
    tau_records: dict[int, list[int]]
    coupling_records: dict[int, list[int]]


def _couple_chunk(
    env: Environment,
    law: TailLaw,
    start: int,
    stop: int,
    horizon: int,
    ell0: int,
    max_epochs: int,
    record_pairs: int,
) -> _Chunk:
    pairs = np.arange(start, stop, dtype=np.int64)
    size = stop - start
    level = np.zeros((2, size), dtype=np.int64)
    ret = np.stack([_draw(env, law, pairs, 0, 0), _draw(env, law, pairs, 1, 0)])
    phase = np.ones(size, dtype=np.int64)
    threshold = np.full(size, ell0, dtype=np.int64)
    epochs = np.zeros(size, dtype=np.int64)
    first = np.full(size, -1, dtype=np.int64)
    occupancy = np.zeros((horizon + 1, max_epochs + 1), dtype=np.int64)
    recorded = np.flatnonzero(pairs < record_pairs)
    taus: dict[int, list[int]] = {int(pairs[i]): [] for i in recorded}
    couplings: dict[int, list[int]] = {int(pairs[i]): [] for i in recorded}

    for t in range(horizon + 1):
        at_base = level == 0
        active = np.where(phase % 2 == 1, at_base[0], at_base[1])
        hit = active & (t >= threshold)
        coupled = hit & (phase >= 2) & at_base[0] & at_base[1]
        if recorded.size:
            for i in recorded[hit[recorded]]:
                taus[int(pairs[i])].append(t)
                if coupled[i]:
                    couplings[int(pairs[i])].append(t)
        first = np.where(coupled & (first < 0), t, first)
        epochs += coupled
        phase = np.where(coupled, 1, np.where(hit, phase + 1, phase))
        threshold = np.where(hit, t + ell0, threshold)
        occupancy[t] = np.bincount(np.minimum(epochs, max_epochs), minlength=max_epochs + 1)

        level += 1
        for orbit in (0, 1):
            done = level[orbit] == ret[orbit]
            if done.any():
                level[orbit, done] = 0
                ret[orbit, done] = _draw(env, law, pairs[done], orbit, t + 1)
    return _Chunk(occupancy=occupancy, first_coupling=first, tau_records=taus, coupling_records=couplings)


def run_coupling(
    env: Environment,
    law: TailLaw,
    pairs: int,
    horizon: int,
    ell0: int = DEFAULT_ELL0,
    max_epochs: int = MAX_EPOCHS,
    record_pairs: int = RECORD_PAIRS,
    executor: Optional[Executor] = None,
    chunk: int = CHUNK,
    eps1: float = DEFAULT_EPS1,
) -> CouplingRun:
    """Simulate `pairs` independent orbit pairs sharing the environment up to `horizon`."""
    if pairs < 1:
        raise ArgumentError(f"pairs must be at least 1, got {pairs}")
    if ell0 < 1:
        raise ArgumentError(f"ell0 must be at least 1, got {ell0}")
    if horizon < 2 * ell0:
        raise ArgumentError(f"horizon {horizon} must be at least 2*ell0 = {2 * ell0}")
    tasks = [
        (env, law, start, stop, horizon, ell0, max_epochs, record_pairs)
        for start, stop in chunk_ranges(pairs, chunk)
    ]
    logger.info(f"Coupling {pairs} pairs under {law.describe()} to horizon {horizon} (ell0={ell0})")
    occupancy = np.zeros((horizon + 1, max_epochs + 1), dtype=np.int64)
    firsts, taus, couplings = [], {}, {}
    for part in run_tasks(_couple_chunk, tasks, executor):
        occupancy += part.occupancy
        firsts.append(part.first_coupling)
        taus.update(part.tau_records)
        couplings.update(part.coupling_records)
    first = np.concatenate(firsts)
    run = CouplingRun(
        law=law,
        ell0=ell0,
        pairs=pairs,
        horizon=horizon,
        occupancy=occupancy,
        first_coupling=first,
        tau_records=taus,
        coupling_records=couplings,
        eps1=eps1,
    )
    if run.censored:
        logger.warning(f"{run.censored} of {pairs} pairs did not couple before {horizon}")
    return run


def uncoupled_mass_curve(run: CouplingRun, eps1: Optional[float] = None) -> np.ndarray:
    """Σ_i ε₁^i · P{T_i ≤ n < T_{i+1}} for n = 0..horizon (T_0 = 0).

    eps1 defaults to the value the run was made with.
    """
    eps1 = run.eps1 if eps1 is None else eps1
    if not 0.0 < eps1 < 1.0:
        raise ArgumentError(f"eps1 must lie in (0, 1), got {eps1}")
    weights = eps1 ** np.arange(run.occupancy.shape[1])
    return run.occupancy @ weights / run.pairs


def tail_fit(run: CouplingRun, lo: Optional[int] = None, hi: Optional[int] = None) -> RateFit:
    """Fit P{T > n}: log-log for polynomial laws, semilog otherwise.

    The window keeps only n where at least fifty pairs are still uncoupled.
    For polynomial laws the tail is one long excursion, P{T > n} ~ C·n^(−a),
    reached only after the geometric run of failed attempts; the default
    window then starts at 20·ell0.
    """
    survival = run.Ti_tail()[1]
    n = np.arange(run.horizon + 1)
    if lo is None:
        lo = POLYNOMIAL_FIT_START * run.ell0 if run.law.kind is TailKind.POLYNOMIAL else max(2 * run.ell0, 1)
    hi = run.horizon if hi is None else hi
    use = (n >= lo) & (n <= hi) & (survival * run.pairs >= MIN_REMAINING)
    if use.sum() < 3:
        raise ArgumentError(f"too few points with {MIN_REMAINING}+ uncoupled pairs in [{lo}, {hi}]")
    model = {
        TailKind.POLYNOMIAL: FitModel.POLYNOMIAL,
        TailKind.STRETCHED: FitModel.STRETCHED,
    }.get(run.law.kind, FitModel.EXPONENTIAL)
    return fit_curve(n[use], survival[use], model)

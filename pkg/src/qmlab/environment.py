"""Seeded two-sided parameter sequences with the left-shift action.

An Environment never stores its sequence: every parameter is a keyed hash of
(seed, stream, component, absolute index), so any window, including negative
indices, is reproducible and shifting is O(1).
"""
import logging
from enum import Enum, IntEnum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_TWO_POW_53 = float(2**53)

WEIGHT_TOLERANCE = 1e-12


class Stream(IntEnum):
    """Independent draw families sharing one seed."""
    PARAMETER = 0
    ATTRACTOR = 1
    TOWER = 2
    DISTORTION = 3


def _mix64(z):
    """splitmix64 output finalizer on uint64 values (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def counter_bits(seed: int, stream: int, *counters) -> np.ndarray:
    """64 random bits per counter tuple; counters broadcast against each other."""
    with np.errstate(over="ignore"):
        key = _mix64(np.uint64(stream) * _GOLDEN + _GOLDEN)
        z = np.atleast_1d(_mix64(np.uint64(seed) ^ key))
        for counter in counters:
            c = np.asarray(counter, dtype=np.int64).astype(np.uint64)
            z = _mix64(z + (c + _ONE) * _GOLDEN)
    return np.atleast_1d(z)


def bits_to_unit(bits: np.ndarray) -> np.ndarray:
    """Top 53 bits as a double in [0, 1)."""
    return (bits >> np.uint64(11)).astype(np.float64) / _TWO_POW_53


class LawKind(str, Enum):
    UNIFORM = "uniform_interval"
    DIRAC = "dirac"
    FINITE = "finite_support"


class ParameterLaw(BaseModel):
    """Single-site law θ of the i.i.d. environment P = θ^Z."""
    model_config = ConfigDict(frozen=True)

    kind: LawKind
    lo: Optional[float] = None
    hi: Optional[float] = None
    value: Optional[float] = None
    values: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_fields(self) -> "ParameterLaw":
        if self.kind is LawKind.UNIFORM:
            if self.lo is None or self.hi is None:
                raise ValueError("uniform_interval needs lo and hi")
            if self.lo > self.hi:
                raise ValueError(f"uniform_interval needs lo <= hi, got [{self.lo}, {self.hi}]")
        elif self.kind is LawKind.DIRAC:
            if self.value is None:
                raise ValueError("dirac needs value")
        else:
            if not self.values or len(self.values) != len(self.weights):
                raise ValueError("finite_support needs equally many values and weights")
            if any(w < 0 for w in self.weights):
                raise ValueError("finite_support weights must be nonnegative")
            if abs(sum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
                raise ValueError(f"finite_support weights sum to {sum(self.weights)}, not 1")
        return self

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ParameterLaw":
        return cls(kind=LawKind.UNIFORM, lo=lo, hi=hi)

    @classmethod
    def dirac(cls, value: float) -> "ParameterLaw":
        return cls(kind=LawKind.DIRAC, value=value)

    @classmethod
    def finite(cls, values, weights) -> "ParameterLaw":
        return cls(kind=LawKind.FINITE, values=tuple(values), weights=tuple(weights))

    @classmethod
    def parse(cls, text: str) -> "ParameterLaw":
        """Parse `dirac:0.5`, `uniform:0.4,0.6` or `finite:0.4@0.25,0.6@0.75`."""
        name, _, body = text.partition(":")
        name = name.strip().lower()
        try:
            if name == "dirac":
                return cls.dirac(float(body))
            if name in ("uniform", "uniform_interval"):
                lo, hi = (float(v) for v in body.split(","))
                return cls.uniform(lo, hi)
            if name in ("finite", "finite_support"):
                pairs = [item.split("@") for item in body.split(",")]
                return cls.finite([float(v) for v, _ in pairs], [float(w) for _, w in pairs])
        except (TypeError, ValueError) as e:
            raise ValueError(f"Cannot parse law '{text}': {e}") from e
        raise ValueError(f"Unknown law kind '{name}' in '{text}'")

    @property
    def is_deterministic(self) -> bool:
        if self.kind is LawKind.DIRAC:
            return True
        if self.kind is LawKind.UNIFORM:
            return self.lo == self.hi
        return sum(1 for w in self.weights if w > 0) == 1

    @property
    def support_bounds(self) -> tuple[float, float]:
        if self.kind is LawKind.UNIFORM:
            return self.lo, self.hi
        if self.kind is LawKind.DIRAC:
            return self.value, self.value
        live = [v for v, w in zip(self.values, self.weights) if w > 0]
        return min(live), max(live)

    @property
    def mean(self) -> float:
        if self.kind is LawKind.UNIFORM:
            return 0.5 * (self.lo + self.hi)
        if self.kind is LawKind.DIRAC:
            return self.value
        return float(np.dot(self.values, self.weights))

    def sample(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.kind is LawKind.UNIFORM:
            return self.lo + (self.hi - self.lo) * u
        if self.kind is LawKind.DIRAC:
            return np.full_like(u, self.value)
        cumulative = np.cumsum(self.weights)
        index = np.searchsorted(cumulative, u * cumulative[-1], side="right")
        return np.asarray(self.values)[np.minimum(index, len(self.values) - 1)]

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind is LawKind.UNIFORM:
            if self.hi == self.lo:
                return (x >= self.lo).astype(np.float64)
            return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        if self.kind is LawKind.DIRAC:
            return (x >= self.value).astype(np.float64)
        values = np.asarray(self.values)
        weights = np.asarray(self.weights)
        return (weights[None, :] * (values[None, :] <= x.reshape(-1, 1))).sum(axis=1).reshape(x.shape)

    def describe(self) -> str:
        if self.kind is LawKind.UNIFORM:
            return f"uniform:{self.lo},{self.hi}"
        if self.kind is LawKind.DIRAC:
            return f"dirac:{self.value}"
        return "finite:" + ",".join(f"{v}@{w}" for v, w in zip(self.values, self.weights))


class Environment(BaseModel):
    """A fixed noise realization ω together with its shift position.

    `param_at(k)` is ω_{offset+k}; `shift(j)` is σ^j. Instances are immutable
    and hashable, so they can key caches and cross process boundaries.
    """
    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    law: ParameterLaw
    offset: int = 0

    def param_at(self, k: int, component: int = 0) -> float:
        return float(self.param_window(k, 1, components=component + 1)[0, component])

    def param_window(self, start: int, count: int, components: int = 1) -> np.ndarray:
        """Parameters ω_{start}, ..., ω_{start+count-1} as a (count, components) array."""
        if count < 0:
            raise ValueError(f"count must be nonnegative, got {count}")
        index = self.offset + start + np.arange(count, dtype=np.int64)
        columns = [
            self.law.sample(bits_to_unit(counter_bits(self.seed, Stream.PARAMETER, c, index)))
            for c in range(components)
        ]
        if count == 0:
            return np.empty((0, components))
        return np.stack(columns, axis=1)

    def shift(self, j: int) -> "Environment":
        if j == 0:
            return self
        return self.model_copy(update={"offset": self.offset + j})

    def uniforms(self, stream: Stream, *counters) -> np.ndarray:
        """Keyed uniforms in [0, 1) for auxiliary draws (not shifted by offset)."""
        return bits_to_unit(counter_bits(self.seed, int(stream), *counters))

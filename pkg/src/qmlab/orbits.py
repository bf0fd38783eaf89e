"""Random composition engine: forward and pullback orbits, derivative cocycles."""
import logging
from enum import Enum
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .environment import Environment
from .registry import MapFamily, resolve_family

logger = logging.getLogger(__name__)

BLOCK = 4096

A = TypeVar("A")


class OrbitMode(str, Enum):
    FORWARD = "forward"
    PULLBACK = "pullback"


class OrbitRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    env: Environment
    family: str
    start: tuple[float, ...]
    length: int = Field(ge=0)
    mode: OrbitMode = OrbitMode.FORWARD


class CocycleTrace(BaseModel):
    """Summands log ‖Df⁻¹_{σ^{j}ω} | E^cu‖ along an orbit, j = 0..n−1."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    log_inverse_expansion: np.ndarray

    def __len__(self) -> int:
        return len(self.log_inverse_expansion)

    @property
    def birkhoff_average(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.mean(self.log_inverse_expansion))


def _first_index(req: OrbitRequest) -> int:
    return 0 if req.mode is OrbitMode.FORWARD else -req.length


def _params_blocks(env: Environment, family: MapFamily, first: int, length: int, block: int):
    for offset in range(0, length, block):
        count = min(block, length - offset)
        params = env.param_window(first + offset, count, family.components)
        family.check_params(params)
        yield params


def iter_orbit(
    env: Environment,
    family: MapFamily | str,
    start: Sequence[float],
    length: int,
    mode: OrbitMode = OrbitMode.FORWARD,
    block: int = BLOCK,
) -> Iterator[np.ndarray]:
    """Yield the orbit x_0, x_1, ..., x_n in blocks of at most `block` + 1 rows.

    The first block starts with x_0; later blocks hold only new states.
    """
    family = resolve_family(family)
    state = family.validate_start(start)[None, :]
    first = 0 if OrbitMode(mode) is OrbitMode.FORWARD else -length
    pending = [state[0]]
    for params in _params_blocks(env, family, first, length, block):
        for row in params:
            state = family.step(row, state)
            pending.append(state[0])
        yield np.array(pending)
        pending = []
    if pending:
        yield np.array(pending)


def fold_orbit(
    env: Environment,
    family: MapFamily | str,
    start: Sequence[float],
    length: int,
    fn: Callable[[A, np.ndarray], A],
    initial: A,
    mode: OrbitMode = OrbitMode.FORWARD,
) -> A:
    """Fold `fn(acc, block)` over the orbit without materializing it."""
    acc = initial
    for block in iter_orbit(env, family, start, length, mode):
        acc = fn(acc, block)
    return acc


def run_orbit(req: OrbitRequest) -> np.ndarray:
    """Orbit of length n+1 as an (n+1, dim) array.

    Forward mode composes with ω_0, ..., ω_{n−1}; pullback mode with
    ω_{−n}, ..., ω_{−1}.
    """
    blocks = list(iter_orbit(req.env, req.family, req.start, req.length, req.mode))
    return np.concatenate(blocks, axis=0)


def cocycle_trace(req: OrbitRequest) -> CocycleTrace:
    """Entry j is the log inverse expansion of f_{ω_j} at x_j (forward mode)."""
    family = resolve_family(req.family)
    state = family.validate_start(req.start)[None, :]
    first = _first_index(req)
    out = np.empty(req.length)
    j = 0
    for params in _params_blocks(req.env, family, first, req.length, BLOCK):
        for row in params:
            out[j] = family.log_inverse_expansion(row, state)[0]
            state = family.step(row, state)
            j += 1
    return CocycleTrace(log_inverse_expansion=out)


def evolve_ensemble(
    env: Environment,
    family: MapFamily | str,
    states: np.ndarray,
    start: int,
    steps: int,
    visit: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Advance an ensemble with the shared parameters ω_start, ..., ω_{start+steps−1}.

    `visit(t, states)` is called on the initial states (t = 0) and after every
    step, which lets callers accumulate lag statistics on the fly.
    """
    family = resolve_family(family)
    states = np.asarray(states, dtype=np.float64)
    if visit is not None:
        visit(0, states)
    t = 0
    for params in _params_blocks(env, family, start, steps, BLOCK):
        for row in params:
            states = family.step(row, states)
            t += 1
            if visit is not None:
                visit(t, states)
    return states

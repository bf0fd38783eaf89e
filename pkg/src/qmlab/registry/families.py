"""Map family registry: family name to vectorized step/expansion implementation."""
import logging
from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np

from ..environment import Environment, LawKind, ParameterLaw, Stream
from ..errors import DomainError, RangeError
from .. import maps

logger = logging.getLogger(__name__)


class MapFamily(ABC):
    """A parameterized family f_b acting on state arrays of shape (N, dim)."""

    name: str
    dim: int
    components: int = 1

    @abstractmethod
    def check_law(self, law: ParameterLaw) -> None:
        """Raise DomainError unless every parameter in the law's support is admissible."""

    @abstractmethod
    def step(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Apply f_b for one parameter row `params` (components,) to every state."""

    @abstractmethod
    def log_inverse_expansion(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        """log ‖Df_b⁻¹ | E^cu‖ at each state, shape (N,)."""

    @abstractmethod
    def reference_sample(self, env: Environment, index: np.ndarray) -> np.ndarray:
        """Reference-measure initial conditions keyed on sample indices."""

    def validate_start(self, point: Sequence[float]) -> np.ndarray:
        p = np.asarray(point, dtype=np.float64).reshape(-1)
        if p.shape != (self.dim,):
            raise RangeError(f"{self.name} points have {self.dim} coordinates, got {len(p)}")
        if not np.all((p[0] >= 0.0) & (p[0] < 1.0)):
            raise RangeError(f"{self.name} base coordinate must lie in [0, 1), got {p[0]}")
        return p

    def check_params(self, params: np.ndarray) -> None:
        pass


def _law_values(law: ParameterLaw) -> list[float]:
    if law.kind is LawKind.FINITE:
        return [v for v, w in zip(law.values, law.weights) if w > 0]
    return list(law.support_bounds)


class IntermittentCircle(MapFamily):
    name = "intermittent_circle"
    dim = 1

    def check_law(self, law: ParameterLaw) -> None:
        values = _law_values(law)
        if not all(0.0 < v < 1.0 for v in values):
            raise DomainError(f"{self.name} needs parameters in (0, 1), law is {law.describe()}")

    def check_params(self, params: np.ndarray) -> None:
        maps.check_alpha(params[..., 0])

    def step(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        return maps.circle_values(params[0], states[:, 0])[:, None]

    def log_inverse_expansion(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        return -np.log(maps.circle_derivative(params[0], states[:, 0]))

    def reference_sample(self, env: Environment, index: np.ndarray) -> np.ndarray:
        return env.uniforms(Stream.ATTRACTOR, index, 0)[:, None]


class Solenoid(IntermittentCircle):
    """Solid-torus skew product over the intermittent circle map.

    The center-unstable expansion is measured along the base coordinate.
    """
    name = "solenoid"
    dim = 3

    def validate_start(self, point: Sequence[float]) -> np.ndarray:
        p = super().validate_start(point)
        if p[1] ** 2 + p[2] ** 2 > 1.0:
            raise RangeError(f"solenoid start must satisfy y² + z² ≤ 1, got {p}")
        return p

    def step(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        return maps.solenoid_values(params[0], states)

    def reference_sample(self, env: Environment, index: np.ndarray) -> np.ndarray:
        x = env.uniforms(Stream.ATTRACTOR, index, 0)
        return np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=1)


class PerturbedCat(MapFamily):
    """Cat map ((2,1),(1,1)) composed with a small random translation (eps_u, eps_v)."""
    name = "perturbed_cat"
    dim = 2
    components = 2

    def check_law(self, law: ParameterLaw) -> None:
        if any(abs(v) > maps.CAT_MAX_PERTURBATION for v in _law_values(law)):
            raise DomainError(
                f"{self.name} needs |eps| <= {maps.CAT_MAX_PERTURBATION}, law is {law.describe()}"
            )

    def check_params(self, params: np.ndarray) -> None:
        maps.check_cat_perturbation(params[..., 0], params[..., 1])

    def validate_start(self, point: Sequence[float]) -> np.ndarray:
        p = super().validate_start(point)
        if not 0.0 <= p[1] < 1.0:
            raise RangeError(f"torus coordinates must lie in [0, 1), got {p}")
        return p

    def step(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        return maps.cat_values(params[0], params[1], states)

    def log_inverse_expansion(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        return np.full(states.shape[0], -np.log(maps.CAT_EXPANSION))

    def reference_sample(self, env: Environment, index: np.ndarray) -> np.ndarray:
        return np.stack(
            [env.uniforms(Stream.ATTRACTOR, index, 0), env.uniforms(Stream.ATTRACTOR, index, 1)],
            axis=1,
        )


class FamilyRegistry:
    def __init__(self):
        self._families: dict[str, MapFamily] = {}

    def register(self, family: MapFamily):
        self._families[family.name] = family

    def lookup(self, name: str) -> Optional[MapFamily]:
        return self._families.get(name)

    def require(self, name: str) -> MapFamily:
        family = self.lookup(name)
        if family is None:
            raise ValueError(f"Unknown map family '{name}'; known: {', '.join(self.names())}")
        return family

    def names(self) -> list[str]:
        return sorted(self._families)


def default_registry() -> FamilyRegistry:
    registry = FamilyRegistry()
    for family in (IntermittentCircle(), Solenoid(), PerturbedCat()):
        registry.register(family)
    return registry


_DEFAULT = default_registry()


def resolve_family(family: MapFamily | str) -> MapFamily:
    if isinstance(family, MapFamily):
        return family
    return _DEFAULT.require(family)

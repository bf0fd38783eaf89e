"""Concrete map families: the intermittent circle map, the solenoid skew
product built over it, and randomly translated cat maps.

Circle points live in [0, 1). The solenoid's trigonometric terms use the angle
2πx. Every function accepts scalars or numpy arrays and broadcasts.
"""
import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import DomainError, RangeError

logger = logging.getLogger(__name__)

BISECTION_STEPS = 80
NEWTON_MAX_STEPS = 64
FIBER_RATE = 0.1
FIBER_RADIUS = 0.5
CONE_START = 0.5
CONE_ABSORBING = 4.0
CAT_MAX_PERTURBATION = 0.05
CAT_EXPANSION = (3.0 + np.sqrt(5.0)) / 2.0
CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])

_EPS = np.finfo(np.float64).eps


class Branch(str, Enum):
    LEFT = "left"
    RIGHT = "right"


def check_alpha(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    if not np.all((a > 0.0) & (a < 1.0)):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return a


def _scalar_or_array(v: np.ndarray):
    return float(v) if np.ndim(v) == 0 else v


def wrap_unit(v: np.ndarray) -> np.ndarray:
    """Reduce mod 1 into [0, 1), folding the rounding case 1.0 back to 0."""
    w = np.mod(v, 1.0)
    return np.where(w >= 1.0, 0.0, w)


def left_branch(alpha, x):
    """x(1 + (2x)^α), onto [0, 1) from [0, 1/2); not reduced."""
    return x * (1.0 + np.power(2.0 * x, alpha))


def right_branch(alpha, x):
    """x − 2^α(1−x)^{1+α}, onto [0, 1) from [1/2, 1); not reduced."""
    return x - 0.5 * np.power(2.0 * (1.0 - x), 1.0 + alpha)


def circle_values(alpha, x):
    """T_α without parameter checks, for hot loops over validated laws."""
    x = np.asarray(x, dtype=np.float64)
    left = x < 0.5
    safe_left = np.where(left, x, 0.0)
    safe_right = np.where(left, 0.5, x)
    return wrap_unit(np.where(left, left_branch(alpha, safe_left), right_branch(alpha, safe_right)))


def circle_derivative(alpha, x):
    x = np.asarray(x, dtype=np.float64)
    distance = np.where(x < 0.5, 2.0 * x, 2.0 * (1.0 - x))
    return 1.0 + (1.0 + alpha) * np.power(distance, alpha)


def eval_T(alpha, x):
    """Intermittent circle map T_α, neutral fixed point at 0, branch cut at 1/2."""
    a = check_alpha(alpha)
    return _scalar_or_array(circle_values(a, x))


def deriv_T(alpha, x):
    """T′_α(x) ≥ 1; the value at x = 1/2 is also the left limit."""
    a = check_alpha(alpha)
    return _scalar_or_array(circle_derivative(a, x))


def invert_branch(alpha, y, branch: Branch | str):
    """Inverse of one branch of T_α by bisection over the branch domain."""
    a = check_alpha(alpha)
    branch = Branch(branch)
    y = np.asarray(y, dtype=np.float64)
    # Both branches are onto [0, 1): x − 2^α(1−x)^{1+α} climbs from 0 at x = 1/2
    # to 1 at x = 1, so every y in [0, 1) (0.6 included) has a right preimage.
    if not np.all((y >= 0.0) & (y < 1.0)):
        raise RangeError(f"y must lie in [0, 1) for the {branch.value} branch, got {y}")
    if branch is Branch.LEFT:
        lo, hi, f = np.zeros_like(y), np.full_like(y, 0.5), left_branch
    else:
        lo, hi, f = np.full_like(y, 0.5), np.ones_like(y), right_branch
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = f(a, mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = np.where(np.abs(f(a, lo) - y) <= np.abs(f(a, hi) - y), lo, hi)
    if branch is Branch.RIGHT:
        x = np.minimum(x, np.nextafter(1.0, 0.0))
    return _scalar_or_array(x)


def left_preimage(alpha, y):
    """Left-branch inverse by Newton's method started at min(y, 1/2).

    The branch is convex and increasing, so iterates decrease monotonically to
    the root; no bracketing is needed.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x = np.minimum(y, 0.5)
    for _ in range(NEWTON_MAX_STEPS):
        power = np.power(2.0 * x, alpha)
        step = (x * (1.0 + power) - y) / (1.0 + (1.0 + alpha) * power)
        x = np.maximum(x - step, 0.0)
        if np.all(np.abs(step) <= 4.0 * _EPS * x):
            break
    return x


def _check_solenoid_points(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 3:
        raise RangeError(f"solenoid points have three coordinates, got shape {p.shape}")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if not np.all((x >= 0.0) & (x < 1.0)):
        raise RangeError("solenoid base coordinate must lie in [0, 1)")
    if not np.all(y * y + z * z <= 1.0):
        raise RangeError("solenoid fiber coordinates must satisfy y² + z² ≤ 1")
    return p


def solenoid_values(alpha, p: np.ndarray) -> np.ndarray:
    x = p[..., 0]
    angle = 2.0 * np.pi * x
    return np.stack(
        [
            circle_values(alpha, x),
            FIBER_RATE * p[..., 1] + FIBER_RADIUS * np.cos(angle),
            FIBER_RATE * p[..., 2] + FIBER_RADIUS * np.sin(angle),
        ],
        axis=-1,
    )


def eval_g(alpha, p):
    """Solenoid skew product g_α(x, y, z) = (T_α x, y/10 + cos(2πx)/2, z/10 + sin(2πx)/2)."""
    a = check_alpha(alpha)
    return solenoid_values(a, _check_solenoid_points(p))


def jacobian_g(alpha, p) -> np.ndarray:
    a = check_alpha(alpha)
    p = _check_solenoid_points(p)
    x = p[..., 0]
    angle = 2.0 * np.pi * x
    jac = np.zeros(p.shape[:-1] + (3, 3))
    jac[..., 0, 0] = circle_derivative(a, x)
    jac[..., 1, 0] = -np.pi * np.sin(angle)
    jac[..., 2, 0] = np.pi * np.cos(angle)
    jac[..., 1, 1] = FIBER_RATE
    jac[..., 2, 2] = FIBER_RATE
    return jac


class ConeState(BaseModel):
    """Slope box [s2_lo, s2_hi] × [s3_lo, s3_hi] holding v₂/v₁ and v₃/v₁."""
    model_config = ConfigDict(frozen=True)

    s2_lo: float = -CONE_START
    s2_hi: float = CONE_START
    s3_lo: float = -CONE_START
    s3_hi: float = CONE_START

    @model_validator(mode="after")
    def _ordered(self) -> "ConeState":
        if self.s2_lo > self.s2_hi or self.s3_lo > self.s3_hi:
            raise ValueError("cone bounds must satisfy lo <= hi")
        return self

    @property
    def width(self) -> float:
        return max(self.s2_hi - self.s2_lo, self.s3_hi - self.s3_lo)

    def as_array(self) -> np.ndarray:
        return np.array([self.s2_lo, self.s2_hi, self.s3_lo, self.s3_hi])

    def contained_in(self, bound: float) -> bool:
        return bool(np.all(np.abs(self.as_array()) <= bound))


def push_slope_boxes(alpha, x, boxes: np.ndarray) -> np.ndarray:
    """Image of slope boxes (..., 4) under Dg at base points x; widths shrink by 1/(10T′)."""
    x = np.asarray(x, dtype=np.float64)
    boxes = np.asarray(boxes, dtype=np.float64)
    gain = 1.0 / circle_derivative(alpha, x)
    angle = 2.0 * np.pi * x
    out = np.empty(np.broadcast_shapes(boxes.shape, x.shape + (4,)))
    for col, drift in ((0, -np.pi * np.sin(angle)), (2, np.pi * np.cos(angle))):
        lo, hi = boxes[..., col], boxes[..., col + 1]
        center = (drift + FIBER_RATE * 0.5 * (lo + hi)) * gain
        half = FIBER_RATE * 0.5 * (hi - lo) * gain
        out[..., col] = center - half
        out[..., col + 1] = center + half
    return out


def cone_push(alpha, x, c: ConeState) -> ConeState:
    a = check_alpha(alpha)
    s2_lo, s2_hi, s3_lo, s3_hi = push_slope_boxes(a, float(x), c.as_array())
    return ConeState(s2_lo=s2_lo, s2_hi=s2_hi, s3_lo=s3_lo, s3_hi=s3_hi)


def check_cat_perturbation(eps_u, eps_v) -> None:
    if np.any(np.abs(eps_u) > CAT_MAX_PERTURBATION) or np.any(np.abs(eps_v) > CAT_MAX_PERTURBATION):
        raise DomainError(
            f"cat map perturbations must satisfy |eps| <= {CAT_MAX_PERTURBATION}, got ({eps_u}, {eps_v})"
        )


def cat_values(eps_u, eps_v, p: np.ndarray) -> np.ndarray:
    u, v = p[..., 0], p[..., 1]
    return np.stack([wrap_unit(2.0 * u + v + eps_u), wrap_unit(u + v + eps_v)], axis=-1)


def eval_perturbed_cat(eps_u: float, eps_v: float, p):
    """(u, v) ↦ (2u + v + eps_u, u + v + eps_v) mod 1."""
    check_cat_perturbation(eps_u, eps_v)
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 2 or not np.all((p >= 0.0) & (p < 1.0)):
        raise RangeError(f"torus points need two coordinates in [0, 1), got {p}")
    return cat_values(eps_u, eps_v, p)


def cat_unstable_direction() -> np.ndarray:
    v = np.array([1.0, CAT_EXPANSION - 2.0])
    return v / np.linalg.norm(v)


def cat_stable_direction() -> np.ndarray:
    v = np.array([1.0, 1.0 / CAT_EXPANSION - 2.0])
    return v / np.linalg.norm(v)

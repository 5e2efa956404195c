"""
Minkowski R^{3,1} algebra and hyperbolic isometries for the AH toolkit

Signature is (+, -, -, -): the hyperboloid model of H^3 is <X, X> = 1, X^0 > 0.
"""

import os
import sys
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import polar

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import DomainError, NormalizationError

logger = logging.getLogger(__name__)

ETA = np.diag([1.0, -1.0, -1.0, -1.0])
ORIGIN = np.array([1.0, 0.0, 0.0, 0.0])

FUTURE_TIMELIKE = "future-timelike"
PAST_TIMELIKE = "past-timelike"
FUTURE_NULL = "future-null"
PAST_NULL = "past-null"
SPACELIKE = "spacelike"
ZERO = "zero"
CAUSAL_CLASSES = (FUTURE_TIMELIKE, PAST_TIMELIKE, FUTURE_NULL, PAST_NULL, SPACELIKE, ZERO)


@dataclass(frozen=True)
class Vec4:
    """Minkowski 4-vector (t; x1, x2, x3)"""
    t: float
    x: Tuple[float, float, float]

    def __post_init__(self):
        x = tuple(float(c) for c in self.x)
        if len(x) != 3:
            raise DomainError(f"Vec4 needs 3 spatial components, got {len(x)}")
        if not np.all(np.isfinite((self.t,) + x)):
            raise DomainError(f"Vec4 components must be finite, got {(self.t,) + x}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", x)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Vec4":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != 4:
            raise DomainError(f"Vec4 needs 4 components, got {values.size}")
        return cls(values[0], tuple(values[1:]))

    @classmethod
    def origin(cls) -> "Vec4":
        return cls.from_array(ORIGIN)

    def as_array(self) -> np.ndarray:
        return np.array((self.t,) + self.x)

    def to_list(self) -> List[float]:
        """JSON form [t, x1, x2, x3]"""
        return [self.t, *self.x]

    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.as_array())))

    def __add__(self, other: "Vec4") -> "Vec4":
        return Vec4.from_array(self.as_array() + other.as_array())

    def __sub__(self, other: "Vec4") -> "Vec4":
        return Vec4.from_array(self.as_array() - other.as_array())

    def scaled(self, factor: float) -> "Vec4":
        return Vec4.from_array(factor * self.as_array())


Vec4Like = Union[Vec4, Sequence[float], np.ndarray]


def _as_array(v: Vec4Like) -> np.ndarray:
    if isinstance(v, Vec4):
        return v.as_array()
    return np.asarray(v, dtype=float)


def minkowski_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Lorentz inner product over the last axis"""
    return a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)


def lorentz_inner(u: Vec4Like, v: Vec4Like) -> float:
    """
    Lorentz inner product u0 v0 - u.v

    Args:
        u: First vector
        v: Second vector

    Returns:
        Inner product value
    """
    return float(minkowski_inner(_as_array(u), _as_array(v)))


def default_causal_tolerance(v: Vec4Like) -> float:
    """tau_causal = relative tolerance * (||v||_inf + 1)"""
    return config.CAUSAL_RELATIVE_TOLERANCE * (float(np.max(np.abs(_as_array(v)))) + 1.0)


def causal_class(v: Vec4Like, tolerance: Optional[float] = None) -> str:
    """
    Classify a vector by the sign of <v, v> and of v0

    Args:
        v: Vector to classify
        tolerance: Band half-width; defaults to default_causal_tolerance(v)

    Returns:
        One of CAUSAL_CLASSES
    """
    values = _as_array(v)
    tau = default_causal_tolerance(values) if tolerance is None else float(tolerance)
    if np.max(np.abs(values)) <= tau:
        return ZERO
    square = float(minkowski_inner(values, values))
    if square > tau:
        return FUTURE_TIMELIKE if values[0] > 0 else PAST_TIMELIKE
    if square < -tau:
        return SPACELIKE
    return FUTURE_NULL if values[0] > 0 else PAST_NULL


def null_pairing_margin(v: Vec4Like) -> float:
    """
    Minimum of <v, eta> over future null eta = (1, xi), |xi| = 1

    Positive exactly when v is future timelike.
    """
    values = _as_array(v)
    return float(values[0] - np.linalg.norm(values[1:]))


def check_on_hyperboloid(p: np.ndarray, what: str = "point") -> None:
    """Raise DomainError unless <p, p> = 1 and p0 > 0"""
    p = np.atleast_2d(p)
    defect = np.abs(minkowski_inner(p, p) - 1.0)
    scale = np.maximum(1.0, p[:, 0] ** 2)
    worst = int(np.argmax(defect / scale))
    if defect[worst] > config.HYPERBOLOID_TOLERANCE * scale[worst] or np.any(p[:, 0] <= 0.0):
        raise DomainError(
            f"{what} is not on the upper hyperboloid (<p,p>-1 = {defect[worst]:.3e}, p0 = {p[worst, 0]:.6g})")


def project_to_hyperboloid(q: Vec4Like) -> np.ndarray:
    """Rescale a future timelike vector onto the hyperboloid"""
    q = _as_array(q)
    square = float(minkowski_inner(q, q))
    if square <= 0.0 or q[0] <= 0.0:
        raise DomainError(f"Cannot project a non future-timelike vector onto H^3 (<q,q> = {square:.3e})")
    return q / np.sqrt(square)


@dataclass(frozen=True, eq=False)
class LorentzMap:
    """Orthochronous Lorentz transformation"""
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (4, 4):
            raise DomainError(f"LorentzMap needs a 4x4 matrix, got {m.shape}")
        defect = np.max(np.abs(m.T @ ETA @ m - ETA))
        scale = max(1.0, float(np.max(np.abs(m))) ** 2)
        if defect > config.LORENTZ_TOLERANCE * scale:
            raise DomainError(f"Matrix does not preserve the Lorentz form (defect {defect:.3e})")
        if m[0, 0] <= 0.0:
            raise DomainError("LorentzMap must be orthochronous (m[0][0] > 0)")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "LorentzMap":
        return cls(np.eye(4))

    def apply(self, v: Vec4Like) -> Union[Vec4, np.ndarray]:
        """Apply to a Vec4 (returns Vec4) or to row-stacked arrays (..., 4)"""
        if isinstance(v, Vec4):
            return Vec4.from_array(self.m @ v.as_array())
        return np.asarray(v, dtype=float) @ self.m.T

    def compose(self, other: "LorentzMap") -> "LorentzMap":
        """self after other"""
        return LorentzMap(self.m @ other.m)

    def inverse(self) -> "LorentzMap":
        return LorentzMap(ETA @ self.m.T @ ETA)

    def to_list(self) -> List[List[float]]:
        return self.m.tolist()


def boost_to_origin(p: Vec4Like) -> LorentzMap:
    """
    Hyperbolic translation sending p to o = (1, 0, 0, 0)

    Args:
        p: Point on the upper hyperboloid

    Returns:
        Pure boost LorentzMap with M p = o
    """
    p = _as_array(p)
    check_on_hyperboloid(p)
    p0, pv = p[0], p[1:]
    m = np.empty((4, 4))
    m[0, 0] = p0
    m[0, 1:] = -pv
    m[1:, 0] = -pv
    m[1:, 1:] = np.eye(3) + np.outer(pv, pv) / (1.0 + p0)
    return LorentzMap(m)


def rotation_fixing_o(R: np.ndarray) -> LorentzMap:
    """
    Embed an O(3) matrix as the isometry diag(1, R)

    Args:
        R: Orthogonal 3x3 matrix (reflections allowed)

    Returns:
        LorentzMap fixing o
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise DomainError(f"Rotation needs a 3x3 matrix, got {R.shape}")
    defect = np.max(np.abs(R.T @ R - np.eye(3)))
    if defect > config.ORTHOGONAL_TOLERANCE:
        raise DomainError(f"Matrix is not orthogonal (|R^T R - I| = {defect:.3e})")
    m = np.eye(4)
    m[1:, 1:] = R
    return LorentzMap(m)


def hyperbolic_distance(p: Vec4Like, q: Vec4Like) -> Union[float, np.ndarray]:
    """
    Distance on the hyperboloid, arccosh <p, q>

    Evaluated as 2 arcsinh(sqrt(-<p-q, p-q>)/2), which is the same quantity
    without cancellation for nearby points. Accepts batched (..., 4) arrays.

    Args:
        p: Point(s) on the upper hyperboloid
        q: Point(s) on the upper hyperboloid

    Returns:
        Distance(s)
    """
    p = _as_array(p)
    q = _as_array(q)
    check_on_hyperboloid(p.reshape(-1, 4))
    check_on_hyperboloid(q.reshape(-1, 4))
    diff = p - q
    chord = np.sqrt(np.maximum(-minkowski_inner(diff, diff), 0.0))
    distance = 2.0 * np.arcsinh(0.5 * chord)
    return float(distance) if np.ndim(distance) == 0 else distance


def gauge_rotation(y1: np.ndarray, y2: np.ndarray, y3: np.ndarray,
                   condition_limit: float = config.GAUGE_CONDITION_LIMIT) -> Tuple[np.ndarray, float]:
    """
    O(3) matrix Q with Q y1 = e1, Q y2 in {x3 = 0, x2 >= 0} and (Q y3)_3 >= 0

    The polar factor of [y1 y2 y3] screens out degenerate configurations; the
    constraint set is then met exactly by Gram-Schmidt on y1, y2 with the
    handedness chosen from y3.

    Args:
        y1: Image of e1
        y2: Image of e2
        y3: Image of e3
        condition_limit: Largest accepted condition number

    Returns:
        Tuple (Q, condition number of [y1 y2 y3])
    """
    M = np.column_stack([y1, y2, y3]).astype(float)
    _, P = polar(M)
    eigenvalues = np.linalg.eigvalsh(0.5 * (P + P.T))
    condition = float(eigenvalues[-1] / eigenvalues[0]) if eigenvalues[0] > 0 else np.inf
    if not np.isfinite(condition) or condition > condition_limit:
        raise NormalizationError(
            f"Gauge is degenerate: images of e1, e2, e3 are nearly coplanar (condition {condition:.3e})",
            details={"condition": condition})

    f1 = M[:, 0] / np.linalg.norm(M[:, 0])
    perpendicular = M[:, 1] - (M[:, 1] @ f1) * f1
    norm = np.linalg.norm(perpendicular)
    if norm < 1.0 / condition_limit:
        raise NormalizationError("Gauge is degenerate: images of e1 and e2 are parallel",
                                 details={"condition": condition})
    f2 = perpendicular / norm
    f3 = np.cross(f1, f2)
    if f3 @ M[:, 2] < 0.0:
        f3 = -f3
    Q = np.vstack([f1, f2, f3])
    logger.debug(f"Gauge rotation det={np.linalg.det(Q):+.0f}, condition={condition:.3e}")
    return Q, condition

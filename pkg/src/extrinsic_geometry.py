"""
Extrinsic geometry module for the AH toolkit

Second fundamental form, principal curvatures and mean curvature of an
embedded surface in the hyperboloid model, the intrinsic Li-Weinstein-type
bound on H0, and the concentric inscribed/circumscribed geodesic balls.
"""

import os
import sys
import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy.optimize import minimize

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import ConfigurationError, DomainError, GeometryError
from src.sphere_calculus import (
    ScalarField, Sym2Field, gaussian_curvature, laplace_beltrami, nodal_gradient, nodal_hessian,
)
from src.minkowski import ETA, Vec4, hyperbolic_distance, minkowski_inner, project_to_hyperboloid
from src.ah_metric import CoordinateSphere, scalar_curvature_R
from src.h3_embedding import EmbeddingH3

logger = logging.getLogger(__name__)

CENTERINGS = ("circumscribed", "inscribed")


@dataclass(frozen=True, eq=False)
class ShapeData:
    """Second fundamental form and principal curvatures of an embedded surface"""
    chi: Sym2Field
    gamma: Sym2Field
    normal: np.ndarray
    lambda_min: ScalarField
    lambda_max: ScalarField
    H0: ScalarField

    def summary(self) -> Dict[str, float]:
        return {
            "lambda_min": self.lambda_min.min(),
            "lambda_max": self.lambda_max.max(),
            "H0_min": self.H0.min(),
            "H0_max": self.H0.max(),
        }


@dataclass(frozen=True)
class BallSandwich:
    """Concentric geodesic balls inside and around a convex surface"""
    center: Vec4
    rho_in: float
    rho_out: float
    centering: str
    min_distance: float
    max_distance: float
    in_margin: float
    out_margin: float
    worst_in_node: int
    worst_out_node: int

    def to_json(self) -> Dict[str, Any]:
        return {
            "center": self.center.to_list(),
            "rho_in": self.rho_in,
            "rho_out": self.rho_out,
            "centering": self.centering,
            "min_distance": self.min_distance,
            "max_distance": self.max_distance,
            "in_margin": self.in_margin,
            "out_margin": self.out_margin,
        }


def _lorentz_cross(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Per-node vector Lorentz-orthogonal to a, b and c"""
    rows = np.stack([a, b, c], axis=1)
    euclidean = np.empty((a.shape[0], 4))
    for k in range(4):
        columns = [j for j in range(4) if j != k]
        euclidean[:, k] = (-1.0) ** k * np.linalg.det(rows[:, :, columns])
    return euclidean @ ETA


def area_weighted_center(emb: EmbeddingH3) -> np.ndarray:
    """Area-weighted Minkowski mean of the surface, projected to the hyperboloid"""
    density = emb.pullback().area_density()
    mean = (emb.points() * (emb.grid.weights * density)[:, None]).sum(0)
    return project_to_hyperboloid(mean)


def shape_operator(emb: EmbeddingH3) -> ShapeData:
    """
    Second fundamental form with respect to the outward unit normal

    The normal is the unit spacelike vector tangent to the hyperboloid and
    orthogonal to the surface, oriented away from the area-weighted center,
    so geodesic spheres about o have lambda = coth(sigma).

    Args:
        emb: Embedding with a positive-definite pullback metric

    Returns:
        ShapeData
    """
    grid = emb.grid
    X = emb.points()
    dX = nodal_gradient(grid, X)
    ddX = nodal_hessian(grid, X)
    frame = grid.frame()

    tangents = np.einsum("nAc,nci->niA", dX, frame)
    hessian = np.einsum("nci,nAcd,ndj->nijA", frame, ddX, frame)
    hessian = 0.5 * (hessian + np.swapaxes(hessian, 1, 2))

    gamma = -minkowski_inner(tangents[:, :, None, :], tangents[:, None, :, :])
    det_gamma = np.linalg.det(gamma)
    if np.any(det_gamma <= 0.0) or np.any(gamma[:, 0, 0] <= 0.0):
        worst = int(np.argmin(det_gamma))
        raise DomainError(f"Induced metric of the embedding is degenerate at node {worst}",
                          details={"node": worst})

    normal = _lorentz_cross(X, tangents[:, 0], tangents[:, 1])
    normal /= np.sqrt(-minkowski_inner(normal, normal))[:, None]
    center = area_weighted_center(emb)
    orientation = np.sign(minkowski_inner(normal, center[None, :]))
    orientation[orientation == 0.0] = 1.0
    normal *= orientation[:, None]

    chi = minkowski_inner(hessian, normal[:, None, None, :])
    chi = 0.5 * (chi + np.swapaxes(chi, 1, 2))

    # Symmetric reduction of the pencil (chi, gamma)
    L = np.linalg.cholesky(gamma)
    L_inv = np.linalg.inv(L)
    reduced = L_inv @ chi @ np.swapaxes(L_inv, 1, 2)
    eigenvalues = np.linalg.eigvalsh(0.5 * (reduced + np.swapaxes(reduced, 1, 2)))

    return ShapeData(
        chi=Sym2Field.from_frame(grid, chi),
        gamma=Sym2Field.from_frame(grid, gamma),
        normal=normal,
        lambda_min=ScalarField(grid, eigenvalues[:, 0]),
        lambda_max=ScalarField(grid, eigenvalues[:, 1]),
        H0=ScalarField(grid, eigenvalues.sum(1)),
    )


def gauss_equation_defect(shape: ShapeData) -> float:
    """max |K + 1 - lambda1 lambda2| with K intrinsic to the induced metric"""
    curvature = gaussian_curvature(shape.gamma).values
    return float(np.max(np.abs(curvature + 1.0 - shape.lambda_min.values * shape.lambda_max.values)))


def gauss_trace_defect(shape: ShapeData) -> float:
    """max |H0^2 - |chi|^2 - (R + 2)|"""
    R = 2.0 * gaussian_curvature(shape.gamma).values
    norm_chi = shape.lambda_min.values ** 2 + shape.lambda_max.values ** 2
    return float(np.max(np.abs(shape.H0.values ** 2 - norm_chi - (R + 2.0))))


def _positive_scalar_curvature(sphere: CoordinateSphere) -> ScalarField:
    R = scalar_curvature_R(sphere)
    worst = int(np.argmin(R.values))
    if R.values[worst] <= 0.0:
        raise DomainError(f"Scalar curvature is not positive (R = {R.values[worst]:.3e} at node {worst})",
                          details={"node": worst})
    return R


def li_weinstein_bound(sphere: CoordinateSphere) -> float:
    """
    Intrinsic upper bound max(2R + 4 - Delta R / R) on H0^2

    Args:
        sphere: Coordinate sphere with R > 0

    Returns:
        Bound value
    """
    R = _positive_scalar_curvature(sphere)
    laplacian = laplace_beltrami(sphere.gamma, R)
    return float(np.max(2.0 * R.values + 4.0 - laplacian.values / R.values))


def h0_lower_bound(sphere: CoordinateSphere) -> float:
    """Max of 2(R + 2), a lower bound for max H0^2 from the Gauss equation"""
    R = _positive_scalar_curvature(sphere)
    return float(np.max(2.0 * (R.values + 2.0)))


def _arccoth(value: float) -> float:
    return float(np.arctanh(1.0 / value))


def _optimal_center(points: np.ndarray, normals: np.ndarray, seed: np.ndarray, centering: str) -> np.ndarray:
    """
    Common ball center on the hyperboloid

    Circumscribed: minimize max cosh d(p, X_y) = max <p, X_y>. With q = p / max,
    this is: maximize <q, q> subject to <q, X_y> <= 1.
    Inscribed: maximize min sinh dist(p, tangent plane at X_y) = min <p, nu_y>,
    i.e. minimize <q, q> subject to <q, nu_y> >= 1.
    """
    if centering == "circumscribed":
        rows = points @ ETA
        q0 = seed / np.max(rows @ seed)
        sign = -1.0
        constraint = {"type": "ineq", "fun": lambda q: 1.0 - rows @ q, "jac": lambda q: -rows}
    else:
        rows = normals @ ETA
        q0 = seed / np.min(rows @ seed)
        sign = 1.0
        constraint = {"type": "ineq", "fun": lambda q: rows @ q - 1.0, "jac": lambda q: rows}

    result = minimize(
        lambda q: sign * float(q @ ETA @ q), q0,
        jac=lambda q: 2.0 * sign * (ETA @ q),
        method="SLSQP", constraints=[constraint],
        options={"ftol": 1e-16, "maxiter": 500},
    )
    if not result.success:
        logger.warning(f"{centering} center search did not report success: {result.message}")
    return project_to_hyperboloid(result.x)


def ball_sandwich(emb: EmbeddingH3, shape: ShapeData,
                  centering: str = config.DEFAULT_CENTERING,
                  epsilon: float = config.CERTIFICATE_EPSILON) -> BallSandwich:
    """
    Concentric balls with coth(rho_in) = max lambda and coth(rho_out) = min lambda

    Args:
        emb: Strictly convex embedding
        shape: Its shape data
        centering: "circumscribed" (Chebyshev center) or "inscribed"
        epsilon: Certificate slack

    Returns:
        BallSandwich whose containment certificates passed
    """
    if centering not in CENTERINGS:
        raise ConfigurationError(f"centering must be one of {CENTERINGS}, got {centering!r}")
    lambda_low = shape.lambda_min.min()
    lambda_high = shape.lambda_max.max()
    if lambda_low <= 1.0:
        node = int(np.argmin(shape.lambda_min.values))
        raise DomainError(f"Surface is not strictly convex (min lambda = {lambda_low:.6f} at node {node})",
                          details={"node": node, "lambda_min": lambda_low})

    rho_in = _arccoth(lambda_high)
    rho_out = _arccoth(lambda_low)
    points = emb.points()
    center = _optimal_center(points, shape.normal, area_weighted_center(emb), centering)

    distances = hyperbolic_distance(np.broadcast_to(center, points.shape), points)
    worst_in = int(np.argmin(distances))
    worst_out = int(np.argmax(distances))
    in_margin = float(distances[worst_in] - rho_in)
    out_margin = float(rho_out - distances[worst_out])

    if in_margin < -epsilon:
        raise GeometryError(
            f"Inscribed ball certificate failed at node {worst_in}: distance {distances[worst_in]:.10f} "
            f"< rho_in {rho_in:.10f}", details={"node": worst_in, "margin": in_margin})
    if out_margin < -epsilon:
        raise GeometryError(
            f"Circumscribed ball certificate failed at node {worst_out}: distance {distances[worst_out]:.10f} "
            f"> rho_out {rho_out:.10f}", details={"node": worst_out, "margin": out_margin})
    if min(in_margin, out_margin) < 0.0:
        logger.warning(f"Ball sandwich certificate holds only within slack (in {in_margin:.2e}, out {out_margin:.2e})")

    return BallSandwich(
        center=Vec4.from_array(center), rho_in=rho_in, rho_out=rho_out, centering=centering,
        min_distance=float(distances[worst_in]), max_distance=float(distances[worst_out]),
        in_margin=in_margin, out_margin=out_margin,
        worst_in_node=worst_in, worst_out_node=worst_out,
    )

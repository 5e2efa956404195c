"""
Isometric embedding module for the AH toolkit

Realizes a positively curved metric on S^2 as a surface in the hyperboloid
model of H^3. Embeddings are stored in geodesic polar form about o,
X = (cosh sigma, sinh sigma * n), so the hyperboloid constraint holds by
construction. Three paths are provided: the exact round sphere, a profile
ODE for metrics axisymmetric about x3, and a damped Gauss-Newton solver
applied matrix-free for general metrics.
"""

import os
import sys
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, cg

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import ConfigurationError, DomainError, SolverError
from src.sphere_calculus import (
    ScalarField, SphereGrid, Sym2Field, UnitVectorField, frame_components,
    gaussian_curvature, nodal_gradient,
)
from src.minkowski import LorentzMap, boost_to_origin, gauge_rotation, project_to_hyperboloid, rotation_fixing_o

logger = logging.getLogger(__name__)

GAUGES = ("fix-three-points", "center-constraint")
SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class SolverOptions:
    """Settings of the general embedding solver"""
    max_iterations: int = config.SOLVER_MAX_ITERATIONS
    tolerance: float = config.SOLVER_TOLERANCE
    damping: float = config.SOLVER_DAMPING
    gauge: str = config.SOLVER_GAUGE

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.tolerance > 0.0:
            raise ConfigurationError(f"tolerance must be > 0, got {self.tolerance}")
        if not self.damping > 0.0:
            raise ConfigurationError(f"damping must be > 0, got {self.damping}")
        if self.gauge not in GAUGES:
            raise ConfigurationError(f"gauge must be one of {GAUGES}, got {self.gauge!r}")


@dataclass(frozen=True, eq=False)
class EmbeddingH3:
    """Discrete map S^2 -> H^3 in geodesic polar form about o"""
    sigma: ScalarField
    n_dir: UnitVectorField
    residual: float
    target: Optional[Sym2Field] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> SphereGrid:
        return self.sigma.grid

    @classmethod
    def from_points(cls, grid: SphereGrid, points: np.ndarray, target: Optional[Sym2Field] = None,
                    metadata: Optional[Dict[str, Any]] = None) -> "EmbeddingH3":
        """
        Build from Minkowski images (n, 4) on the hyperboloid

        Args:
            grid: Parameter grid
            points: X at every node
            target: Metric the embedding is meant to realize
            metadata: Solver metadata

        Returns:
            EmbeddingH3 with the residual recomputed against target
        """
        spatial = np.asarray(points, dtype=float)[:, 1:]
        radius = np.linalg.norm(spatial, axis=1)
        if np.any(radius <= 0.0):
            raise DomainError("Surface passes through o; polar form is undefined")
        sigma = ScalarField(grid, np.arcsinh(radius))
        n_dir = UnitVectorField.normalized(grid, spatial / radius[:, None])
        residual = isometry_residual(pullback_metric(sigma, n_dir), target) if target is not None else np.nan
        return cls(sigma=sigma, n_dir=n_dir, residual=float(residual), target=target,
                   metadata=dict(metadata or {}))

    def points(self) -> np.ndarray:
        """Minkowski image (n, 4)"""
        s = self.sigma.values
        return np.column_stack([np.cosh(s), np.sinh(s)[:, None] * self.n_dir.directions])

    def pullback(self) -> Sym2Field:
        return pullback_metric(self.sigma, self.n_dir)

    def recompute_residual(self, target: Optional[Sym2Field] = None) -> float:
        target = target if target is not None else self.target
        if target is None:
            raise ConfigurationError("Embedding has no target metric to compare against")
        return isometry_residual(self.pullback(), target)

    def transformed(self, lorentz_map: LorentzMap) -> "EmbeddingH3":
        """Image under an isometry of H^3"""
        metadata = dict(self.metadata)
        return EmbeddingH3.from_points(self.grid, lorentz_map.apply(self.points()), self.target, metadata)

    def to_json(self) -> Dict[str, Any]:
        """Documented embedding payload"""
        return {
            "schema_version": config.EMBEDDING_SCHEMA_VERSION,
            "grid": self.grid.descriptor(),
            "residual": float(self.residual),
            "solver": self.metadata,
            "sigma": self.sigma.values.tolist(),
            "n_dir": self.n_dir.directions.tolist(),
        }


def pullback_metric(sigma: ScalarField, n_dir: UnitVectorField) -> Sym2Field:
    """d sigma^2 + sinh^2(sigma) |dn|^2 in ambient form"""
    grid = sigma.grid
    grad_sigma = grid.transform.gradient(sigma.values)
    dn = nodal_gradient(grid, n_dir.directions)
    s2 = np.sinh(sigma.values) ** 2
    tensor = (np.einsum("ni,nj->nij", grad_sigma, grad_sigma)
              + s2[:, None, None] * np.einsum("nac,nad->ncd", dn, dn))
    return Sym2Field(grid, tensor)


def isometry_residual(pullback: Sym2Field, target: Sym2Field) -> float:
    """
    Relative sup-norm isometry defect

    Max over nodes and orthonormal-frame entries of |pullback - target|,
    divided by the max frame entry of the target.
    """
    target_components = target.frame_components()
    defect = np.max(np.abs(pullback.frame_components() - target_components))
    return float(defect / np.max(np.abs(target_components)))


def _area_radius(gamma: Sym2Field) -> float:
    """Radius of the geodesic sphere whose area equals that of gamma"""
    area = float(np.sum(gamma.area_density() * gamma.grid.weights))
    return float(np.arcsinh(np.sqrt(area / (4.0 * np.pi))))


def round_initialization(gamma: Sym2Field) -> EmbeddingH3:
    """Geodesic sphere about o with the same area as gamma"""
    grid = gamma.grid
    sigma = ScalarField(grid, np.full(grid.size, _area_radius(gamma)))
    n_dir = UnitVectorField(grid, grid.nodes.copy())
    residual = isometry_residual(pullback_metric(sigma, n_dir), gamma)
    return EmbeddingH3(sigma=sigma, n_dir=n_dir, residual=residual, target=gamma,
                       metadata={"method": "round-initialization"})


def embed_round(r: float, grid: SphereGrid) -> EmbeddingH3:
    """
    Geodesic sphere realizing sinh^-2(r) g0

    Args:
        r: Radius parameter, r > 0
        grid: Parameter grid

    Returns:
        EmbeddingH3 with sinh sigma = 1/sinh r and n(x) = x
    """
    if not r > 0.0:
        raise DomainError(f"embed_round needs r > 0, got {r}")
    target = Sym2Field.round(grid, 1.0 / np.sinh(r) ** 2)
    sigma = ScalarField(grid, np.full(grid.size, np.arcsinh(1.0 / np.sinh(r))))
    n_dir = UnitVectorField(grid, grid.nodes.copy())
    residual = isometry_residual(pullback_metric(sigma, n_dir), target)
    return EmbeddingH3(sigma=sigma, n_dir=n_dir, residual=residual, target=target,
                       metadata={"method": "round", "r": float(r)})


def _check_positive_curvature(gamma: Sym2Field) -> ScalarField:
    curvature = gaussian_curvature(gamma)
    worst = int(np.argmin(curvature.values))
    if curvature.values[worst] <= 0.0:
        raise DomainError(
            f"Gaussian curvature is not positive (K = {curvature.values[worst]:.3e} at node {worst})",
            details={"node": worst, "K": float(curvature.values[worst])})
    return curvature


def _zonal_series(grid: SphereGrid, values: np.ndarray) -> np.ndarray:
    """Legendre series in mu = cos(theta) of per-latitude values, by Gauss quadrature"""
    mu = np.cos(grid.theta)
    degree = grid.n_theta - 1
    vander = legendre.legvander(mu, degree)
    scale = (2.0 * np.arange(degree + 1) + 1.0) / 2.0
    return scale * (vander.T @ (grid.mu_weights * values))


def embed_axisymmetric(gamma: Sym2Field, tolerance: float = config.SOLVER_TOLERANCE) -> EmbeddingH3:
    """
    Embed a metric E dtheta^2 + G dphi^2 as a surface of revolution about the x3 axis

    The surface is written in cylindrical coordinates of H^3 about the
    geodesic through o along x3, X = (cosh d cosh t, sinh d cos phi,
    sinh d sin phi, cosh d sinh t). Matching G fixes sinh d; matching E gives
    the profile ODE cosh d * t' = -sqrt(E - d'^2), integrated from the north
    pole. This is the polar (sigma, alpha) profile system in other
    coordinates: sinh d = sinh sigma sin alpha and tanh t = tanh sigma cos alpha.
    sinh d = sin(theta) sqrt(G_hat) vanishes at both poles, so the profile
    closes on the axis without a regularity shot; the remaining freedom is
    the axial offset, which centers the poles symmetrically about o.

    Args:
        gamma: Axisymmetric positive-curvature metric
        tolerance: Largest accepted relative isometry residual

    Returns:
        EmbeddingH3
    """
    grid = gamma.grid
    scale = max(gamma.sup_norm(), 1.0)
    defect = gamma.zonal_defect()
    if defect > config.AXISYMMETRY_TOLERANCE * scale:
        raise DomainError(f"Metric is not axisymmetric about x3 (defect {defect:.3e})")
    _check_positive_curvature(gamma)

    # Frame components are E and G / sin^2(theta)
    components = gamma.frame_components().reshape(grid.n_theta, grid.n_phi, 2, 2).mean(axis=1)
    E_series = _zonal_series(grid, components[:, 0, 0])
    G_hat_series = _zonal_series(grid, components[:, 1, 1])
    G_hat_derivative = legendre.legder(G_hat_series)

    def profile(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        mu = np.cos(theta)
        s = np.sin(theta)
        G_hat = legendre.legval(mu, G_hat_series)
        if np.any(G_hat <= 0.0):
            raise DomainError("Azimuthal metric component is not positive")
        root = np.sqrt(G_hat)
        sinh_d = s * root
        d_sinh_d = mu * root - s ** 2 * legendre.legval(mu, G_hat_derivative) / (2.0 * root)
        cosh_d = np.sqrt(1.0 + sinh_d ** 2)
        return sinh_d, cosh_d, d_sinh_d / cosh_d

    worst_gap = [0.0]

    def rhs(theta: float, state: np.ndarray) -> np.ndarray:
        _, cosh_d, d_prime = profile(np.array([theta]))
        gap = legendre.legval(np.cos(theta), E_series) - d_prime[0] ** 2
        worst_gap[0] = min(worst_gap[0], float(gap))
        return np.array([-np.sqrt(max(gap, 0.0)) / cosh_d[0]])

    solution = solve_ivp(rhs, (0.0, np.pi), np.array([0.0]), method="DOP853",
                         rtol=config.ODE_RTOL, atol=config.ODE_ATOL, dense_output=True)
    if not solution.success:
        raise SolverError(f"Profile ODE failed: {solution.message}",
                          details={"message": solution.message, "nfev": int(solution.nfev)})
    if worst_gap[0] < -1e-8 * max(1.0, float(np.max(np.abs(E_series)))):
        raise SolverError(f"Profile is not realizable as a surface of revolution (E - d'^2 = {worst_gap[0]:.3e})",
                          details={"min_gap": worst_gap[0]})

    t_end = float(solution.sol(np.pi)[0])
    # Shot: center the poles symmetrically about o along the axis
    t = solution.sol(grid.theta)[0] - 0.5 * t_end
    sinh_d, cosh_d, _ = profile(grid.theta)

    cos_p = np.cos(grid.phi)[None, :]
    sin_p = np.sin(grid.phi)[None, :]
    ones = np.ones((1, grid.n_phi))
    points = np.stack([
        (cosh_d * np.cosh(t))[:, None] * ones,
        sinh_d[:, None] * cos_p,
        sinh_d[:, None] * sin_p,
        (cosh_d * np.sinh(t))[:, None] * ones,
    ], axis=-1).reshape(-1, 4)

    embedding = EmbeddingH3.from_points(grid, points, gamma, {
        "method": "axisymmetric",
        "ode_nfev": int(solution.nfev),
        "axial_offset": -0.5 * t_end,
    })
    logger.debug(f"Axisymmetric embedding residual {embedding.residual:.3e} (nfev={solution.nfev})")
    if not embedding.residual <= tolerance:
        raise SolverError(f"Axisymmetric embedding residual {embedding.residual:.3e} exceeds {tolerance:.1e}",
                          residual=embedding.residual)
    return embedding


class _Linearization:
    """Jacobian of the frame-component isometry residual at a fixed (sigma, n)"""

    def __init__(self, grid: SphereGrid, sigma: np.ndarray, n_dir: np.ndarray):
        self.grid = grid
        self.transform = grid.transform
        self.size = grid.size
        self.sigma = sigma
        self.n_dir = n_dir
        self.grad_sigma = self.transform.gradient(sigma)
        self.dn = nodal_gradient(grid, n_dir)
        self.s2 = np.sinh(sigma) ** 2
        self.sc2 = 2.0 * np.sinh(sigma) * np.cosh(sigma)
        self.S = np.einsum("nac,nad->ncd", self.dn, self.dn)
        self.pullback = np.einsum("ni,nj->nij", self.grad_sigma, self.grad_sigma) + self.s2[:, None, None] * self.S
        self.e1 = grid.e_theta
        self.e2 = grid.e_phi

    def frame(self, tensor: np.ndarray) -> np.ndarray:
        t11 = np.einsum("na,nab,nb->n", self.e1, tensor, self.e1)
        t12 = np.einsum("na,nab,nb->n", self.e1, tensor, self.e2)
        t22 = np.einsum("na,nab,nb->n", self.e2, tensor, self.e2)
        return np.concatenate([t11, SQRT2 * t12, t22])

    def frame_adjoint(self, u: np.ndarray) -> np.ndarray:
        u0, u1, u2 = np.split(u, 3)
        e1e1 = np.einsum("na,nb->nab", self.e1, self.e1)
        e1e2 = np.einsum("na,nb->nab", self.e1, self.e2)
        e2e2 = np.einsum("na,nb->nab", self.e2, self.e2)
        return (u0[:, None, None] * e1e1 + (u1 / SQRT2)[:, None, None] * (e1e2 + np.swapaxes(e1e2, 1, 2))
                + u2[:, None, None] * e2e2)

    def tangential(self, w: np.ndarray) -> np.ndarray:
        return w - (w * self.n_dir).sum(1)[:, None] * self.n_dir

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = self.size
        d_sigma = x[:n]
        d_n = self.tangential(x[n:].reshape(n, 3))
        grad_d_sigma = self.transform.gradient(d_sigma)
        d_dn = nodal_gradient(self.grid, d_n)
        cross = np.einsum("nac,nad->ncd", self.dn, d_dn)
        d_tensor = (np.einsum("ni,nj->nij", self.grad_sigma, grad_d_sigma)
                    + np.einsum("ni,nj->nij", grad_d_sigma, self.grad_sigma)
                    + (self.sc2 * d_sigma)[:, None, None] * self.S
                    + self.s2[:, None, None] * (cross + np.swapaxes(cross, 1, 2)))
        return self.frame(d_tensor)

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        U = self.frame_adjoint(u)
        sigma_adj = (self.transform.gradient_adjoint(2.0 * np.einsum("nij,nj->ni", U, self.grad_sigma))
                     + self.sc2 * np.einsum("nij,nij->n", self.S, U))
        V = 2.0 * self.s2[:, None, None] * np.einsum("nac,ncd->nad", self.dn, U)
        # Gradient adjoint per component a of the direction field
        n_adj = self.transform.gradient_adjoint(np.moveaxis(V, 1, 0))
        n_adj = self.tangential(np.moveaxis(n_adj, 0, 1))
        return np.concatenate([sigma_adj, n_adj.ravel()])


class _GaugeRows:
    """
    Six linear conditions on a solver step along the isometries of H^3

    Rows 0-2 are the linearized spatial part of the area-weighted center and
    rows 3-5 the infinitesimal rotations about o, each scaled to norm
    `weight`. With center=True the first three rows carry the current
    center as their value, so the iteration also drives it to o.
    """

    def __init__(self, lin: _Linearization, density: np.ndarray, weight: float, center: bool):
        size = lin.size
        w = lin.grid.weights * density
        sinh = np.sinh(lin.sigma)
        cosh = np.cosh(lin.sigma)
        eye = np.eye(3)
        rows = np.zeros((6, 4 * size))
        for a in range(3):
            rows[a, :size] = w * cosh * lin.n_dir[:, a]
            rows[a, size:] = ((w * sinh)[:, None] * lin.tangential(np.broadcast_to(eye[a], (size, 3)))).ravel()
            rows[3 + a, size:] = (w[:, None] * np.cross(eye[a], lin.n_dir)).ravel()
        norms = np.linalg.norm(rows, axis=1)
        self.rows = weight * rows / norms[:, None]
        self.values = np.zeros(6)
        if center:
            self.values[:3] = weight * ((w * sinh)[:, None] * lin.n_dir).sum(0) / norms[:3]


class _Iterate:
    """Solver state at one (sigma, n): linearization, gauge rows and augmented residual"""

    def __init__(self, gamma: Sym2Field, sigma: np.ndarray, n_dir: np.ndarray,
                 density: np.ndarray, scale: float, center: bool):
        self.sigma = sigma
        self.n_dir = n_dir
        self.lin = _Linearization(gamma.grid, sigma, n_dir)
        self.gauge = _GaugeRows(self.lin, density, scale, center)
        defect = frame_components(gamma.grid, self.lin.pullback) - gamma.frame_components()
        self.relative = float(np.max(np.abs(defect))) / scale
        self.metric_residual = self.lin.frame(self.lin.pullback - gamma.tensor)
        self.cost = 0.5 * float(self.metric_residual @ self.metric_residual
                                + self.gauge.values @ self.gauge.values)

    def gradient(self) -> np.ndarray:
        return self.lin.rmatvec(self.metric_residual) + self.gauge.rows.T @ self.gauge.values

    def normal_operator(self, damping: float) -> LinearOperator:
        """(J^T J + C^T C + damping I) with C the gauge rows"""
        lin = self.lin
        rows = self.gauge.rows

        def matvec(x: np.ndarray) -> np.ndarray:
            x = np.ravel(x)
            return lin.rmatvec(lin.matvec(x)) + rows.T @ (rows @ x) + damping * x

        return LinearOperator((4 * lin.size, 4 * lin.size), matvec=matvec, dtype=float)


def _round_normal_blocks(grid: SphereGrid, sigma0: float) -> np.ndarray:
    """
    Per-node 4x4 diagonal blocks of J^T J at the geodesic sphere of radius sigma0

    The round Jacobian commutes with rotations about x3 by the longitude
    step, so one node per latitude ring is evaluated and the ring is filled
    by rotating its block. The node normal lies outside the range of J and
    gets the mean tangential eigenvalue instead of zero.

    Returns:
        Blocks shaped (n, 4, 4) ordered as (d sigma, d n_x, d n_y, d n_z)
    """
    size = grid.size
    lin = _Linearization(grid, np.full(size, sigma0), grid.nodes.copy())
    cos_p = np.cos(grid.phi)
    sin_p = np.sin(grid.phi)
    turn = np.zeros((grid.n_phi, 4, 4))
    turn[:, 0, 0] = 1.0
    turn[:, 1, 1] = cos_p
    turn[:, 1, 2] = -sin_p
    turn[:, 2, 1] = sin_p
    turn[:, 2, 2] = cos_p
    turn[:, 3, 3] = 1.0

    blocks = np.zeros((size, 4, 4))
    for ring in range(grid.n_theta):
        node = ring * grid.n_phi
        columns = np.empty((3 * size, 4))
        for k, index in enumerate((node, size + 3 * node, size + 3 * node + 1, size + 3 * node + 2)):
            unit = np.zeros(4 * size)
            unit[index] = 1.0
            columns[:, k] = lin.matvec(unit)
        block = columns.T @ columns
        normal = np.concatenate([[0.0], grid.nodes[node]])
        block = block + 0.5 * np.trace(block[1:, 1:]) * np.outer(normal, normal)
        blocks[node:node + grid.n_phi] = turn @ block @ np.swapaxes(turn, 1, 2)
    return 0.5 * (blocks + np.swapaxes(blocks, 1, 2))


def _preconditioner(blocks: np.ndarray, damping: float) -> LinearOperator:
    """Block-diagonal inverse of the damped round-sphere normal operator"""
    size = blocks.shape[0]
    inverse = np.linalg.inv(blocks + damping * np.eye(4)[None])

    def apply(v: np.ndarray) -> np.ndarray:
        v = np.ravel(v)
        stacked = np.column_stack([v[:size], v[size:].reshape(size, 3)])
        z = np.einsum("nij,nj->ni", inverse, stacked)
        return np.concatenate([z[:, 0], z[:, 1:].ravel()])

    return LinearOperator((4 * size, 4 * size), matvec=apply, dtype=float)


def _apply_gauge(embedding: EmbeddingH3, gauge: str) -> Tuple[EmbeddingH3, LorentzMap]:
    """Remove the isometry freedom left by the solver"""
    if gauge == "center-constraint":
        mean = (embedding.points() * (embedding.grid.weights * embedding.target.area_density())[:, None]).sum(0)
        lorentz_map = boost_to_origin(project_to_hyperboloid(mean))
    else:
        directions = [embedding.n_dir.at(np.eye(3)[a]) for a in range(3)]
        Q, _ = gauge_rotation(*directions)
        lorentz_map = rotation_fixing_o(Q)
    return embedding.transformed(lorentz_map), lorentz_map


def _levenberg_marquardt(state: _Iterate, build: Callable[[np.ndarray, np.ndarray], _Iterate],
                         blocks: np.ndarray, damping: float, iterations: int,
                         opts: SolverOptions) -> Tuple[_Iterate, float, int]:
    """
    Iterate damped Gauss-Newton steps until the metric residual is within tolerance

    Returns:
        Tuple (state, damping, iterations) at convergence
    """
    size = state.lin.size
    while state.relative > opts.tolerance:
        if iterations >= opts.max_iterations:
            raise SolverError(
                f"Embedding solver hit the iteration cap ({opts.max_iterations}) at residual {state.relative:.3e}",
                residual=state.relative, details={"iterations": iterations, "damping": damping})
        iterations += 1

        step, info = cg(state.normal_operator(damping), -state.gradient(), rtol=config.CG_RTOL,
                        maxiter=config.CG_MAX_ITERATIONS, M=_preconditioner(blocks, damping))
        if info < 0:
            raise SolverError(f"Conjugate gradient breakdown (info={info})", residual=state.relative)

        trial_sigma = state.sigma + step[:size]
        trial_n = state.n_dir + state.lin.tangential(step[size:].reshape(size, 3))
        trial_n /= np.linalg.norm(trial_n, axis=1, keepdims=True)
        trial = build(trial_sigma, trial_n) if np.all(trial_sigma > 0.0) else None

        if trial is not None and trial.cost < state.cost:
            state = trial
            damping = max(0.5 * damping, 1e-15)
            logger.debug(f"LM iteration {iterations}: accepted, residual {state.relative:.3e}, "
                         f"mu {damping:.1e}, cg info {info}")
        else:
            damping *= 10.0
            logger.debug(f"LM iteration {iterations}: rejected, mu -> {damping:.1e}")
            if damping > config.SOLVER_DAMPING_CEILING:
                raise SolverError(f"Damping exceeded {config.SOLVER_DAMPING_CEILING:.0e} at residual "
                                  f"{state.relative:.3e}", residual=state.relative, details={"iterations": iterations})
    return state, damping, iterations


def embed_general(gamma: Sym2Field, init: Optional[EmbeddingH3] = None,
                  opts: Optional[SolverOptions] = None) -> EmbeddingH3:
    """
    Levenberg-damped Gauss-Newton solve of pullback(sigma, n) = gamma

    Normal equations (J^T J + C^T C + mu I) dx = -(J^T F + C^T c) are solved
    by conjugate gradients, with J applied matrix-free through spectral
    derivatives and preconditioned by the round-sphere Jacobian. The gauge
    rows C keep steps off the isometry directions; the chosen gauge is then
    applied exactly and the residual re-checked, resuming the iteration
    if the gauge map pushed it above tolerance.

    Args:
        gamma: Target metric with positive Gaussian curvature
        init: Starting embedding (round initialization when None)
        opts: Solver options

    Returns:
        EmbeddingH3 with residual <= opts.tolerance
    """
    opts = opts or SolverOptions()
    grid = gamma.grid
    _check_positive_curvature(gamma)
    current = init if init is not None else round_initialization(gamma)
    if current.grid is not grid:
        raise ConfigurationError("Initial embedding lives on a different grid")

    density = gamma.area_density()
    scale = float(np.max(np.abs(gamma.frame_components())))
    center = opts.gauge == "center-constraint"

    def build(sigma: np.ndarray, n_dir: np.ndarray) -> _Iterate:
        return _Iterate(gamma, sigma, n_dir, density, scale, center)

    state = build(current.sigma.values.copy(), current.n_dir.directions.copy())
    if state.relative <= opts.tolerance:
        return EmbeddingH3(
            sigma=ScalarField(grid, state.sigma), n_dir=UnitVectorField(grid, state.n_dir),
            residual=state.relative, target=gamma,
            metadata={"method": "general", "iterations": 0, "damping": opts.damping, "gauge": opts.gauge})

    blocks = _round_normal_blocks(grid, _area_radius(gamma))
    damping = opts.damping
    iterations = 0
    for polish in range(config.GAUGE_POLISH_ROUNDS + 1):
        state, damping, iterations = _levenberg_marquardt(state, build, blocks, damping, iterations, opts)
        solved = EmbeddingH3(
            sigma=ScalarField(grid, state.sigma), n_dir=UnitVectorField(grid, state.n_dir),
            residual=state.relative, target=gamma,
            metadata={"method": "general", "iterations": iterations, "damping": damping,
                      "gauge": opts.gauge, "polish_rounds": polish})
        embedding, _ = _apply_gauge(solved, opts.gauge)
        if embedding.residual <= opts.tolerance:
            logger.info(f"General embedding converged in {iterations} iterations, residual {embedding.residual:.3e}")
            return embedding
        logger.debug(f"Gauge map raised the residual to {embedding.residual:.3e}; resuming the solve")
        state = build(embedding.sigma.values.copy(), embedding.n_dir.directions.copy())

    raise SolverError(
        f"Residual {embedding.residual:.3e} stays above {opts.tolerance:.1e} after gauge fixing",
        residual=embedding.residual, details={"iterations": iterations, "gauge": opts.gauge})

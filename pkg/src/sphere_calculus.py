"""
Sphere discretization, spectral differentiation and quadrature for the AH toolkit

Fields live on a Gauss-Legendre x uniform-longitude grid. Scalar fields are
nodal arrays; symmetric 2-tensors are stored in ambient form, a tangential
symmetric 3x3 matrix per node, from which stereographic chart components are
derived on demand. Derivatives are spectral: each Cartesian component is
expanded in real spherical harmonics and differentiated exactly.
"""

import os
import sys
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Mapping, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy import special

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

TENSOR_COMPONENTS = ("conformal", "xx", "xy", "xz", "yy", "yz", "zz")
CARTESIAN_INDEX = {
    "xx": (0, 0), "xy": (0, 1), "xz": (0, 2),
    "yy": (1, 1), "yz": (1, 2), "zz": (2, 2),
}
NORMALIZATIONS = ("orthonormal", "unit")
CHARTS = ("north", "south")

CoefficientTable = Mapping[str, Mapping[Tuple[int, int], float]]


def normalized_legendre(l_max: int, m_max: int,
                        theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Associated Legendre functions normalized to unit L2 norm on [-1, 1]

    Taken from scipy's spherical Legendre functions with the Condon-Shortley
    phase removed, so P[m, m] >= 0 away from the poles.

    Args:
        l_max: Highest degree
        m_max: Highest order (m_max <= l_max)
        theta: Colatitudes

    Returns:
        Tuple (P, dP, ddP) of values and first and second theta-derivatives,
        each shaped (l_max + 1, m_max + 1, len(theta))
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    table = np.asarray(special.sph_legendre_p_all(l_max, m_max, theta, diff_n=2))
    # Negative orders sit at the end of the order axis
    table = table[:, :, :m_max + 1]
    phase = (-1.0) ** np.arange(m_max + 1)
    table = np.sqrt(2.0 * np.pi) * phase[None, None, :, None] * table
    return table[0], table[1], table[2]


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre in colatitude x uniform in longitude"""
    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    mu_weights: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def transform(self) -> "SpectralTransform":
        return get_spectral_transform(self)

    @property
    def sin_theta(self) -> np.ndarray:
        """Per-node sin(theta)"""
        return np.repeat(np.sin(self.theta), self.n_phi)

    def frame(self) -> np.ndarray:
        """Orthonormal tangent frame (e_theta, e_phi) as (n, 3, 2)"""
        return np.stack([self.e_theta, self.e_phi], axis=-1)

    def descriptor(self) -> Dict[str, int]:
        return {"n_theta": self.n_theta, "n_phi": self.n_phi}

    def nearest_node(self, point: np.ndarray) -> int:
        return int(np.argmax(self.nodes @ np.asarray(point, dtype=float)))

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """
        Evaluate the spectral expansion of nodal values at arbitrary unit vectors

        Args:
            values: Nodal values shaped (n,) or (n, k)
            points: Unit vectors shaped (p, 3)

        Returns:
            Interpolated values shaped (p,) or (p, k)
        """
        values = np.asarray(values, dtype=float)
        batched = np.moveaxis(values, 0, -1)
        result = self.transform.evaluate(batched, np.atleast_2d(points))
        return np.moveaxis(result, -1, 0)


@lru_cache(maxsize=16)
def make_grid(n_theta: int, n_phi: int) -> SphereGrid:
    """
    Build the quadrature grid

    Args:
        n_theta: Number of colatitude samples (>= 8)
        n_phi: Number of longitude samples (even)

    Returns:
        Immutable SphereGrid shared across callers
    """
    if not isinstance(n_theta, (int, np.integer)) or not isinstance(n_phi, (int, np.integer)):
        raise ConfigurationError(f"Grid sizes must be integers, got {n_theta!r}x{n_phi!r}")
    if n_theta < config.MIN_N_THETA:
        raise ConfigurationError(f"n_theta must be >= {config.MIN_N_THETA}, got {n_theta}")
    if n_phi < 4 or n_phi % 2 != 0:
        raise ConfigurationError(f"n_phi must be even and >= 4, got {n_phi}")
    if n_phi < 2 * n_theta - 2:
        logger.warning(f"n_phi={n_phi} < 2*n_theta-2; high orders will be truncated")

    mu, mu_weights = legendre.leggauss(n_theta)
    # North to south
    mu = mu[::-1].copy()
    mu_weights = mu_weights[::-1].copy()
    theta = np.arccos(mu)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi

    sin_t = np.sin(theta)[:, None]
    cos_t = np.cos(theta)[:, None]
    cos_p = np.cos(phi)[None, :]
    sin_p = np.sin(phi)[None, :]
    ones = np.ones((n_theta, n_phi))

    nodes = np.stack([sin_t * cos_p, sin_t * sin_p, cos_t * ones], axis=-1).reshape(-1, 3)
    e_theta = np.stack([cos_t * cos_p, cos_t * sin_p, -sin_t * ones], axis=-1).reshape(-1, 3)
    e_phi = np.stack([-sin_p * ones, cos_p * ones, 0.0 * ones], axis=-1).reshape(-1, 3)
    weights = (mu_weights[:, None] * (2.0 * np.pi / n_phi) * ones).ravel()

    grid = SphereGrid(
        n_theta=int(n_theta), n_phi=int(n_phi), theta=theta, phi=phi,
        mu_weights=mu_weights, nodes=nodes, weights=weights,
        e_theta=e_theta, e_phi=e_phi,
    )
    logger.debug(f"Built {n_theta}x{n_phi} grid, sum(weights)-4pi={weights.sum() - 4 * np.pi:.2e}")
    return grid


class SpectralTransform:
    """Real spherical-harmonic analysis/synthesis and spectral derivatives on a grid"""

    def __init__(self, grid: SphereGrid):
        """
        Precompute Legendre tables and per-order operators

        Args:
            grid: Grid the transform acts on
        """
        self.grid = grid
        self.l_max = grid.n_theta - 1
        self.m_max = min(self.l_max, grid.n_phi // 2 - 1)
        self._nt = grid.n_theta
        self._np = grid.n_phi

        P, dP, ddP = normalized_legendre(self.l_max, self.m_max, grid.theta)
        self.legendre = P
        self._m = np.arange(self.m_max + 1, dtype=float)
        self._cos = np.cos(np.outer(grid.phi, self._m))
        self._sin = np.sin(np.outer(grid.phi, self._m))
        self._scale_c = np.where(self._m == 0, 1.0 / self._np, 2.0 / self._np)
        self._scale_s = 2.0 / self._np
        w = grid.mu_weights
        self._weights = w
        # Per-order operators acting on columns of latitude values
        self._proj = np.einsum("lmi,lmj,j->mij", P, P, w)
        self._dtheta = np.einsum("lmi,lmj,j->mij", dP, P, w)
        self._dtheta2 = np.einsum("lmi,lmj,j->mij", ddP, P, w)
        self._sin_nodes = grid.sin_theta
        self._cos_nodes = np.repeat(np.cos(grid.theta), grid.n_phi)

    def _to_grid(self, f: np.ndarray) -> np.ndarray:
        return f.reshape(f.shape[:-1] + (self._nt, self._np))

    def _analysis(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grid_values = self._to_grid(f)
        return (grid_values @ self._cos) * self._scale_c, (grid_values @ self._sin) * self._scale_s

    def _synthesis(self, Fc: np.ndarray, Fs: np.ndarray) -> np.ndarray:
        values = Fc @ self._cos.T + Fs @ self._sin.T
        return values.reshape(values.shape[:-2] + (self._nt * self._np,))

    @staticmethod
    def _per_m(ops: np.ndarray, F: np.ndarray) -> np.ndarray:
        return np.einsum("mij,...jm->...im", ops, F)

    @staticmethod
    def _per_m_transposed(ops: np.ndarray, F: np.ndarray) -> np.ndarray:
        return np.einsum("mji,...jm->...im", ops, F)

    def coefficients(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Cosine and sine coefficients A[l, m], B[l, m] of nodal values"""
        Fc, Fs = self._analysis(np.asarray(f, dtype=float))
        A = np.einsum("lmj,j,...jm->...lm", self.legendre, self._weights, Fc)
        B = np.einsum("lmj,j,...jm->...lm", self.legendre, self._weights, Fs)
        return A, B

    def filter(self, f: np.ndarray) -> np.ndarray:
        """Project onto the resolved band"""
        Fc, Fs = self._analysis(np.asarray(f, dtype=float))
        return self._synthesis(self._per_m(self._proj, Fc), self._per_m(self._proj, Fs))

    def derivatives(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Return (d/dtheta f, d/dphi f) at the nodes"""
        Fc, Fs = self._analysis(np.asarray(f, dtype=float))
        f_theta = self._synthesis(self._per_m(self._dtheta, Fc), self._per_m(self._dtheta, Fs))
        pc = self._per_m(self._proj, Fc)
        ps = self._per_m(self._proj, Fs)
        f_phi = self._synthesis(self._m * ps, -self._m * pc)
        return f_theta, f_phi

    def second_derivatives(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (f_theta_theta, f_theta_phi, f_phi_phi) at the nodes"""
        Fc, Fs = self._analysis(np.asarray(f, dtype=float))
        tc = self._per_m(self._dtheta, Fc)
        ts = self._per_m(self._dtheta, Fs)
        f_tt = self._synthesis(self._per_m(self._dtheta2, Fc), self._per_m(self._dtheta2, Fs))
        f_tp = self._synthesis(self._m * ts, -self._m * tc)
        m2 = self._m ** 2
        f_pp = self._synthesis(-m2 * self._per_m(self._proj, Fc), -m2 * self._per_m(self._proj, Fs))
        return f_tt, f_tp, f_pp

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """
        Surface gradient in Cartesian components

        Args:
            f: Nodal values shaped (..., n)

        Returns:
            Gradient shaped (..., n, 3)
        """
        f_theta, f_phi = self.derivatives(f)
        return (f_theta[..., None] * self.grid.e_theta
                + (f_phi / self._sin_nodes)[..., None] * self.grid.e_phi)

    def hessian(self, f: np.ndarray) -> np.ndarray:
        """
        Gradient of the gradient, both in Cartesian components

        Equals the round covariant Hessian on tangent pairs plus the normal
        term -x (x) grad f, evaluated from exact spectral second derivatives.

        Args:
            f: Nodal values shaped (..., n)

        Returns:
            H[..., n, c, d] = d-th gradient component of the c-th gradient component
        """
        f = np.asarray(f, dtype=float)
        f_theta, f_phi = self.derivatives(f)
        f_tt, f_tp, f_pp = self.second_derivatives(f)
        s = self._sin_nodes
        k = self._cos_nodes
        e1 = self.grid.e_theta
        e2 = self.grid.e_phi
        mixed = (f_tp - k * f_phi / s) / s
        azimuthal = f_pp / s ** 2 + k * f_theta / s
        gradient = f_theta[..., None] * e1 + (f_phi / s)[..., None] * e2
        e11 = np.einsum("ni,nj->nij", e1, e1)
        e12 = np.einsum("ni,nj->nij", e1, e2)
        e22 = np.einsum("ni,nj->nij", e2, e2)
        return (f_tt[..., None, None] * e11
                + mixed[..., None, None] * (e12 + np.swapaxes(e12, -1, -2))
                + azimuthal[..., None, None] * e22
                - np.einsum("ni,...nj->...nij", self.grid.nodes, gradient))

    def gradient_adjoint(self, v: np.ndarray) -> np.ndarray:
        """
        Euclidean adjoint of gradient() on nodal arrays

        Args:
            v: Vector values shaped (..., n, 3)

        Returns:
            Nodal values shaped (..., n)
        """
        v = np.asarray(v, dtype=float)
        u_theta = self._to_grid((v * self.grid.e_theta).sum(-1))
        u_phi = self._to_grid((v * self.grid.e_phi).sum(-1) / self._sin_nodes)

        Fc_adj = self._per_m_transposed(self._dtheta, u_theta @ self._cos)
        Fs_adj = self._per_m_transposed(self._dtheta, u_theta @ self._sin)
        Fs_adj = Fs_adj + self._per_m_transposed(self._proj, self._m * (u_phi @ self._cos))
        Fc_adj = Fc_adj + self._per_m_transposed(self._proj, -self._m * (u_phi @ self._sin))

        values = (Fc_adj * self._scale_c) @ self._cos.T + (Fs_adj * self._scale_s) @ self._sin.T
        return values.reshape(values.shape[:-2] + (self._nt * self._np,))

    def evaluate(self, f: np.ndarray, points: np.ndarray) -> np.ndarray:
        """
        Evaluate the expansion of nodal values at arbitrary points

        Args:
            f: Nodal values shaped (..., n)
            points: Unit vectors shaped (p, 3)

        Returns:
            Values shaped (..., p)
        """
        points = np.asarray(points, dtype=float)
        points = points / np.linalg.norm(points, axis=-1, keepdims=True)
        A, B = self.coefficients(f)
        P, _, _ = normalized_legendre(self.l_max, self.m_max, np.arccos(np.clip(points[:, 2], -1.0, 1.0)))
        longitude = np.arctan2(points[:, 1], points[:, 0])
        cos_m = np.cos(np.outer(longitude, self._m))
        sin_m = np.sin(np.outer(longitude, self._m))
        C = np.einsum("...lm,lmp->...pm", A, P)
        S = np.einsum("...lm,lmp->...pm", B, P)
        return (C * cos_m).sum(-1) + (S * sin_m).sum(-1)


_transforms: Dict[Tuple[int, int], SpectralTransform] = {}


def get_spectral_transform(grid: SphereGrid) -> SpectralTransform:
    """Get or create the spectral transform for a grid"""
    key = (grid.n_theta, grid.n_phi)
    if key not in _transforms:
        _transforms[key] = SpectralTransform(grid)
    return _transforms[key]


def nodal_gradient(grid: SphereGrid, values: np.ndarray) -> np.ndarray:
    """Gradient of a node-leading array (n, ...) -> (n, ..., 3)"""
    batched = np.moveaxis(np.asarray(values, dtype=float), 0, -1)
    return np.moveaxis(grid.transform.gradient(batched), -2, 0)


def nodal_hessian(grid: SphereGrid, values: np.ndarray) -> np.ndarray:
    """Ambient Hessian of a node-leading array (n, ...) -> (n, ..., 3, 3)"""
    batched = np.moveaxis(np.asarray(values, dtype=float), 0, -1)
    return np.moveaxis(grid.transform.hessian(batched), -3, 0)


def tangent_projector(nodes: np.ndarray) -> np.ndarray:
    return np.eye(3)[None, :, :] - np.einsum("ni,nj->nij", nodes, nodes)


def frame_components(grid: SphereGrid, tensor: np.ndarray) -> np.ndarray:
    """Components e_i^T T e_j in the orthonormal (e_theta, e_phi) frame"""
    frame = grid.frame()
    return np.einsum("nai,nab,nbj->nij", frame, tensor, frame)


def from_frame_components(grid: SphereGrid, components: np.ndarray) -> np.ndarray:
    """Inverse of frame_components for tangential tensors"""
    frame = grid.frame()
    return np.einsum("nai,nij,nbj->nab", frame, components, frame)


# ---------------------------------------------------------------------------
# Field types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per grid node"""
    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise ConfigurationError(
                f"ScalarField needs {self.grid.size} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def min(self) -> float:
        return float(np.min(self.values))

    def max(self) -> float:
        return float(np.max(self.values))


@dataclass(frozen=True, eq=False)
class Sym2Field:
    """Symmetric 2-tensor field stored as tangential ambient 3x3 matrices"""
    grid: SphereGrid
    tensor: np.ndarray

    def __post_init__(self):
        tensor = np.asarray(self.tensor, dtype=float)
        if tensor.shape != (self.grid.size, 3, 3):
            raise ConfigurationError(
                f"Sym2Field needs shape ({self.grid.size}, 3, 3), got {tensor.shape}")
        projector = tangent_projector(self.grid.nodes)
        tensor = projector @ (0.5 * (tensor + np.swapaxes(tensor, 1, 2))) @ projector
        tensor = 0.5 * (tensor + np.swapaxes(tensor, 1, 2))
        object.__setattr__(self, "tensor", tensor)

    @classmethod
    def round(cls, grid: SphereGrid, scale: float = 1.0) -> "Sym2Field":
        """scale * g0"""
        return cls(grid, scale * tangent_projector(grid.nodes))

    @classmethod
    def conformal(cls, grid: SphereGrid, factor: np.ndarray) -> "Sym2Field":
        """factor * g0 for a nodal factor"""
        return cls(grid, np.asarray(factor, dtype=float)[:, None, None] * tangent_projector(grid.nodes))

    @classmethod
    def from_frame(cls, grid: SphereGrid, components: np.ndarray) -> "Sym2Field":
        return cls(grid, from_frame_components(grid, components))

    def __add__(self, other: "Sym2Field") -> "Sym2Field":
        return Sym2Field(self.grid, self.tensor + other.tensor)

    def scaled(self, factor: float) -> "Sym2Field":
        return Sym2Field(self.grid, factor * self.tensor)

    def frame_components(self) -> np.ndarray:
        return frame_components(self.grid, self.tensor)

    def chart_components(self, chart: str = "north") -> np.ndarray:
        """Components g_ij in the north or south stereographic chart at every node"""
        A, _, _ = stereographic_jets(self.grid.nodes, chart)
        return np.einsum("nai,nab,nbj->nij", A, self.tensor, A)

    def overlap_defect(self, band: float = config.CHART_BAND_WIDTH) -> float:
        """
        Max mismatch of the two chart representations under the transition map

        Args:
            band: Half-width in x3 of the equatorial overlap band

        Returns:
            Max absolute component defect over band nodes
        """
        mask = np.abs(self.grid.nodes[:, 2]) < band
        if not np.any(mask):
            return 0.0
        north = self.chart_components("north")[mask]
        south = self.chart_components("south")[mask]
        points = self.grid.nodes[mask]
        v = points[:, :2] / (1.0 - points[:, 2])[:, None]
        v2 = (v ** 2).sum(1)
        # u = v / |v|^2
        J = (np.eye(2)[None] * v2[:, None, None] - 2.0 * np.einsum("ni,nj->nij", v, v)) / (v2 ** 2)[:, None, None]
        transported = np.einsum("nki,nkl,nlj->nij", J, north, J)
        return float(np.max(np.abs(transported - south)))

    def eigenvalues(self) -> np.ndarray:
        """Per-node eigenvalues relative to g0, ascending, shape (n, 2)"""
        return np.linalg.eigvalsh(self.frame_components())

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues())))

    def trace(self) -> ScalarField:
        """tr_{g0} of the field"""
        return ScalarField(self.grid, np.trace(self.tensor, axis1=1, axis2=2))

    def check_positive_definite(self, what: str = "metric") -> None:
        lowest = self.eigenvalues()[:, 0]
        worst = int(np.argmin(lowest))
        if lowest[worst] <= 0.0:
            raise DomainError(
                f"{what} is not positive definite at node {worst} "
                f"(x={np.round(self.grid.nodes[worst], 6).tolist()}, min eigenvalue {lowest[worst]:.3e})",
                details={"node": worst, "min_eigenvalue": float(lowest[worst])})

    def area_density(self) -> np.ndarray:
        """sqrt(det) of the field relative to g0"""
        self.check_positive_definite()
        return np.sqrt(np.linalg.det(self.frame_components()))

    def zonal_defect(self) -> float:
        """
        Distance from axisymmetry about the x3 axis

        Returns:
            Max deviation of the (theta, phi) frame components from their
            longitude averages, together with the theta-phi cross term
        """
        components = self.frame_components().reshape(self.grid.n_theta, self.grid.n_phi, 2, 2)
        zonal = components.mean(axis=1, keepdims=True)
        return float(max(np.max(np.abs(components - zonal)), np.max(np.abs(components[..., 0, 1]))))


@dataclass(frozen=True, eq=False)
class UnitVectorField:
    """One unit 3-vector per grid node"""
    grid: SphereGrid
    directions: np.ndarray

    def __post_init__(self):
        directions = np.asarray(self.directions, dtype=float)
        if directions.shape != (self.grid.size, 3):
            raise ConfigurationError(
                f"UnitVectorField needs shape ({self.grid.size}, 3), got {directions.shape}")
        defect = np.max(np.abs((directions ** 2).sum(1) - 1.0))
        if defect > 1e-12:
            raise DomainError(f"Directions are not unit vectors (max defect {defect:.2e})")
        object.__setattr__(self, "directions", directions)

    @classmethod
    def normalized(cls, grid: SphereGrid, vectors: np.ndarray) -> "UnitVectorField":
        vectors = np.asarray(vectors, dtype=float)
        return cls(grid, vectors / np.linalg.norm(vectors, axis=1, keepdims=True))

    def at(self, point: np.ndarray) -> np.ndarray:
        """Spectrally interpolated direction at an arbitrary point, renormalized"""
        value = self.grid.interpolate(self.directions, np.atleast_2d(point))[0]
        return value / np.linalg.norm(value)


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------

def stereographic_jets(points: np.ndarray, chart: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    First three derivatives of the stereographic parametrization at given points

    The north chart projects from the south pole (u = (x, y)/(1 + z)), the south
    chart from the north pole (u = (x, y)/(1 - z)).

    Args:
        points: Unit vectors (n, 3)
        chart: "north" or "south"

    Returns:
        Tuple (A, B, C) with A[n, a, i] = d_i X^a, B[n, a, i, j], C[n, a, i, j, k]
    """
    if chart not in CHARTS:
        raise ConfigurationError(f"Unknown chart {chart!r}")
    s = 1.0 if chart == "north" else -1.0
    u = points[:, :2] / (1.0 + s * points[:, 2])[:, None]
    n = u.shape[0]
    eye = np.eye(2)
    phi = 1.0 / (1.0 + (u ** 2).sum(1))
    p2 = (phi ** 2)[:, None, None]
    p3 = (phi ** 3)[:, None, None]

    d1 = -2.0 * u * (phi ** 2)[:, None]
    d2 = -2.0 * eye[None] * p2 + 8.0 * np.einsum("ni,nj->nij", u, u) * p3
    d3 = (8.0 * (phi ** 3)[:, None, None, None]
          * (np.einsum("ij,nk->nijk", eye, u) + np.einsum("ik,nj->nijk", eye, u)
             + np.einsum("jk,ni->nijk", eye, u))
          - 48.0 * (phi ** 4)[:, None, None, None] * np.einsum("ni,nj,nk->nijk", u, u, u))

    A = np.zeros((n, 3, 2))
    A[:, :2, :] = 2.0 * eye[None] * phi[:, None, None] + 2.0 * np.einsum("na,ni->nai", u, d1)
    A[:, 2, :] = 2.0 * s * d1

    B = np.zeros((n, 3, 2, 2))
    B[:, :2] = (2.0 * np.einsum("ai,nj->naij", eye, d1) + 2.0 * np.einsum("aj,ni->naij", eye, d1)
                + 2.0 * np.einsum("na,nij->naij", u, d2))
    B[:, 2] = 2.0 * s * d2

    C = np.zeros((n, 3, 2, 2, 2))
    C[:, :2] = (2.0 * (np.einsum("ai,njk->naijk", eye, d2) + np.einsum("aj,nik->naijk", eye, d2)
                       + np.einsum("ak,nij->naijk", eye, d2))
                + 2.0 * np.einsum("na,nijk->naijk", u, d3))
    C[:, 2] = 2.0 * s * d3
    return A, B, C


def _stitch(grid: SphereGrid, compute: Callable[[np.ndarray, str], np.ndarray],
            band: float = config.CHART_BAND_WIDTH) -> np.ndarray:
    """Blend chart-wise results with a smooth partition of unity across the equator"""
    z = grid.nodes[:, 2]
    t = np.clip((z + band) / (2.0 * band), 0.0, 1.0)
    weight = t * t * (3.0 - 2.0 * t)
    out = np.zeros(grid.size)
    north = weight > 0.0
    south = weight < 1.0
    out[north] += weight[north] * compute(north, "north")
    out[south] += (1.0 - weight[south]) * compute(south, "south")
    return out


def _chart_metric_jets(tensor: np.ndarray, d_tensor: np.ndarray, dd_tensor: np.ndarray,
                       jets: Tuple[np.ndarray, np.ndarray, np.ndarray]):
    """Chart metric g_ij with first and second coordinate derivatives"""
    A, B, C = jets
    T = tensor
    Tk = np.einsum("nabc,nck->nabk", d_tensor, A)
    Tkl = (np.einsum("nabcd,nck,ndl->nabkl", dd_tensor, A, A)
           + np.einsum("nabc,nckl->nabkl", d_tensor, B))

    g = np.einsum("nai,nab,nbj->nij", A, T, A)
    dg = (np.einsum("naik,nab,nbj->nijk", B, T, A)
          + np.einsum("nai,nab,nbjk->nijk", A, T, B)
          + np.einsum("nai,nabk,nbj->nijk", A, Tk, A))
    ddg = (np.einsum("naikl,nab,nbj->nijkl", C, T, A)
           + np.einsum("naik,nabl,nbj->nijkl", B, Tk, A)
           + np.einsum("naik,nab,nbjl->nijkl", B, T, B)
           + np.einsum("nail,nab,nbjk->nijkl", B, T, B)
           + np.einsum("nai,nabl,nbjk->nijkl", A, Tk, B)
           + np.einsum("nai,nab,nbjkl->nijkl", A, T, C)
           + np.einsum("nail,nabk,nbj->nijkl", B, Tk, A)
           + np.einsum("nai,nabkl,nbj->nijkl", A, Tkl, A)
           + np.einsum("nai,nabk,nbjl->nijkl", A, Tk, B))
    return g, dg, ddg


def _christoffel(g: np.ndarray, dg: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse metric and Christoffel symbols Gamma[n, l, i, j]"""
    ginv = np.linalg.inv(g)
    first_kind = 0.5 * (np.swapaxes(dg, 2, 3) + dg - np.einsum("nijm->nmij", dg))
    return ginv, np.einsum("nlm,nmij->nlij", ginv, first_kind)


def _tensor_derivatives(metric: Sym2Field) -> Tuple[np.ndarray, np.ndarray]:
    d_tensor = nodal_gradient(metric.grid, metric.tensor)
    dd_tensor = nodal_hessian(metric.grid, metric.tensor)
    return d_tensor, dd_tensor


def gaussian_curvature(metric: Sym2Field) -> ScalarField:
    """
    Gaussian curvature of a metric on S^2

    Computed from the coordinate curvature tensor in the two stereographic
    charts and blended across the equatorial band.

    Args:
        metric: Positive-definite Sym2Field

    Returns:
        ScalarField K
    """
    metric.check_positive_definite()
    grid = metric.grid
    d_tensor, dd_tensor = _tensor_derivatives(metric)

    def compute(mask: np.ndarray, chart: str) -> np.ndarray:
        jets = stereographic_jets(grid.nodes[mask], chart)
        g, dg, ddg = _chart_metric_jets(metric.tensor[mask], d_tensor[mask], dd_tensor[mask], jets)
        _, gamma = _christoffel(g, dg)
        r1212 = (0.5 * (ddg[:, 0, 1, 1, 0] + ddg[:, 1, 0, 0, 1] - ddg[:, 0, 0, 1, 1] - ddg[:, 1, 1, 0, 0])
                 + np.einsum("nmk,nm,nk->n", g, gamma[:, :, 1, 0], gamma[:, :, 0, 1])
                 - np.einsum("nmk,nm,nk->n", g, gamma[:, :, 1, 1], gamma[:, :, 0, 0]))
        return r1212 / np.linalg.det(g)

    return ScalarField(grid, _stitch(grid, compute))


def laplace_beltrami(metric: Sym2Field, f: ScalarField) -> ScalarField:
    """
    Laplace-Beltrami operator of a metric applied to a scalar field

    Args:
        metric: Positive-definite Sym2Field
        f: Smooth ScalarField on the same grid

    Returns:
        ScalarField Delta f
    """
    if f.grid is not metric.grid:
        raise ConfigurationError("Field and metric live on different grids")
    metric.check_positive_definite()
    grid = metric.grid
    d_tensor, dd_tensor = _tensor_derivatives(metric)
    df_ambient = grid.transform.gradient(f.values)
    ddf_ambient = grid.transform.hessian(f.values)

    def compute(mask: np.ndarray, chart: str) -> np.ndarray:
        A, B, C = stereographic_jets(grid.nodes[mask], chart)
        g, dg, _ = _chart_metric_jets(metric.tensor[mask], d_tensor[mask], dd_tensor[mask], (A, B, C))
        ginv, gamma = _christoffel(g, dg)
        df = np.einsum("nc,nck->nk", df_ambient[mask], A)
        ddf = (np.einsum("ncd,nck,ndl->nkl", ddf_ambient[mask], A, A)
               + np.einsum("nc,nckl->nkl", df_ambient[mask], B))
        return (np.einsum("nij,nij->n", ginv, ddf)
                - np.einsum("nij,nkij,nk->n", ginv, gamma, df))

    return ScalarField(grid, _stitch(grid, compute))


def integrate(field: ScalarField, area_form: Sym2Field) -> float:
    """
    Integrate a scalar field against the area form of a metric

    Args:
        field: Integrand
        area_form: Positive-definite metric whose area form is used

    Returns:
        Sum of field * sqrt(det area_form) * quadrature weight
    """
    if field.grid is not area_form.grid:
        raise ConfigurationError("Field and area form live on different grids")
    density = area_form.area_density()
    return float(np.sum(field.values * density * field.grid.weights))


def great_circle_distance(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """
    Geodesic distance on the unit sphere

    Args:
        x1: Unit vector(s) shaped (3,) or (k, 3)
        x2: Unit vector(s) of the same shape

    Returns:
        Distance(s) in radians
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    for x in (x1, x2):
        if np.max(np.abs((x ** 2).sum(-1) - 1.0)) > 1e-10:
            raise DomainError("great_circle_distance expects unit vectors")
    cross = np.linalg.norm(np.cross(x1, x2), axis=-1)
    dot = np.clip((x1 * x2).sum(-1), -1.0, 1.0)
    distance = np.arctan2(cross, dot)
    return float(distance) if distance.ndim == 0 else distance


# ---------------------------------------------------------------------------
# Harmonic tensors
# ---------------------------------------------------------------------------

def spherical_harmonic(grid: SphereGrid, l: int, m: int,
                       normalization: str = "orthonormal") -> np.ndarray:
    """
    Real spherical harmonic at the grid nodes

    Args:
        grid: Target grid
        l: Degree
        m: Signed order; m >= 0 selects cos(m phi), m < 0 selects sin(|m| phi)
        normalization: "orthonormal" (Y00 = 1/sqrt(4 pi)) or "unit" (Schmidt, Y00 = 1, Y10 = x3)

    Returns:
        Nodal values (n,)
    """
    transform = grid.transform
    if normalization not in NORMALIZATIONS:
        raise ConfigurationError(f"Unknown normalization {normalization!r}")
    if l < 0 or abs(m) > l:
        raise ConfigurationError(f"Invalid harmonic index (l={l}, m={m})")
    if l > grid.n_theta - 2 or abs(m) > transform.m_max:
        raise ConfigurationError(
            f"Harmonic (l={l}, m={m}) is beyond the resolution of a {grid.n_theta}x{grid.n_phi} grid")

    latitude = transform.legendre[l, abs(m)]
    if m >= 0:
        longitude = np.cos(m * grid.phi)
    else:
        longitude = np.sin(-m * grid.phi)
    values = np.outer(latitude, longitude).ravel()

    if normalization == "orthonormal":
        return values / (np.sqrt(2.0 * np.pi) if m == 0 else np.sqrt(np.pi))
    schmidt = np.sqrt(2.0 / (2 * l + 1)) * (1.0 if m == 0 else np.sqrt(2.0))
    return values * schmidt


def sph_harm_tensor(coeffs: CoefficientTable, grid: SphereGrid,
                    normalization: str = "orthonormal") -> Sym2Field:
    """
    Build a smooth symmetric tensor field from harmonic coefficient tables

    Args:
        coeffs: Mapping component -> {(l, m): value}; components are "conformal"
            (f * g0) or ambient Cartesian "xx", "xy", ... (tangentially projected)
        grid: Target grid
        normalization: Harmonic normalization

    Returns:
        Sym2Field (zero tensor for an empty table)
    """
    tensor = np.zeros((grid.size, 3, 3))
    projector = tangent_projector(grid.nodes)
    for component, table in coeffs.items():
        if component not in TENSOR_COMPONENTS:
            raise ConfigurationError(f"Unknown tensor component {component!r}")
        scalar = np.zeros(grid.size)
        for key, value in table.items():
            l, m = (int(key[0]), int(key[1]))
            scalar += float(value) * spherical_harmonic(grid, l, m, normalization)
        if component == "conformal":
            tensor += scalar[:, None, None] * projector
        else:
            a, b = CARTESIAN_INDEX[component]
            basis = np.zeros((3, 3))
            basis[a, b] = basis[b, a] = 1.0
            tensor += scalar[:, None, None] * basis[None]
    return Sym2Field(grid, tensor)


def random_coefficients(l_max: int, seed: int, components: Tuple[str, ...] = TENSOR_COMPONENTS,
                        axisymmetric: bool = False) -> Dict[str, Dict[Tuple[int, int], float]]:
    """
    Reproducible random band-limited coefficient table

    Args:
        l_max: Highest degree drawn
        seed: Generator seed
        components: Components to populate
        axisymmetric: Only m = 0 terms

    Returns:
        Coefficient table with N(0, 1)/(l + 1) entries
    """
    rng = np.random.default_rng(seed)
    table: Dict[str, Dict[Tuple[int, int], float]] = {}
    for component in components:
        entries: Dict[Tuple[int, int], float] = {}
        for l in range(l_max + 1):
            orders = [0] if axisymmetric else range(-l, l + 1)
            for m in orders:
                entries[(l, m)] = float(rng.standard_normal() / (l + 1))
        table[component] = entries
    return table

"""
AH metric family module for the quasilocal mass toolkit

Models g = sinh^-2(r)(dr^2 + g_r) near conformal infinity with
g_r = g0 + (r^3/3) h + e(r), and evaluates the intrinsic and extrinsic
geometry of the coordinate spheres S_r.
"""

import os
import sys
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import ConfigurationError, DomainError
from src.sphere_calculus import (
    ScalarField, SphereGrid, Sym2Field, gaussian_curvature, integrate,
    random_coefficients, sph_harm_tensor,
)
from src.minkowski import Vec4, null_pairing_margin

logger = logging.getLogger(__name__)

# Coefficient tables use the "unit" normalization (Y00 = 1, Y10 = x3)
PRESET_COEFFICIENTS: Dict[str, Dict[str, Dict[Tuple[int, int], float]]] = {
    "round": {},
    "conformal": {"conformal": {(0, 0): 1.0}},
    "dipole": {"conformal": {(0, 0): 1.0, (1, 0): 0.5}},
    "x3": {"conformal": {(1, 0): 1.0}},
    "quadrupole": {"conformal": {(0, 0): 1.0, (2, 0): 0.5}},
}
RANDOM_PRESET_PREFIX = "random_l"
PRESET_NORMALIZATION = "unit"


class EModel:
    """Base class for the higher-order remainder e(r)"""
    name = "base"

    def value(self, grid: SphereGrid, r: float) -> Sym2Field:
        raise NotImplementedError

    def derivative(self, grid: SphereGrid, r: float) -> Sym2Field:
        raise NotImplementedError

    @property
    def constant(self) -> float:
        """Declared C with ||e||, ||de/dr|| <= C r^3 for r <= 1"""
        raise NotImplementedError

    def is_axisymmetric(self) -> bool:
        return True

    def descriptor(self) -> Dict[str, Any]:
        return {"model": self.name}


class ZeroEModel(EModel):
    """e(r) = 0"""
    name = "zero"

    def value(self, grid: SphereGrid, r: float) -> Sym2Field:
        return Sym2Field(grid, np.zeros((grid.size, 3, 3)))

    def derivative(self, grid: SphereGrid, r: float) -> Sym2Field:
        return self.value(grid, r)

    @property
    def constant(self) -> float:
        return 0.0


class QuarticEModel(EModel):
    """e(r) = r^4 B for a fixed smooth tensor B"""
    name = "quartic"

    def __init__(self, tensor: Sym2Field, coefficients: Optional[Dict[str, Any]] = None):
        """
        Args:
            tensor: The fixed tensor B
            coefficients: Table B was built from, kept for reports
        """
        self.tensor = tensor
        self.coefficients = coefficients or {}

    def value(self, grid: SphereGrid, r: float) -> Sym2Field:
        return self.tensor.scaled(r ** 4)

    def derivative(self, grid: SphereGrid, r: float) -> Sym2Field:
        return self.tensor.scaled(4.0 * r ** 3)

    @property
    def constant(self) -> float:
        return 4.0 * self.tensor.sup_norm()

    def is_axisymmetric(self) -> bool:
        scale = max(self.tensor.sup_norm(), 1.0)
        return self.tensor.zonal_defect() <= config.AXISYMMETRY_TOLERANCE * scale

    def descriptor(self) -> Dict[str, Any]:
        return {"model": self.name, "constant": self.constant,
                "coefficients": _table_to_json(self.coefficients)}


@dataclass(frozen=True, eq=False)
class AHFamily:
    """The data (h, e) of an AH metric near conformal infinity, n = 3"""
    h: Sym2Field
    e_model: EModel = field(default_factory=ZeroEModel)
    n: int = 3
    name: str = "custom"
    coefficients: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.n != 3:
            raise ConfigurationError(f"Only n = 3 is supported, got n = {self.n}")

    @property
    def grid(self) -> SphereGrid:
        return self.h.grid

    def g_r(self, r: float) -> Sym2Field:
        """g0 + (r^3/3) h + e(r)"""
        tensor = (Sym2Field.round(self.grid).tensor + (r ** 3 / 3.0) * self.h.tensor
                  + self.e_model.value(self.grid, r).tensor)
        return Sym2Field(self.grid, tensor)

    def dg_r(self, r: float) -> Sym2Field:
        """d/dr g_r = r^2 h + de/dr"""
        return Sym2Field(self.grid, r ** 2 * self.h.tensor + self.e_model.derivative(self.grid, r).tensor)

    @cached_property
    def r_max(self) -> float:
        return compute_r_max(self)

    @cached_property
    def axisymmetric(self) -> bool:
        scale = max(self.h.sup_norm(), 1.0)
        return (self.h.zonal_defect() <= config.AXISYMMETRY_TOLERANCE * scale
                and self.e_model.is_axisymmetric())

    def descriptor(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.n,
            "h": _table_to_json(self.coefficients),
            "e": self.e_model.descriptor(),
            "grid": self.grid.descriptor(),
        }


@dataclass(frozen=True, eq=False)
class CoordinateSphere:
    """The level set {r = const} with its induced metric"""
    r: float
    gamma: Sym2Field
    family: AHFamily

    def area(self) -> float:
        return integrate(ScalarField(self.gamma.grid, np.ones(self.gamma.grid.size)), self.gamma)


def _table_to_json(table: Dict[str, Any]) -> Dict[str, Any]:
    """Coefficient tables keyed by 'l,m' strings, sorted for stable output"""
    result = {}
    for component in sorted(table):
        entries = table[component]
        if isinstance(entries, dict):
            result[component] = {f"{int(k[0])},{int(k[1])}": float(v)
                                 for k, v in sorted(entries.items(), key=lambda kv: (kv[0][0], kv[0][1]))}
        else:
            result[component] = entries
    return result


def _min_eigenvalue(family: AHFamily, r: float) -> float:
    return float(np.min(family.g_r(r).eigenvalues()[:, 0]))


def compute_r_max(family: AHFamily) -> float:
    """
    Largest r below which g_r stays positive definite, capped at R_MAX_CAP

    Scans a uniform r-grid for the first sign change of the minimum eigenvalue
    of g_r over nodes, then bisects.
    """
    radii = np.linspace(0.0, config.R_MAX_CAP, config.R_MAX_SCAN_POINTS + 1)[1:]
    lower = 0.0
    for r in radii:
        if _min_eigenvalue(family, r) <= config.POSITIVITY_MARGIN:
            upper = float(r)
            break
        lower = float(r)
    else:
        return float(config.R_MAX_CAP)

    for _ in range(config.R_MAX_BISECTION_STEPS):
        middle = 0.5 * (lower + upper)
        if _min_eigenvalue(family, middle) > config.POSITIVITY_MARGIN:
            lower = middle
        else:
            upper = middle
    logger.debug(f"r_max for family '{family.name}': {lower:.6f}")
    return lower


def _check_radius(family: AHFamily, r: float) -> None:
    if not np.isfinite(r) or r <= 0.0:
        raise DomainError(f"Radius must be positive, got r = {r}")
    if r >= family.r_max:
        raise DomainError(f"r = {r} is not below r_max = {family.r_max:.6f} for family '{family.name}'",
                          details={"r": r, "r_max": family.r_max})


def induced_metric(family: AHFamily, r: float) -> CoordinateSphere:
    """
    Induced metric gamma_r = sinh^-2(r) g_r on S_r

    Args:
        family: AH family
        r: Radius, 0 < r < r_max

    Returns:
        CoordinateSphere
    """
    _check_radius(family, r)
    gamma = family.g_r(r).scaled(1.0 / np.sinh(r) ** 2)
    return CoordinateSphere(r=float(r), gamma=gamma, family=family)


def mean_curvature_H(family: AHFamily, r: float) -> ScalarField:
    """
    Exact mean curvature of S_r, H = 2 cosh r - (sinh r / 2) tr(g_r^-1 d_r g_r)

    Args:
        family: AH family providing d_r g_r analytically
        r: Radius, 0 < r < r_max

    Returns:
        ScalarField H
    """
    _check_radius(family, r)
    g = family.g_r(r).frame_components()
    dg = family.dg_r(r).frame_components()
    trace = np.trace(np.linalg.solve(g, dg), axis1=1, axis2=2)
    return ScalarField(family.grid, 2.0 * np.cosh(r) - 0.5 * np.sinh(r) * trace)


def scalar_curvature_R(sphere: CoordinateSphere) -> ScalarField:
    """Scalar curvature of (S_r, gamma_r), R = 2K"""
    curvature = gaussian_curvature(sphere.gamma)
    return ScalarField(curvature.grid, 2.0 * curvature.values)


def wang_mass_vector(family: AHFamily) -> Vec4:
    """
    The mass integral (int tr h, int tr h x) against the round area form

    Args:
        family: AH family

    Returns:
        Vec4
    """
    grid = family.grid
    trace = family.h.trace().values
    round_metric = Sym2Field.round(grid)
    time = integrate(ScalarField(grid, trace), round_metric)
    space = [integrate(ScalarField(grid, trace * grid.nodes[:, a]), round_metric) for a in range(3)]
    return Vec4(time, tuple(space))


def wang_inequality(family: AHFamily) -> Tuple[bool, float]:
    """
    Positive mass inequality int tr h >= |int tr h x|

    Returns:
        Tuple (holds, margin) with margin = t - |x| of the mass vector
    """
    margin = null_pairing_margin(wang_mass_vector(family))
    return margin >= 0.0, margin


def check_assumption_a(family: AHFamily, radii: Sequence[float] = tuple(config.ASSUMPTION_A_RADII)) -> Dict[str, Any]:
    """
    Measure ||e(r)|| / r^3 and ||de/dr|| / r^3 against the model's declared constant

    Args:
        family: AH family
        radii: Sample radii (each <= 1)

    Returns:
        Dict with the measured ratios and the declared constant
    """
    constant = family.e_model.constant
    value_ratios: List[float] = []
    derivative_ratios: List[float] = []
    for r in radii:
        value_ratios.append(family.e_model.value(family.grid, r).sup_norm() / r ** 3)
        derivative_ratios.append(family.e_model.derivative(family.grid, r).sup_norm() / r ** 3)
    worst = max(value_ratios + derivative_ratios) if radii else 0.0
    report = {
        "model": family.e_model.name,
        "constant": constant,
        "radii": [float(r) for r in radii],
        "value_ratios": value_ratios,
        "derivative_ratios": derivative_ratios,
    }
    if worst > constant * (1.0 + 1e-12) + 1e-14:
        raise DomainError(
            f"e model '{family.e_model.name}' exceeds its declared bound: {worst:.3e} > {constant:.3e}",
            details=report)
    return report


def volume_form_ratio(sphere: CoordinateSphere) -> float:
    """Area of S_r times sinh^2 r over 4 pi; tends to 1 as r -> 0"""
    return sphere.area() * np.sinh(sphere.r) ** 2 / (4.0 * np.pi)


def _min_gaussian_curvature(family: AHFamily, r: float) -> float:
    return gaussian_curvature(induced_metric(family, r).gamma).min()


def convexity_radius(family: AHFamily) -> float:
    """
    Largest r such that every scanned S_s with s <= r has K > 0

    Measured on the family's grid: a scan over (0, r_max) followed by bisection
    at the first sample where min K <= 0. Returns r_max when no sample fails.
    """
    r_max = family.r_max
    radii = np.linspace(0.0, r_max, config.CONVEXITY_SCAN_POINTS + 1)[1:-1]
    lower = 0.0
    for r in radii:
        if _min_gaussian_curvature(family, r) <= 0.0:
            upper = float(r)
            break
        lower = float(r)
    else:
        return float(r_max)

    for _ in range(config.CONVEXITY_BISECTION_STEPS):
        middle = 0.5 * (lower + upper)
        if _min_gaussian_curvature(family, middle) > 0.0:
            lower = middle
        else:
            upper = middle
    logger.info(f"Convexity radius for family '{family.name}': {lower:.6f}")
    return lower


# ---------------------------------------------------------------------------
# Family construction
# ---------------------------------------------------------------------------

def random_family_coefficients(l_max: int, seed: int, amplitude: float = 1.0,
                               grid: Optional[SphereGrid] = None) -> Dict[str, Dict[Tuple[int, int], float]]:
    """Random table over all tensor components, rescaled so ||h||_inf = amplitude on the grid"""
    table = random_coefficients(l_max, seed)
    if grid is None:
        return table
    norm = sph_harm_tensor(table, grid, PRESET_NORMALIZATION).sup_norm()
    scale = amplitude / norm if norm > 0.0 else 0.0
    return {component: {key: value * scale for key, value in entries.items()}
            for component, entries in table.items()}


def build_family(grid: SphereGrid, preset: Optional[str] = None,
                 coefficients: Optional[Dict[str, Dict[Tuple[int, int], float]]] = None,
                 e_model: str = "zero", e_amplitude: float = config.QUARTIC_DEFAULT_AMPLITUDE,
                 e_coefficients: Optional[Dict[str, Dict[Tuple[int, int], float]]] = None,
                 seed: int = 0, amplitude: float = 1.0,
                 normalization: str = PRESET_NORMALIZATION) -> AHFamily:
    """
    Build an AHFamily from a preset name or a coefficient table

    Args:
        grid: Target grid
        preset: One of PRESET_COEFFICIENTS or "random_l<L>"
        coefficients: Explicit h table (overrides preset)
        e_model: "zero" or "quartic"
        e_amplitude: Scale of the default quartic tensor
        e_coefficients: Explicit table for the quartic tensor
        seed: Seed for random presets
        amplitude: Sup norm of random presets
        normalization: Harmonic normalization of explicit tables

    Returns:
        AHFamily
    """
    name = preset or "custom"
    if coefficients is not None:
        table = coefficients
    elif preset in PRESET_COEFFICIENTS:
        table = PRESET_COEFFICIENTS[preset]
    elif preset is not None and preset.startswith(RANDOM_PRESET_PREFIX):
        try:
            l_max = int(preset[len(RANDOM_PRESET_PREFIX):])
        except ValueError:
            raise ConfigurationError(f"Malformed random preset {preset!r}")
        table = random_family_coefficients(l_max, seed, amplitude, grid)
        name = f"{preset}-seed{seed}"
    else:
        raise ConfigurationError(f"Unknown family preset {preset!r}")

    h = sph_harm_tensor(table, grid, normalization)

    if e_model == "zero":
        model: EModel = ZeroEModel()
    elif e_model == "quartic":
        e_table = e_coefficients if e_coefficients is not None else {"conformal": {(2, 0): e_amplitude}}
        model = QuarticEModel(sph_harm_tensor(e_table, grid, normalization), e_table)
    else:
        raise ConfigurationError(f"Unknown e model {e_model!r}")

    logger.info(f"Built family '{name}' on {grid.n_theta}x{grid.n_phi} grid (e model: {model.name})")
    return AHFamily(h=h, e_model=model, name=name, coefficients=dict(table))

"""
Quasilocal mass pipeline for the AH toolkit

For each radius r: induced metric -> isometric embedding into H^3 ->
normalization -> shape operator -> int (H0 - H) X dmu_gamma. A sweep over
radii is extrapolated to r -> 0 with a power-law fit and compared with half
the mass integral of the family.
"""

import os
import sys
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from tqdm import tqdm

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import AHMassError, ConfigurationError, SolverError
from src.sphere_calculus import ScalarField, integrate
from src.minkowski import Vec4, causal_class, default_causal_tolerance, null_pairing_margin
from src.ah_metric import (
    AHFamily, CoordinateSphere, induced_metric, mean_curvature_H, wang_mass_vector,
)
from src.h3_embedding import (
    EmbeddingH3, SolverOptions, embed_axisymmetric, embed_general, embed_round, round_initialization,
)
from src.extrinsic_geometry import (
    gauss_equation_defect, h0_lower_bound, li_weinstein_bound, shape_operator,
)
from src.normalization import NormalizedEmbedding, angular_deviation, normalize

logger = logging.getLogger(__name__)

FIT_OK = "ok"
FIT_FLAT = "flat"
FIT_NONE = "no-fit"


@dataclass(frozen=True, eq=False)
class MassSample:
    """Quasilocal mass vector of one coordinate sphere"""
    r: float
    ql_mass: Vec4
    h0_minus_h: ScalarField
    embedding_residual: float
    causal_class: str
    null_margin: float
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "r": self.r,
            "ql_mass": self.ql_mass.to_list(),
            "embedding_residual": self.embedding_residual,
            "causal_class": self.causal_class,
            "null_margin": self.null_margin,
            "h0_minus_h": {"min": self.h0_minus_h.min(), "max": self.h0_minus_h.max()},
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True, eq=False)
class MassReport:
    """Radius sweep with its r -> 0 extrapolation"""
    family: Dict[str, Any]
    samples: List[MassSample]
    fitted_limit: Optional[Vec4]
    fit_exponent: Optional[float]
    fit_status: str
    wang_half: Vec4
    causal_verdicts: List[str]
    limit_verdict: Optional[str]

    @property
    def limit_error(self) -> Optional[float]:
        """|fitted_limit - wang_half|_inf"""
        if self.fitted_limit is None:
            return None
        return (self.fitted_limit - self.wang_half).inf_norm()

    def to_json(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "samples": [sample.to_json() for sample in self.samples],
            "fitted_limit": self.fitted_limit.to_list() if self.fitted_limit is not None else None,
            "fit_exponent": self.fit_exponent,
            "fit_status": self.fit_status,
            "wang_half": self.wang_half.to_list(),
            "limit_error": self.limit_error,
            "causal_verdicts": self.causal_verdicts,
            "limit_verdict": self.limit_verdict,
        }


def _run_stage(stage: str, func: Callable, *args, **kwargs):
    """Run a pipeline stage, tagging toolkit errors with the stage name"""
    try:
        return func(*args, **kwargs)
    except AHMassError as e:
        if e.stage is None:
            e.stage = stage
        logger.error(f"Error in stage '{stage}': {str(e)}")
        raise


def mass_causal_tolerance(v: Vec4) -> float:
    return max(default_causal_tolerance(v), config.MASS_CAUSAL_TOLERANCE)


def _round_factor(sphere: CoordinateSphere) -> Optional[float]:
    """c if gamma = c g0 to rounding, else None"""
    components = sphere.gamma.frame_components()
    c = float(np.mean(components[:, 0, 0]))
    defect = np.max(np.abs(components - c * np.eye(2)[None]))
    return c if defect <= 1e-13 * abs(c) else None


def fit_power_law(radii: Sequence[float], values: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[float], str]:
    """
    Fit M(r) = M0 + A r^p with p shared across components

    The exponent is fitted on the component that varies most over the sweep;
    M0 then follows from linear least squares per component.

    Args:
        radii: Sample radii
        values: Mass vectors shaped (k, 4)

    Returns:
        Tuple (M0, p, status)
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.size < config.MIN_FIT_SAMPLES:
        return None, None, FIT_NONE

    variation = values.max(axis=0) - values.min(axis=0)
    dominant = int(np.argmax(variation))
    if variation[dominant] <= config.FLAT_FIT_TOLERANCE * (1.0 + np.max(np.abs(values))):
        return values[np.argmin(radii)].copy(), None, FIT_FLAT

    order = np.argsort(radii)
    steps = np.diff(values[order, dominant])
    if not (np.all(steps > 0.0) or np.all(steps < 0.0)):
        logger.warning("Mass samples are not monotone in r; no extrapolation")
        return None, None, FIT_NONE

    def design(p: float) -> np.ndarray:
        return np.column_stack([np.ones_like(radii), radii ** p])

    def misfit(p: float) -> float:
        coefficients = np.linalg.lstsq(design(p), values[:, dominant], rcond=None)[0]
        return float(np.sum((design(p) @ coefficients - values[:, dominant]) ** 2))

    result = minimize_scalar(misfit, bounds=config.FIT_EXPONENT_BOUNDS, method="bounded",
                             options={"xatol": 1e-10})
    p = float(result.x)
    coefficients = np.linalg.lstsq(design(p), values, rcond=None)[0]
    return coefficients[0], p, FIT_OK


class MassPipeline:
    """End-to-end quasilocal mass computation"""

    def __init__(self, opts: Optional[SolverOptions] = None,
                 centering: str = config.DEFAULT_CENTERING,
                 verify_general: bool = config.SOLVER_VERIFY_GENERAL,
                 compare_centerings: bool = False,
                 max_workers: int = config.MAX_WORKERS,
                 quiet: bool = False):
        """
        Initialize the mass pipeline

        Args:
            opts: General solver options
            centering: Ball centering used for normalization
            verify_general: Also run the general solver when the axisymmetric one applies
            compare_centerings: Also compute the mass with the other centering
            max_workers: Radii processed concurrently
            quiet: Disable progress bars
        """
        self.opts = opts or SolverOptions()
        self.centering = centering
        self.verify_general = verify_general
        self.compare_centerings = compare_centerings
        self.max_workers = max(1, int(max_workers))
        self.quiet = quiet

    def embed(self, sphere: CoordinateSphere) -> Tuple[EmbeddingH3, Dict[str, Any]]:
        """
        Embed a coordinate sphere, preferring the most accurate applicable path

        Returns:
            Tuple (embedding, diagnostics)
        """
        diagnostics: Dict[str, Any] = {}
        factor = _round_factor(sphere)
        if factor is not None:
            round_radius = float(np.arcsinh(1.0 / np.sqrt(factor)))
            embedding = embed_round(round_radius, sphere.gamma.grid)
            embedding.metadata.update({"r": float(sphere.r), "round_radius": round_radius})
        elif sphere.family.axisymmetric:
            embedding = embed_axisymmetric(sphere.gamma, self.opts.tolerance)
            if self.verify_general:
                general = embed_general(sphere.gamma, round_initialization(sphere.gamma), self.opts)
                diagnostics["general_displacement"] = self._displacement(embedding, general)
        else:
            embedding = embed_general(sphere.gamma, round_initialization(sphere.gamma), self.opts)

        if not embedding.residual <= self.opts.tolerance:
            raise SolverError(f"Sample rejected: embedding residual {embedding.residual:.3e} "
                              f"exceeds {self.opts.tolerance:.1e}", residual=embedding.residual)
        diagnostics["method"] = embedding.metadata.get("method")
        return embedding, diagnostics

    def _displacement(self, first: EmbeddingH3, second: EmbeddingH3) -> float:
        """Max node displacement in R^{3,1} after normalizing both embeddings"""
        a = normalize(first, self.centering).emb.points()
        b = normalize(second, self.centering).emb.points()
        return float(np.max(np.abs(a - b)))

    def _mass_vector(self, sphere: CoordinateSphere, norm: NormalizedEmbedding,
                     H: ScalarField) -> Tuple[Vec4, ScalarField, Dict[str, Any]]:
        shape = _run_stage("shape", shape_operator, norm.emb)
        difference = ScalarField(H.grid, shape.H0.values - H.values)
        X = norm.emb.points()
        components = [integrate(ScalarField(H.grid, difference.values * X[:, a]), sphere.gamma) for a in range(4)]
        return Vec4.from_array(components), difference, {
            "gauss_equation_defect": gauss_equation_defect(shape),
            "max_H0_squared": float(np.max(shape.H0.values ** 2)),
            "lambda_min": shape.lambda_min.min(),
            "lambda_max": shape.lambda_max.max(),
        }

    def ql_mass_vector(self, family: AHFamily, r: float) -> MassSample:
        """
        Quasilocal mass vector int (H0 - H) X dmu_gamma of S_r

        Args:
            family: AH family
            r: Radius below the family's convexity threshold

        Returns:
            MassSample
        """
        logger.info(f"Computing quasilocal mass of '{family.name}' at r = {r}")
        # Step 1: induced metric
        sphere = _run_stage("induced_metric", induced_metric, family, r)

        # Step 2: isometric embedding
        embedding, diagnostics = _run_stage("embed", self.embed, sphere)

        # Step 3: center and gauge
        norm = _run_stage("normalize", normalize, embedding, self.centering)

        # Step 4: mean curvatures and the mass integral
        H = _run_stage("mean_curvature", mean_curvature_H, family, r)
        ql_mass, difference, extrinsic = self._mass_vector(sphere, norm, H)
        diagnostics.update(extrinsic)
        diagnostics["sandwich"] = norm.sandwich.to_json()
        diagnostics["angular_deviation"] = angular_deviation(norm)
        diagnostics["li_weinstein_bound"] = _run_stage("li_weinstein", li_weinstein_bound, sphere)
        diagnostics["h0_lower_bound"] = _run_stage("li_weinstein", h0_lower_bound, sphere)

        if self.compare_centerings:
            other = "inscribed" if self.centering == "circumscribed" else "circumscribed"
            other_norm = _run_stage("normalize", normalize, embedding, other)
            other_mass, _, _ = self._mass_vector(sphere, other_norm, H)
            diagnostics["centering_difference"] = (ql_mass - other_mass).inf_norm()

        verdict = causal_class(ql_mass, mass_causal_tolerance(ql_mass))
        logger.info(f"r = {r}: ql_mass = {np.round(ql_mass.as_array(), 8).tolist()} ({verdict})")
        return MassSample(
            r=float(r), ql_mass=ql_mass, h0_minus_h=difference,
            embedding_residual=embedding.residual, causal_class=verdict,
            null_margin=null_pairing_margin(ql_mass), diagnostics=diagnostics,
        )

    def converge(self, family: AHFamily, r_list: Sequence[float]) -> MassReport:
        """
        Sweep radii and extrapolate the mass vector to r -> 0

        Args:
            family: AH family
            r_list: At least three distinct radii

        Returns:
            MassReport with samples ordered by decreasing r
        """
        radii = sorted((float(r) for r in r_list), reverse=True)
        if len(radii) < config.MIN_FIT_SAMPLES:
            raise ConfigurationError(f"converge needs at least {config.MIN_FIT_SAMPLES} radii, got {len(radii)}")
        if len(set(radii)) != len(radii):
            raise ConfigurationError(f"Radii must be distinct, got {radii}")

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = [executor.submit(self.ql_mass_vector, family, r) for r in radii]
            samples = [future.result() for future in tqdm(futures, desc="Radii", disable=self.quiet,
                                                          file=sys.stderr)]

        values = np.array([sample.ql_mass.as_array() for sample in samples])
        limit, exponent, status = fit_power_law(radii, values)
        fitted_limit = Vec4.from_array(limit) if limit is not None else None
        wang_half = wang_mass_vector(family).scaled(0.5)
        limit_verdict = (causal_class(fitted_limit, mass_causal_tolerance(fitted_limit))
                         if fitted_limit is not None else None)
        if status == FIT_NONE:
            logger.warning(f"No extrapolation for family '{family.name}'; raw samples reported")

        return MassReport(
            family=family.descriptor(), samples=samples, fitted_limit=fitted_limit,
            fit_exponent=exponent, fit_status=status, wang_half=wang_half,
            causal_verdicts=[sample.causal_class for sample in samples],
            limit_verdict=limit_verdict,
        )


def ql_mass_vector(family: AHFamily, r: float, opts: Optional[SolverOptions] = None) -> MassSample:
    """Single-radius mass sample with default pipeline settings"""
    return MassPipeline(opts).ql_mass_vector(family, r)


def converge(family: AHFamily, r_list: Sequence[float], opts: Optional[SolverOptions] = None,
             **kwargs) -> MassReport:
    """Radius sweep with default pipeline settings"""
    return MassPipeline(opts, **kwargs).converge(family, r_list)


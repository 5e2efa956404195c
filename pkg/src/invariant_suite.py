"""
Invariant suite for the AH toolkit

Runs the structural identities every computation relies on (quadrature,
Gauss-Bonnet, self-adjointness, Gauss equation, H0 bounds, ball certificates,
gauge) on one coordinate sphere of a family.
"""

import os
import sys
import logging
from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import AHMassError
from src.sphere_calculus import (
    ScalarField, gaussian_curvature, integrate, laplace_beltrami,
    random_coefficients, spherical_harmonic,
)
from src.minkowski import hyperbolic_distance
from src.ah_metric import AHFamily, check_assumption_a, induced_metric, wang_mass_vector
from src.extrinsic_geometry import (
    ball_sandwich, gauss_equation_defect, gauss_trace_defect, li_weinstein_bound, shape_operator,
)
from src.normalization import normalize
from src.mass_pipeline import MassPipeline

logger = logging.getLogger(__name__)

GAUSS_BONNET_TOLERANCE = 1e-8
SELF_ADJOINT_TOLERANCE = 1e-8
GAUSS_EQUATION_TOLERANCE = 1e-7
LI_WEINSTEIN_SLACK = 1e-6
GAUGE_TOLERANCE = 1e-8


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one invariant check"""
    name: str
    passed: bool
    value: float
    threshold: float

    def to_json(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "value": self.value, "threshold": self.threshold}


def _check(results: List[CheckResult], name: str, value: float, threshold: float,
           passed: bool = None) -> None:
    ok = bool(value <= threshold) if passed is None else bool(passed)
    results.append(CheckResult(name, ok, float(value), float(threshold)))
    if ok:
        logger.info(f"check {name}: ok ({value:.3e} <= {threshold:.1e})")
    else:
        logger.warning(f"check {name}: FAILED ({value:.3e} > {threshold:.1e})")


def _random_scalar(family: AHFamily, seed: int) -> ScalarField:
    table = random_coefficients(4, seed, components=("conformal",))["conformal"]
    values = sum(value * spherical_harmonic(family.grid, l, m) for (l, m), value in table.items())
    return ScalarField(family.grid, values)


def run_invariant_suite(family: AHFamily, r: float, pipeline: MassPipeline, seed: int = 0) -> List[CheckResult]:
    """
    Evaluate the invariant checks on S_r

    Args:
        family: AH family
        r: Radius of the sampled coordinate sphere
        pipeline: Pipeline supplying the embedding path and solver options
        seed: Seed of the random test functions

    Returns:
        List of CheckResult (a failing stage is reported as a failed check)
    """
    results: List[CheckResult] = []
    grid = family.grid

    # Step 1: substrate
    _check(results, "quadrature_area", abs(grid.weights.sum() - 4.0 * np.pi), 1e-12)
    sphere = induced_metric(family, r)
    curvature = gaussian_curvature(sphere.gamma)
    _check(results, "gauss_bonnet", abs(integrate(curvature, sphere.gamma) - 4.0 * np.pi), GAUSS_BONNET_TOLERANCE)

    f = _random_scalar(family, seed)
    g = _random_scalar(family, seed + 1)
    lhs = integrate(ScalarField(grid, f.values * laplace_beltrami(sphere.gamma, g).values), sphere.gamma)
    rhs = integrate(ScalarField(grid, g.values * laplace_beltrami(sphere.gamma, f).values), sphere.gamma)
    _check(results, "laplacian_self_adjoint", abs(lhs - rhs) / max(1.0, abs(lhs)), SELF_ADJOINT_TOLERANCE)

    # Step 2: family
    try:
        check_assumption_a(family)
        _check(results, "assumption_a", 0.0, 0.0, passed=True)
    except AHMassError as e:
        logger.warning(f"check assumption_a: {str(e)}")
        _check(results, "assumption_a", 1.0, 0.0, passed=False)
    doubled = AHFamily(h=family.h.scaled(2.0), e_model=family.e_model, name=family.name)
    linearity = (wang_mass_vector(doubled) - wang_mass_vector(family).scaled(2.0)).inf_norm()
    _check(results, "wang_linearity", linearity, 1e-10 * (1.0 + wang_mass_vector(family).inf_norm()))

    # Step 3: embedding and extrinsic identities
    try:
        embedding, _ = pipeline.embed(sphere)
        shape = shape_operator(embedding)
        norm = normalize(embedding, pipeline.centering, shape)
    except AHMassError as e:
        logger.error(f"Error building the embedding for the invariant suite: {str(e)}")
        _check(results, "embedding", np.inf, pipeline.opts.tolerance, passed=False)
        return results

    _check(results, "embedding_residual", embedding.residual, pipeline.opts.tolerance)
    _check(results, "gauss_equation", gauss_equation_defect(shape), GAUSS_EQUATION_TOLERANCE)
    _check(results, "gauss_trace", gauss_trace_defect(shape), GAUSS_EQUATION_TOLERANCE)
    bound = li_weinstein_bound(sphere)
    _check(results, "li_weinstein", float(np.max(shape.H0.values ** 2)) - bound, LI_WEINSTEIN_SLACK)
    _check(results, "sandwich_certificate", -min(norm.sandwich.in_margin, norm.sandwich.out_margin),
           config.CERTIFICATE_EPSILON)

    # Step 4: gauge of the normalized embedding
    y = [norm.angular_map.at(np.eye(3)[a]) for a in range(3)]
    gauge_defect = max(
        float(np.max(np.abs(y[0] - np.array([1.0, 0.0, 0.0])))),
        abs(y[1][2]), max(-y[1][1], 0.0), max(-y[2][2], 0.0),
    )
    _check(results, "gauge", gauge_defect, GAUGE_TOLERANCE)
    recentered = ball_sandwich(norm.emb, shape_operator(norm.emb), pipeline.centering)
    center_offset = hyperbolic_distance(recentered.center, np.array([1.0, 0.0, 0.0, 0.0]))
    _check(results, "center_at_origin", center_offset, GAUGE_TOLERANCE)
    return results


def suite_payload(results: List[CheckResult]) -> Dict[str, Any]:
    return {
        "passed": all(result.passed for result in results),
        "checks": [result.to_json() for result in results],
    }

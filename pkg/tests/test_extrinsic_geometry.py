"""
Tests for the shape operator, H0 bounds and the ball sandwich.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.sphere_calculus import ScalarField
from src.minkowski import ORIGIN, boost_to_origin, hyperbolic_distance, rotation_fixing_o
from src.ah_metric import build_family, induced_metric, scalar_curvature_R
from src.h3_embedding import SolverOptions, embed_axisymmetric, embed_general, embed_round
from src.extrinsic_geometry import (
    ShapeData, ball_sandwich, gauss_equation_defect, gauss_trace_defect, h0_lower_bound,
    li_weinstein_bound, shape_operator,
)
from utils.exceptions import ConfigurationError, DomainError


def test_geodesic_sphere_principal_curvatures(grid):
    r = 0.5
    embedding = embed_round(r, grid)
    shape = shape_operator(embedding)
    sigma = np.arcsinh(1.0 / np.sinh(r))
    assert_allclose(shape.lambda_min.values, 1.0 / np.tanh(sigma), atol=1e-9)
    assert_allclose(shape.lambda_max.values, 1.0 / np.tanh(sigma), atol=1e-9)
    assert_allclose(shape.H0.values, 2.0 * np.cosh(r), atol=1e-8)
    assert gauss_equation_defect(shape) <= 1e-7
    assert gauss_trace_defect(shape) <= 1e-7


def test_normal_is_outward_after_translation(grid):
    embedding = embed_round(0.3, grid)
    p = np.array([np.cosh(0.4), 0.0, np.sinh(0.4), 0.0])
    moved = embedding.transformed(boost_to_origin(p))
    assert shape_operator(moved).lambda_min.min() > 1.0


def test_li_weinstein_is_sharp_on_geodesic_spheres(grid):
    r = 0.3
    sphere = induced_metric(build_family(grid, "round"), r)
    assert li_weinstein_bound(sphere) == pytest.approx(4.0 * np.cosh(r) ** 2, rel=1e-9)
    assert h0_lower_bound(sphere) == pytest.approx(4.0 * np.cosh(r) ** 2, rel=1e-9)


@pytest.mark.parametrize("preset", ["x3", "dipole", "quadrupole"])
def test_extrinsic_identities_on_ah_spheres(grid, preset):
    sphere = induced_metric(build_family(grid, preset), 0.2)
    shape = shape_operator(embed_axisymmetric(sphere.gamma))
    assert gauss_equation_defect(shape) <= 1e-7
    assert gauss_trace_defect(shape) <= 1e-7
    assert np.max(shape.H0.values ** 2) <= li_weinstein_bound(sphere) + 1e-6
    R = scalar_curvature_R(sphere).values
    assert np.min(shape.H0.values ** 2 - 2.0 * (R + 2.0)) >= -1e-7


def test_ball_sandwich_of_geodesic_sphere(grid):
    r = 0.4
    embedding = embed_round(r, grid)
    sigma = np.arcsinh(1.0 / np.sinh(r))
    for centering in ("circumscribed", "inscribed"):
        sandwich = ball_sandwich(embedding, shape_operator(embedding), centering)
        assert hyperbolic_distance(sandwich.center, ORIGIN) <= 1e-8
        assert sandwich.rho_in == pytest.approx(sigma, abs=1e-8)
        assert sandwich.rho_out == pytest.approx(sigma, abs=1e-8)
        assert min(sandwich.in_margin, sandwich.out_margin) >= -1e-7


def test_ball_sandwich_finds_translated_center(grid):
    embedding = embed_round(0.3, grid)
    p = np.array([np.cosh(0.2), 0.0, 0.0, np.sinh(0.2)])
    moved = embedding.transformed(boost_to_origin(p).inverse())
    sandwich = ball_sandwich(moved, shape_operator(moved))
    assert hyperbolic_distance(sandwich.center, p) <= 1e-7


def test_ball_sandwich_rejects_unknown_centering(grid):
    embedding = embed_round(0.3, grid)
    with pytest.raises(ConfigurationError):
        ball_sandwich(embedding, shape_operator(embedding), "barycentric")


def test_ball_sandwich_requires_strict_convexity(grid):
    embedding = embed_round(0.3, grid)
    shape = shape_operator(embedding)
    flat = ScalarField(grid, np.full(grid.size, 0.9))
    weak = ShapeData(chi=shape.chi, gamma=shape.gamma, normal=shape.normal,
                     lambda_min=flat, lambda_max=shape.lambda_max, H0=shape.H0)
    with pytest.raises(DomainError):
        ball_sandwich(embedding, weak)


def test_shape_summary(grid):
    summary = shape_operator(embed_round(0.3, grid)).summary()
    assert set(summary) == {"lambda_min", "lambda_max", "H0_min", "H0_max"}


@pytest.mark.slow
def test_embedded_mean_curvature_expansion_order(loglog_slope, acceptance_grid):
    grid = acceptance_grid
    family = build_family(grid, "dipole")
    radii = [0.4, 0.3, 0.2, 0.15, 0.1]
    errors = []
    for r in radii:
        shape = shape_operator(embed_axisymmetric(induced_metric(family, r).gamma))
        errors.append(np.max(np.abs(shape.H0.values - 2.0 * np.cosh(r))))
    assert loglog_slope(radii, errors) >= 4.0


@pytest.mark.slow
def test_sandwich_radii_approach_geodesic_radius(loglog_slope, acceptance_grid):
    grid = acceptance_grid
    family = build_family(grid, "dipole")
    radii = [0.4, 0.3, 0.2, 0.15, 0.1]
    gaps = []
    for r in radii:
        embedding = embed_axisymmetric(induced_metric(family, r).gamma)
        sandwich = ball_sandwich(embedding, shape_operator(embedding))
        sigma = np.arcsinh(1.0 / np.sinh(r))
        gaps.append(max(abs(sandwich.rho_in - sigma), abs(sandwich.rho_out - sigma)))
    assert loglog_slope(radii, gaps) >= 2.5


def test_ball_sandwich_is_equivariant(grid, rng):
    embedding = embed_axisymmetric(induced_metric(build_family(grid, "dipole"), 0.2).gamma)
    base = ball_sandwich(embedding, shape_operator(embedding))
    for _ in range(3):
        Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
        direction = rng.standard_normal(3)
        distance = rng.uniform(0.05, 0.3)
        p = np.concatenate([[np.cosh(distance)], np.sinh(distance) * direction / np.linalg.norm(direction)])
        motion = boost_to_origin(p).compose(rotation_fixing_o(Q * np.sign(np.diag(R))))
        moved = embedding.transformed(motion)
        sandwich = ball_sandwich(moved, shape_operator(moved))
        assert hyperbolic_distance(sandwich.center, motion.apply(base.center)) <= 1e-6
        assert sandwich.rho_in == pytest.approx(base.rho_in, abs=1e-7)
        assert sandwich.rho_out == pytest.approx(base.rho_out, abs=1e-7)


@pytest.mark.slow
def test_principal_curvature_expansion_order(loglog_slope, acceptance_grid):
    grid = acceptance_grid
    family = build_family(grid, "dipole")
    radii = [0.4, 0.3, 0.2, 0.15, 0.1]
    errors = []
    for r in radii:
        shape = shape_operator(embed_axisymmetric(induced_metric(family, r).gamma))
        errors.append(max(np.max(np.abs(shape.lambda_min.values - np.cosh(r))),
                          np.max(np.abs(shape.lambda_max.values - np.cosh(r)))))
    assert loglog_slope(radii, errors) >= 4.0


@pytest.mark.slow
def test_gauss_closures_on_random_family(grid):
    sphere = induced_metric(build_family(grid, "random_l3", seed=7, amplitude=0.5), 0.15)
    embedding = embed_general(sphere.gamma, opts=SolverOptions(max_iterations=40))
    shape = shape_operator(embedding)
    assert gauss_equation_defect(shape) <= 1e-7
    assert gauss_trace_defect(shape) <= 1e-7

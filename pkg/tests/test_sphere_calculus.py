"""
Tests for the sphere grid, spectral transform and intrinsic curvature operators.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special

from src.sphere_calculus import (
    ScalarField, Sym2Field, UnitVectorField, gaussian_curvature, great_circle_distance,
    integrate, laplace_beltrami, make_grid, nodal_hessian, random_coefficients, sph_harm_tensor,
    spherical_harmonic, tangent_projector,
)
from utils.exceptions import ConfigurationError, DomainError


def random_metric(grid, seed: int, size: float = 0.3) -> Sym2Field:
    h = sph_harm_tensor(random_coefficients(3, seed), grid, "unit")
    return Sym2Field.round(grid) + h.scaled(size / h.sup_norm())


# ---------------------------------------------------------------------------
# Grid and quadrature
# ---------------------------------------------------------------------------


def test_quadrature_weights_sum_to_sphere_area(grid):
    assert abs(grid.weights.sum() - 4.0 * np.pi) <= 1e-12
    assert_allclose(np.linalg.norm(grid.nodes, axis=1), 1.0, atol=1e-15)


@pytest.mark.parametrize("n_theta, n_phi", [(6, 12), (16, 31), (16, 2)])
def test_make_grid_rejects_bad_sizes(n_theta, n_phi):
    with pytest.raises(ConfigurationError):
        make_grid(n_theta, n_phi)


def test_make_grid_is_shared(grid):
    assert make_grid(24, 48) is grid


def test_harmonics_are_orthonormal(grid):
    indices = [(0, 0), (1, -1), (1, 0), (1, 1), (2, -2), (2, 1), (3, 0), (4, -3), (5, 5)]
    basis = np.array([spherical_harmonic(grid, l, m) for l, m in indices])
    gram = (basis * grid.weights) @ basis.T
    assert_allclose(gram, np.eye(len(indices)), atol=1e-12)


def test_unit_normalization_matches_coordinates(grid):
    x1, x2, x3 = grid.nodes.T
    assert_allclose(spherical_harmonic(grid, 0, 0, "unit"), 1.0, atol=1e-14)
    assert_allclose(spherical_harmonic(grid, 1, 0, "unit"), x3, atol=1e-14)
    assert_allclose(spherical_harmonic(grid, 1, 1, "unit"), x1, atol=1e-14)
    assert_allclose(spherical_harmonic(grid, 1, -1, "unit"), x2, atol=1e-14)
    assert_allclose(spherical_harmonic(grid, 0, 0), 1.0 / np.sqrt(4.0 * np.pi), atol=1e-15)


def test_harmonic_beyond_resolution_is_rejected(coarse_grid):
    with pytest.raises(ConfigurationError):
        spherical_harmonic(coarse_grid, 11, 0)
    with pytest.raises(ConfigurationError):
        spherical_harmonic(coarse_grid, 2, 3)


def test_unknown_tensor_component_is_rejected(grid):
    with pytest.raises(ConfigurationError):
        sph_harm_tensor({"xw": {(0, 0): 1.0}}, grid)


# ---------------------------------------------------------------------------
# Spectral derivatives
# ---------------------------------------------------------------------------


def test_gradient_of_coordinate_is_projected_axis(grid):
    gradient = grid.transform.gradient(grid.nodes[:, 2])
    expected = tangent_projector(grid.nodes) @ np.array([0.0, 0.0, 1.0])
    assert_allclose(gradient, expected, atol=1e-12)


def test_gradient_adjoint_is_exact_transpose(grid, rng):
    f = rng.standard_normal(grid.size)
    v = rng.standard_normal((grid.size, 3))
    lhs = np.sum(grid.transform.gradient(f) * v)
    rhs = np.sum(f * grid.transform.gradient_adjoint(v))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_interpolation_of_band_limited_field(grid, rng):
    points = rng.standard_normal((5, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    values = grid.nodes[:, 0] * grid.nodes[:, 2] + 0.5 * grid.nodes[:, 1]
    expected = points[:, 0] * points[:, 2] + 0.5 * points[:, 1]
    assert_allclose(grid.interpolate(values, points), expected, atol=1e-12)


def test_unit_vector_field_lookup(grid):
    field = UnitVectorField(grid, grid.nodes.copy())
    assert_allclose(field.at(np.array([0.0, 0.6, 0.8])), [0.0, 0.6, 0.8], atol=1e-12)


def test_unit_vector_field_rejects_non_unit(grid):
    with pytest.raises(DomainError):
        UnitVectorField(grid, 2.0 * grid.nodes)


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("scale", [1.0, 4.0, 0.25])
def test_round_metric_curvature(grid, scale):
    curvature = gaussian_curvature(Sym2Field.round(grid, scale))
    assert_allclose(curvature.values, 1.0 / scale, atol=1e-10)


def test_conformal_curvature_identity(grid):
    u = 0.1 * grid.nodes[:, 2]
    metric = Sym2Field.conformal(grid, np.exp(2.0 * u))
    expected = np.exp(-2.0 * u) * (1.0 + 0.2 * grid.nodes[:, 2])
    assert_allclose(gaussian_curvature(metric).values, expected, atol=1e-8)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gauss_bonnet(grid, seed):
    metric = random_metric(grid, seed)
    total = integrate(gaussian_curvature(metric), metric)
    assert abs(total - 4.0 * np.pi) <= 1e-8


def test_chart_representations_agree_on_overlap(grid):
    metric = random_metric(grid, 5)
    assert metric.overlap_defect() <= 1e-12


def test_non_positive_metric_is_rejected(grid):
    with pytest.raises(DomainError):
        gaussian_curvature(Sym2Field.round(grid, -1.0))


@pytest.mark.parametrize("l, m", [(1, 0), (2, 1), (3, -2), (5, 4)])
def test_round_laplacian_eigenvalues(grid, l, m):
    Y = spherical_harmonic(grid, l, m)
    result = laplace_beltrami(Sym2Field.round(grid, 2.0), ScalarField(grid, Y))
    assert_allclose(result.values, -l * (l + 1) * Y / 2.0, atol=1e-9)


def test_laplacian_is_self_adjoint(grid):
    metric = random_metric(grid, 3)
    f = ScalarField(grid, spherical_harmonic(grid, 2, 1) + 0.3 * grid.nodes[:, 2])
    g = ScalarField(grid, spherical_harmonic(grid, 3, -1) - 0.2 * grid.nodes[:, 0])
    lhs = integrate(ScalarField(grid, f.values * laplace_beltrami(metric, g).values), metric)
    rhs = integrate(ScalarField(grid, g.values * laplace_beltrami(metric, f).values), metric)
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


def test_integrate_uses_metric_area(grid):
    ones = ScalarField(grid, np.ones(grid.size))
    assert abs(integrate(ones, Sym2Field.round(grid, 3.0)) - 12.0 * np.pi) <= 1e-11


@pytest.mark.slow
def test_curvature_converges_spectrally():
    errors = []
    for n_theta in (12, 24):
        grid = make_grid(n_theta, 2 * n_theta)
        u = 0.3 * grid.nodes[:, 2] + 0.2 * grid.nodes[:, 0] * grid.nodes[:, 1]
        metric = Sym2Field.conformal(grid, np.exp(2.0 * u))
        laplacian_u = laplace_beltrami(Sym2Field.round(grid), ScalarField(grid, u)).values
        expected = np.exp(-2.0 * u) * (1.0 - laplacian_u)
        errors.append(np.max(np.abs(gaussian_curvature(metric).values - expected)))
    assert errors[1] <= max(1e-4 * errors[0], 1e-10)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def test_great_circle_distance():
    e1, e2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    assert great_circle_distance(e1, e2) == pytest.approx(np.pi / 2.0, abs=1e-15)
    assert great_circle_distance(e1, -e1) == pytest.approx(np.pi, abs=1e-15)
    assert_allclose(great_circle_distance(np.array([e1, e2]), np.array([e1, e1])), [0.0, np.pi / 2.0], atol=1e-15)


def test_great_circle_distance_rejects_non_unit():
    with pytest.raises(DomainError):
        great_circle_distance(np.array([2.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))


def test_great_circle_triangle_inequality(rng):
    x, y, z = (v / np.linalg.norm(v, axis=1, keepdims=True) for v in rng.standard_normal((3, 1000, 3)))
    d_xz = great_circle_distance(x, z)
    assert np.all(d_xz <= great_circle_distance(x, y) + great_circle_distance(y, z) + 1e-12)
    assert_allclose(d_xz, great_circle_distance(z, x), atol=1e-15)


# ---------------------------------------------------------------------------
# Harmonic tables and second derivatives
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("l, m", [(0, 0), (1, 1), (2, -1), (3, 2), (6, -5), (9, 4)])
def test_harmonics_match_scipy(grid, l, m):
    theta = np.repeat(grid.theta, grid.n_phi)
    phi = np.tile(grid.phi, grid.n_theta)
    complex_harmonic = special.sph_harm_y(l, abs(m), theta, phi)
    if m == 0:
        expected = complex_harmonic.real
    elif m > 0:
        expected = np.sqrt(2.0) * (-1.0) ** m * complex_harmonic.real
    else:
        expected = np.sqrt(2.0) * (-1.0) ** m * complex_harmonic.imag
    assert_allclose(spherical_harmonic(grid, l, m), expected, atol=1e-12)


def test_empty_table_gives_zero_tensor(grid):
    tensor = sph_harm_tensor({}, grid)
    assert tensor.tensor.shape == (grid.size, 3, 3)
    assert np.all(tensor.tensor == 0.0)


def test_hessian_of_coordinate(grid):
    x3 = grid.nodes[:, 2]
    hessian = grid.transform.hessian(x3)
    gradient = np.array([0.0, 0.0, 1.0])[None, :] - x3[:, None] * grid.nodes
    expected = (-x3[:, None, None] * tangent_projector(grid.nodes)
                - np.einsum("ni,nj->nij", grid.nodes, gradient))
    assert_allclose(hessian, expected, atol=1e-10)


@pytest.mark.parametrize("l, m", [(2, 0), (3, -2), (5, 4), (8, 1)])
def test_hessian_trace_is_round_laplacian(grid, l, m):
    Y = spherical_harmonic(grid, l, m)
    trace = np.trace(grid.transform.hessian(Y), axis1=-2, axis2=-1)
    assert_allclose(trace, -l * (l + 1) * Y, atol=1e-9 * l * (l + 1))


def test_nodal_hessian_is_batched(grid):
    values = np.column_stack([spherical_harmonic(grid, 3, 1), spherical_harmonic(grid, 2, -2)])
    batched = nodal_hessian(grid, values)
    assert batched.shape == (grid.size, 2, 3, 3)
    assert_allclose(batched[:, 1], grid.transform.hessian(values[:, 1]), atol=1e-13)

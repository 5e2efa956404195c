"""
Tests for Minkowski vectors, Lorentz maps and hyperboloid distances.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.minkowski import (
    ETA, ORIGIN, LorentzMap, Vec4, boost_to_origin, causal_class, check_on_hyperboloid,
    gauge_rotation, hyperbolic_distance, lorentz_inner, null_pairing_margin,
    project_to_hyperboloid, rotation_fixing_o,
)
from utils.exceptions import DomainError, NormalizationError


def hyperboloid_point(distance: float, direction) -> np.ndarray:
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    return np.concatenate([[np.cosh(distance)], np.sinh(distance) * direction])


def test_lorentz_inner_signature():
    assert lorentz_inner(ORIGIN, ORIGIN) == 1.0
    assert lorentz_inner([0, 1, 0, 0], [0, 1, 0, 0]) == -1.0
    assert lorentz_inner(Vec4(2.0, (1.0, 0.0, 0.0)), [1, 1, 1, 1]) == 1.0


@pytest.mark.parametrize("vector, expected", [
    ([1.0, 0.0, 0.0, 0.0], "future-timelike"),
    ([1.0, 0.5, 0.0, 0.2], "future-timelike"),
    ([-1.0, 0.0, 0.3, 0.0], "past-timelike"),
    ([1.0, 1.0, 0.0, 0.0], "future-null"),
    ([-1.0, 0.0, 0.0, 1.0], "past-null"),
    ([0.0, 1.0, 0.0, 0.0], "spacelike"),
    ([0.0, 0.0, 0.0, 0.0], "zero"),
])
def test_causal_class(vector, expected):
    assert causal_class(vector) == expected


def test_causal_class_tolerance_band():
    nearly_null = [1.0, 1.0 + 1e-12, 0.0, 0.0]
    assert causal_class(nearly_null) == "future-null"
    assert causal_class(nearly_null, tolerance=0.0) == "spacelike"


def test_null_pairing_margin():
    assert null_pairing_margin([2.0, 0.0, 0.0, 1.0]) == pytest.approx(1.0)
    assert null_pairing_margin([1.0, 3.0, 4.0, 0.0]) == pytest.approx(-4.0)


def test_vec4_arithmetic():
    a = Vec4.from_array([1.0, 2.0, 3.0, 4.0])
    b = Vec4(0.5, (0.0, -1.0, 1.0))
    assert (a - b).to_list() == [0.5, 2.0, 4.0, 3.0]
    assert a.scaled(2.0).inf_norm() == 8.0
    with pytest.raises(DomainError):
        Vec4(np.nan, (0.0, 0.0, 0.0))


def test_check_on_hyperboloid():
    check_on_hyperboloid(hyperboloid_point(3.0, [1, 2, 3]))
    with pytest.raises(DomainError):
        check_on_hyperboloid(np.array([1.0, 1.0, 0.0, 0.0]))
    with pytest.raises(DomainError):
        check_on_hyperboloid(-ORIGIN)


def test_project_to_hyperboloid():
    assert_allclose(project_to_hyperboloid([2.0, 0.0, 0.0, 0.0]), ORIGIN)
    with pytest.raises(DomainError):
        project_to_hyperboloid([0.0, 1.0, 0.0, 0.0])


def test_boost_to_origin(rng):
    p = hyperboloid_point(1.3, rng.standard_normal(3))
    boost = boost_to_origin(p)
    assert_allclose(boost.apply(p), ORIGIN, atol=1e-12)
    assert_allclose(boost.m.T @ ETA @ boost.m, ETA, atol=1e-12)
    assert_allclose(boost.inverse().apply(ORIGIN), p, atol=1e-12)


def test_lorentz_map_validation():
    with pytest.raises(DomainError):
        LorentzMap(2.0 * np.eye(4))
    with pytest.raises(DomainError):
        LorentzMap(np.diag([-1.0, 1.0, 1.0, 1.0]))


def test_lorentz_map_composition(rng, rotation):
    p = hyperboloid_point(0.7, rng.standard_normal(3))
    composite = rotation_fixing_o(rotation).compose(boost_to_origin(p))
    assert_allclose(composite.compose(composite.inverse()).m, np.eye(4), atol=1e-12)
    v = Vec4.from_array([3.0, 1.0, -2.0, 0.5])
    assert lorentz_inner(composite.apply(v), composite.apply(v)) == pytest.approx(lorentz_inner(v, v))


def test_rotation_fixing_o_rejects_non_orthogonal():
    with pytest.raises(DomainError):
        rotation_fixing_o(np.diag([1.0, 2.0, 1.0]))


def test_hyperbolic_distance(rng):
    direction = rng.standard_normal(3)
    assert hyperbolic_distance(ORIGIN, hyperboloid_point(2.0, direction)) == pytest.approx(2.0, rel=1e-14)
    near = hyperboloid_point(1e-9, direction)
    assert hyperbolic_distance(ORIGIN, near) == pytest.approx(1e-9, rel=1e-6)
    p = hyperboloid_point(0.4, [1, 0, 0])
    q = hyperboloid_point(0.4, [-1, 0, 0])
    assert hyperbolic_distance(p, q) == pytest.approx(0.8, rel=1e-13)


def test_hyperbolic_distance_is_batched():
    points = np.array([hyperboloid_point(d, [0, 0, 1]) for d in (0.1, 0.5, 1.5)])
    assert_allclose(hyperbolic_distance(np.broadcast_to(ORIGIN, points.shape), points), [0.1, 0.5, 1.5], rtol=1e-13)


def test_gauge_rotation_inverts_rotation(rotation):
    Q, condition = gauge_rotation(*rotation.T)
    assert_allclose(Q @ rotation, np.eye(3), atol=1e-12)
    assert condition == pytest.approx(1.0)


def test_gauge_rotation_constraints(rng):
    y = [v / np.linalg.norm(v) for v in np.eye(3) + 0.2 * rng.standard_normal((3, 3))]
    Q, _ = gauge_rotation(*y)
    assert_allclose(Q @ Q.T, np.eye(3), atol=1e-12)
    assert_allclose(Q @ y[0], [1.0, 0.0, 0.0], atol=1e-12)
    assert abs((Q @ y[1])[2]) <= 1e-12 and (Q @ y[1])[1] >= 0.0
    assert (Q @ y[2])[2] >= 0.0


def test_gauge_rotation_degenerate():
    e1 = np.array([1.0, 0.0, 0.0])
    with pytest.raises(NormalizationError):
        gauge_rotation(e1, e1, np.array([0.0, 0.0, 1.0]))


def random_lorentz_map(rng, max_distance: float = 1.0) -> LorentzMap:
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    p = hyperboloid_point(rng.uniform(0.0, max_distance), rng.standard_normal(3))
    return boost_to_origin(p).compose(rotation_fixing_o(Q * np.sign(np.diag(R))))


def test_hyperbolic_distance_triangle_inequality(rng):
    distances = rng.uniform(0.0, 2.0, size=(3, 1000))
    p, q, s = (np.array([hyperboloid_point(d, v) for d, v in zip(row, rng.standard_normal((1000, 3)))])
               for row in distances)
    d_ps = hyperbolic_distance(p, s)
    assert np.all(d_ps <= hyperbolic_distance(p, q) + hyperbolic_distance(q, s) + 1e-9)
    assert_allclose(d_ps, hyperbolic_distance(s, p), atol=1e-12)


def test_hyperbolic_distance_is_invariant(rng):
    p = np.array([hyperboloid_point(d, v) for d, v in zip(rng.uniform(0.0, 2.0, 50), rng.standard_normal((50, 3)))])
    q = np.array([hyperboloid_point(d, v) for d, v in zip(rng.uniform(0.0, 2.0, 50), rng.standard_normal((50, 3)))])
    motion = random_lorentz_map(rng)
    assert_allclose(hyperbolic_distance(motion.apply(p), motion.apply(q)), hyperbolic_distance(p, q), atol=1e-9)


@pytest.mark.parametrize("vector", [
    [1.0, 0.5, 0.0, 0.2],
    [-1.0, 0.0, 0.3, 0.0],
    [1.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 1.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.2, 0.0, -1.0, 0.5],
    [0.0, 0.0, 0.0, 0.0],
])
def test_causal_class_is_lorentz_invariant(rng, vector):
    expected = causal_class(vector)
    for _ in range(20):
        assert causal_class(random_lorentz_map(rng).apply(np.array(vector))) == expected

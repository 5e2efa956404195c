"""
Tests for the invariant suite.
"""

import pytest

from src.sphere_calculus import make_grid
from src.ah_metric import build_family
from src.h3_embedding import SolverOptions
from src.mass_pipeline import MassPipeline
from src.invariant_suite import run_invariant_suite, suite_payload


def test_round_family_passes_every_check():
    family = build_family(make_grid(16, 32), "round")
    results = run_invariant_suite(family, 0.3, MassPipeline(quiet=True))
    names = [result.name for result in results]
    assert "gauss_bonnet" in names and "center_at_origin" in names
    failed = [result.name for result in results if not result.passed]
    assert failed == []
    assert suite_payload(results)["passed"]


def test_failed_embedding_is_reported():
    family = build_family(make_grid(12, 24), "random_l2", seed=1, amplitude=0.3)
    pipeline = MassPipeline(SolverOptions(max_iterations=1, tolerance=1e-15), quiet=True)
    results = run_invariant_suite(family, 0.3, pipeline)
    assert results[-1].name == "embedding" and not results[-1].passed
    assert not suite_payload(results)["passed"]


@pytest.mark.slow
@pytest.mark.parametrize("preset", ["dipole", "quadrupole"])
def test_axisymmetric_families_pass(preset):
    family = build_family(make_grid(24, 48), preset)
    results = run_invariant_suite(family, 0.2, MassPipeline(quiet=True))
    assert [result.name for result in results if not result.passed] == []

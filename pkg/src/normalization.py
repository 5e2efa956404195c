"""
Normalization module for the AH toolkit

Moves the common ball center of an embedded sphere to o, fixes the residual
O(3) freedom by the three-point gauge y(e1) = e1, y(e2) in {x3 = 0, x2 >= 0},
y(e3)_3 >= 0, and measures how far the resulting angular map y is from the
identity.
"""

import os
import sys
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import NormalizationError
from src.sphere_calculus import SphereGrid, UnitVectorField, great_circle_distance
from src.minkowski import LorentzMap, boost_to_origin, gauge_rotation, rotation_fixing_o
from src.h3_embedding import EmbeddingH3
from src.extrinsic_geometry import BallSandwich, ShapeData, ball_sandwich, shape_operator

logger = logging.getLogger(__name__)

NodePair = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class NormalizedEmbedding:
    """Embedding in the centered, gauge-fixed frame"""
    emb: EmbeddingH3
    applied: LorentzMap
    angular_map: UnitVectorField
    sandwich: BallSandwich
    gauge_condition: float

    def to_json(self) -> Dict[str, Any]:
        payload = self.emb.to_json()
        payload["applied_map"] = self.applied.to_list()
        payload["sandwich"] = self.sandwich.to_json()
        payload["gauge_condition"] = self.gauge_condition
        return payload


def normalize(emb: EmbeddingH3, centering: str = config.DEFAULT_CENTERING,
              shape: Optional[ShapeData] = None) -> NormalizedEmbedding:
    """
    Translate the ball center to o and fix the O(3) gauge

    Args:
        emb: Strictly convex embedding
        centering: Ball centering rule ("circumscribed" or "inscribed")
        shape: Precomputed shape data of emb

    Returns:
        NormalizedEmbedding recording the composite isometry
    """
    shape = shape if shape is not None else shape_operator(emb)
    sandwich = ball_sandwich(emb, shape, centering)

    # Step 1: boost the common center to o
    boost = boost_to_origin(sandwich.center)
    centered = emb.transformed(boost)

    # Step 2: rotation/reflection achieving the three-point gauge
    images = [centered.n_dir.at(np.eye(3)[a]) for a in range(3)]
    try:
        Q, condition = gauge_rotation(*images)
    except NormalizationError as e:
        logger.error(f"Error fixing the gauge: {str(e)}")
        raise

    applied = rotation_fixing_o(Q).compose(boost)
    normalized = emb.transformed(applied)
    normalized = EmbeddingH3(
        sigma=normalized.sigma, n_dir=normalized.n_dir, residual=normalized.residual,
        target=normalized.target, metadata={**emb.metadata, "normalized": True, "centering": centering},
    )
    logger.debug(f"Normalized embedding: boost rapidity {np.arccosh(max(sandwich.center.t, 1.0)):.3e}, "
                 f"gauge condition {condition:.3e}")
    return NormalizedEmbedding(
        emb=normalized, applied=applied, angular_map=normalized.n_dir,
        sandwich=sandwich, gauge_condition=condition,
    )


def distortion_check(norm: NormalizedEmbedding, pairs: Sequence[NodePair]) -> float:
    """
    Max over node pairs of |d(x1, x2) - d(y(x1), y(x2))| on the unit sphere

    Args:
        norm: Normalized embedding
        pairs: Node index pairs

    Returns:
        Largest distortion (0 for an empty list)
    """
    if len(pairs) == 0:
        return 0.0
    index = np.asarray(pairs, dtype=int)
    nodes = norm.emb.grid.nodes
    directions = norm.angular_map.directions
    before = great_circle_distance(nodes[index[:, 0]], nodes[index[:, 1]])
    after = great_circle_distance(directions[index[:, 0]], directions[index[:, 1]])
    return float(np.max(np.abs(np.atleast_1d(before) - np.atleast_1d(after))))


def angular_deviation(norm: NormalizedEmbedding) -> float:
    """Sup over nodes of the distance from y(x) to x"""
    return float(np.max(great_circle_distance(norm.angular_map.directions, norm.emb.grid.nodes)))


def random_node_pairs(grid: SphereGrid, count: int, seed: int) -> List[NodePair]:
    """Reproducible random node pairs"""
    rng = np.random.default_rng(seed)
    first = rng.integers(0, grid.size, size=count)
    second = rng.integers(0, grid.size, size=count)
    return [(int(a), int(b)) for a, b in zip(first, second)]

"""
Report writer for the AH toolkit: JSON payloads and flat CSV tables
"""

import os
import sys
import logging
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.base_utils import atomic_write, canonical_json, config_hash
from utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

VEC4_COLUMNS = ["t", "x1", "x2", "x3"]


def _clean(value: Any) -> Any:
    """Convert numpy scalars and non-finite floats into JSON-safe values"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class ReportWriter:
    """Serializes command results with version and configuration stamps"""

    def __init__(self, resolved_config: Dict[str, Any]):
        """
        Initialize report writer

        Args:
            resolved_config: Fully resolved configuration (hashed into every report)
        """
        self.resolved_config = resolved_config
        self.config_hash = config_hash(_clean(resolved_config))

    def envelope(self, kind: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        """Wrap a payload with schema/tool versions and the config hash"""
        return _clean({
            "schema_version": config.REPORT_SCHEMA_VERSION,
            "tool_version": config.TOOL_VERSION,
            "kind": kind,
            "config_hash": self.config_hash,
            "config": self.resolved_config,
            "result": payload,
        })

    def to_json(self, kind: str, payload: Dict[str, Any]) -> str:
        return canonical_json(self.envelope(kind, payload)) + "\n"

    def to_csv(self, kind: str, payload: Dict[str, Any]) -> str:
        """Flatten a payload into a table"""
        frame = self._table(kind, payload)
        return frame.to_csv(index=False, float_format="%.17g")

    def _table(self, kind: str, payload: Dict[str, Any]) -> pd.DataFrame:
        if kind == "mass":
            return pd.DataFrame([_sample_row(payload)])
        if kind == "converge":
            rows = [_sample_row(sample) for sample in payload["samples"]]
            if payload.get("fitted_limit") is not None:
                rows.append({"r": 0.0, **dict(zip(VEC4_COLUMNS, payload["fitted_limit"])),
                             "causal_class": payload.get("limit_verdict"), "embedding_residual": None})
            return pd.DataFrame(rows)
        if kind == "curvature":
            nodes = np.asarray(payload["nodes"])
            return pd.DataFrame({
                "n1": nodes[:, 0], "n2": nodes[:, 1], "n3": nodes[:, 2],
                "K": payload["K"], "R": payload["R"], "H": payload["H"],
            })
        if kind == "embed":
            nodes = np.asarray(payload["nodes"])
            points = np.asarray(payload["points"])
            return pd.DataFrame({
                "n1": nodes[:, 0], "n2": nodes[:, 1], "n3": nodes[:, 2],
                "sigma": payload["sigma"],
                **{column: points[:, a] for a, column in enumerate(VEC4_COLUMNS)},
            })
        if kind == "check":
            return pd.DataFrame(payload["checks"], columns=["name", "passed", "value", "threshold"])
        raise ConfigurationError(f"No CSV layout for report kind {kind!r}")

    def write(self, kind: str, payload: Dict[str, Any], fmt: str = "json",
              out_path: Optional[str] = None) -> str:
        """
        Render a report and write it atomically (or return it for stdout)

        Args:
            kind: Report kind (curvature, embed, mass, converge, check)
            payload: Result payload
            fmt: "json" or "csv"
            out_path: Destination path; None means the caller prints the text

        Returns:
            Rendered text
        """
        text = self.to_csv(kind, payload) if fmt == "csv" else self.to_json(kind, payload)
        if out_path:
            atomic_write(out_path, text)
            logger.info(f"Wrote {kind} report to {out_path}")
        return text


def _sample_row(sample: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "r": sample["r"],
        **dict(zip(VEC4_COLUMNS, sample["ql_mass"])),
        "causal_class": sample["causal_class"],
        "embedding_residual": sample["embedding_residual"],
    }


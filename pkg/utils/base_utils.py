"""
Base utilities for the AH quasilocal mass toolkit
"""

import os
import sys
import json
import hashlib
import logging
import tempfile
from typing import Any, Dict, List, Tuple

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def get_file_extension(filename: str) -> str:
    """Get the file extension from a filename."""
    return os.path.splitext(filename)[1].lower()


def parse_grid_spec(spec: str) -> Tuple[int, int]:
    """Parse 'NTHETAxNPHI' into a pair of integers."""
    parts = spec.lower().split("x")
    if len(parts) != 2:
        raise ConfigurationError(f"Grid must look like NTHETAxNPHI, got {spec!r}")
    try:
        n_theta, n_phi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigurationError(f"Grid sizes must be integers, got {spec!r}")
    return n_theta, n_phi


def parse_r_list(text: str) -> List[float]:
    """Parse a comma-separated list of radii."""
    try:
        radii = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigurationError(f"Radii must be comma-separated numbers, got {text!r}")
    if not radii:
        raise ConfigurationError("Radius list is empty")
    return radii


def canonical_json(payload: Any) -> str:
    """Deterministic JSON text: sorted keys, fixed separators."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(resolved: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON of a resolved configuration."""
    return hashlib.sha256(canonical_json(resolved).encode("utf-8")).hexdigest()


def atomic_write(file_path: str, content: str) -> str:
    """Write text to disk through a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(directory, exist_ok=True)

    handle, temp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=get_file_extension(file_path))
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
            f.write(content)
        os.replace(temp_path, file_path)
    except Exception as e:
        logger.error(f"Error writing {file_path}: {str(e)}")
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise

    return file_path


def infer_format(out_path: str, requested: str = None) -> str:
    """Report format from an explicit flag or the output extension."""
    if requested:
        fmt = requested.lower()
    elif out_path and get_file_extension(out_path) == ".csv":
        fmt = "csv"
    else:
        fmt = "json"
    if fmt not in config.SUPPORTED_REPORT_FORMATS:
        raise ConfigurationError(f"Unsupported report format {fmt!r}")
    return fmt

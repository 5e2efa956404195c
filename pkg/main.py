"""
Main module for the AH quasilocal mass toolkit
"""

import os
import sys
import logging
import argparse
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config import config
from utils.base_utils import infer_format, parse_grid_spec, parse_r_list
from utils.config_loader import apply_overrides, load_experiment, parse_coefficients
from utils.exceptions import (
    AHMassError, ConfigurationError, DomainError, GeometryError, NormalizationError, SolverError,
)
from src.sphere_calculus import gaussian_curvature, make_grid
from src.ah_metric import (
    AHFamily, build_family, convexity_radius, induced_metric, mean_curvature_H, scalar_curvature_R,
    volume_form_ratio, wang_inequality,
)
from src.h3_embedding import SolverOptions
from src.extrinsic_geometry import CENTERINGS
from src.normalization import normalize
from src.mass_pipeline import MassPipeline
from src.invariant_suite import run_invariant_suite, suite_payload
from src.report_writer import ReportWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3

COMMANDS = ("curvature", "embed", "mass", "converge", "check")


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; route it through the toolkit error instead"""

    def error(self, message: str):
        raise ConfigurationError(message)


def setup_logging(quiet: bool = False):
    """Configure logging (stdout stays reserved for reports)"""
    level = logging.WARNING if quiet else getattr(logging, config.LOG_LEVEL)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(config.LOG_FILE),
            logging.StreamHandler(sys.stderr)
        ]
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="ahmass", description="AH quasilocal mass toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", type=str, help="Experiment TOML file (or a name under config/experiments)")
        sub.add_argument("--grid", type=str, help="Grid size as NTHETAxNPHI")
        sub.add_argument("--r", type=float, help="Coordinate radius")
        sub.add_argument("--r-list", type=str, help="Comma-separated radii for converge")
        sub.add_argument("--tol", type=float, help="Embedding residual tolerance")
        sub.add_argument("--out", type=str, help="Write the report here instead of stdout")
        sub.add_argument("--format", type=str, choices=config.SUPPORTED_REPORT_FORMATS)
        sub.add_argument("--seed", type=int, help="Seed for random presets and randomized checks")
        sub.add_argument("--centering", type=str, choices=CENTERINGS)
        sub.add_argument("--compare-centerings", action="store_true")
        sub.add_argument("--verify-general", action="store_true")
        sub.add_argument("--quiet", action="store_true", help="Disable progress bars and info logging")
    return parser


def resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Experiment file merged with the command-line overrides"""
    resolved = load_experiment(args.config)
    resolved = apply_overrides(
        resolved,
        grid=parse_grid_spec(args.grid) if args.grid else None,
        r=args.r,
        r_list=parse_r_list(args.r_list) if args.r_list else None,
        tolerance=args.tol,
        seed=args.seed,
    )
    if args.centering:
        resolved["solver"]["centering"] = args.centering
    if args.compare_centerings:
        resolved["solver"]["compare_centerings"] = True
    if args.verify_general:
        resolved["solver"]["verify_general"] = True
    return resolved


def family_from_config(resolved: Dict[str, Any]) -> AHFamily:
    grid = make_grid(resolved["grid"]["n_theta"], resolved["grid"]["n_phi"])
    family_cfg = resolved["family"]
    e_cfg = family_cfg["e"]
    coefficients = parse_coefficients(family_cfg["h"], "family.h") if "h" in family_cfg else None
    e_coefficients = (parse_coefficients(e_cfg["coefficients"], "family.e.coefficients")
                      if "coefficients" in e_cfg else None)
    return build_family(
        grid,
        preset=family_cfg["preset"],
        coefficients=coefficients,
        e_model=e_cfg["model"],
        e_amplitude=float(e_cfg["amplitude"]),
        e_coefficients=e_coefficients,
        seed=family_cfg["seed"],
        amplitude=float(family_cfg["amplitude"]),
        normalization=family_cfg["normalization"],
    )


def pipeline_from_config(resolved: Dict[str, Any], quiet: bool = False) -> MassPipeline:
    solver = resolved["solver"]
    opts = SolverOptions(
        max_iterations=solver["max_iterations"],
        tolerance=float(solver["tolerance"]),
        damping=float(solver["damping"]),
        gauge=solver["gauge"],
    )
    if solver["centering"] not in CENTERINGS:
        raise ConfigurationError(f"'solver.centering' must be one of {CENTERINGS}")
    return MassPipeline(
        opts,
        centering=solver["centering"],
        verify_general=solver["verify_general"],
        compare_centerings=solver["compare_centerings"],
        max_workers=resolved["sweep"]["max_workers"],
        quiet=quiet,
    )


def curvature_payload(family: AHFamily, r: float) -> Dict[str, Any]:
    """R, K and H of S_r at every node"""
    sphere = induced_metric(family, r)
    K = gaussian_curvature(sphere.gamma)
    R = scalar_curvature_R(sphere)
    H = mean_curvature_H(family, r)
    holds, margin = wang_inequality(family)
    return {
        "family": family.descriptor(),
        "r": r,
        "r_max": family.r_max,
        "convexity_radius": convexity_radius(family),
        "area": sphere.area(),
        "volume_form_ratio": volume_form_ratio(sphere),
        "wang_inequality": {"holds": holds, "margin": margin},
        "stats": {
            "K": {"min": K.min(), "max": K.max()},
            "R": {"min": R.min(), "max": R.max()},
            "H": {"min": H.min(), "max": H.max()},
        },
        "nodes": family.grid.nodes,
        "K": K.values,
        "R": R.values,
        "H": H.values,
    }


def embed_payload(family: AHFamily, r: float, pipeline: MassPipeline) -> Dict[str, Any]:
    """Normalized embedding of S_r with its Minkowski images"""
    sphere = induced_metric(family, r)
    embedding, diagnostics = pipeline.embed(sphere)
    norm = normalize(embedding, pipeline.centering)
    payload = norm.to_json()
    payload.update({
        "family": family.descriptor(),
        "r": r,
        "diagnostics": diagnostics,
        "nodes": family.grid.nodes,
        "points": norm.emb.points(),
    })
    return payload


def run_command(args: argparse.Namespace, resolved: Dict[str, Any]) -> Tuple[Dict[str, Any], int]:
    family = family_from_config(resolved)
    pipeline = pipeline_from_config(resolved, args.quiet)
    r = float(resolved["sweep"]["r"])

    if args.command == "curvature":
        return curvature_payload(family, r), EXIT_OK
    if args.command == "embed":
        return embed_payload(family, r, pipeline), EXIT_OK
    if args.command == "mass":
        sample = pipeline.ql_mass_vector(family, r)
        return {"family": family.descriptor(), **sample.to_json()}, EXIT_OK
    if args.command == "converge":
        report = pipeline.converge(family, resolved["sweep"]["r_list"])
        return report.to_json(), EXIT_OK

    results = run_invariant_suite(family, r, pipeline, seed=resolved["family"]["seed"])
    payload = suite_payload(results)
    payload["family"] = family.descriptor()
    payload["r"] = r
    return payload, EXIT_OK if payload["passed"] else EXIT_CHECK_FAILED


def exit_code_for(error: AHMassError) -> int:
    if isinstance(error, SolverError):
        return EXIT_SOLVER
    if isinstance(error, (ConfigurationError, DomainError, NormalizationError, GeometryError)):
        return EXIT_VALIDATION
    return EXIT_SOLVER


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigurationError as e:
        print(f"ahmass: error: {str(e)}", file=sys.stderr)
        return EXIT_VALIDATION

    # Set up logging
    setup_logging(args.quiet)

    logger.info(f"Starting ahmass {args.command}")
    try:
        resolved = resolve_config(args)
        fmt = infer_format(args.out, args.format)
        payload, code = run_command(args, resolved)
        text = ReportWriter(resolved).write(args.command, payload, fmt, args.out)
    except AHMassError as e:
        logger.error(f"ahmass {args.command} failed: {str(e)}")
        print(f"ahmass: error: {str(e)}", file=sys.stderr)
        return exit_code_for(e)
    except np.linalg.LinAlgError as e:
        logger.error(f"ahmass {args.command} failed in linear algebra: {str(e)}")
        print(f"ahmass: error: {str(e)}", file=sys.stderr)
        return EXIT_SOLVER

    if not args.out:
        sys.stdout.write(text)
    logger.info(f"ahmass {args.command} completed (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())

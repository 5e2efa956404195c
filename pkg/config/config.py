"""
Configuration file for the AH quasilocal mass toolkit
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Environment overrides (.env in the working directory or real env vars)
load_dotenv()

# Base directories
BASE_DIR = Path(os.path.dirname(os.path.abspath(__file__))).parent
CONFIG_DIR = os.path.join(BASE_DIR, "config")
EXPERIMENTS_DIR = os.path.join(CONFIG_DIR, "experiments")

# Versions
TOOL_VERSION = "0.3.0"
CONFIG_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = "1.2"
EMBEDDING_SCHEMA_VERSION = "1.0"

# Sphere grid
DEFAULT_N_THETA = 24
DEFAULT_N_PHI = 48
ACCEPTANCE_N_THETA = 48
ACCEPTANCE_N_PHI = 96
MIN_N_THETA = 8

# Chart stitching: both stereographic charts are evaluated for |x3| < band
CHART_BAND_WIDTH = 0.3

# AH family
R_MAX_CAP = 2.0
R_MAX_SCAN_POINTS = 200
R_MAX_BISECTION_STEPS = 60
CONVEXITY_SCAN_POINTS = 40
CONVEXITY_BISECTION_STEPS = 30
POSITIVITY_MARGIN = 0.0
ASSUMPTION_A_RADII = [0.05, 0.1, 0.2, 0.4]
QUARTIC_DEFAULT_AMPLITUDE = 1.0

# Embedding solver
SOLVER_MAX_ITERATIONS = 30
SOLVER_TOLERANCE = 1e-9
SOLVER_DAMPING = 1e-3
SOLVER_GAUGE = "fix-three-points"
SOLVER_DAMPING_CEILING = 1e12
GAUGE_POLISH_ROUNDS = 3
CG_MAX_ITERATIONS = 400
CG_RTOL = 1e-10
AXISYMMETRY_TOLERANCE = 1e-10
ODE_RTOL = 1e-13
ODE_ATOL = 1e-14
SOLVER_VERIFY_GENERAL = False

# Extrinsic geometry
CERTIFICATE_EPSILON = 1e-7
DEFAULT_CENTERING = "circumscribed"

# Minkowski
CAUSAL_RELATIVE_TOLERANCE = 1e-9
HYPERBOLOID_TOLERANCE = 1e-8
LORENTZ_TOLERANCE = 1e-12
ORTHOGONAL_TOLERANCE = 1e-10

# Normalization
GAUGE_CONDITION_LIMIT = 1e6

# Mass pipeline
DEFAULT_R_LIST = [0.4, 0.3, 0.2, 0.15]
MIN_FIT_SAMPLES = 3
FIT_EXPONENT_BOUNDS = (0.25, 6.0)
FLAT_FIT_TOLERANCE = 1e-8
MASS_CAUSAL_TOLERANCE = 1e-7
MAX_WORKERS = int(os.getenv("AHMASS_MAX_WORKERS", "1"))

# Logging
LOG_LEVEL = os.getenv("AHMASS_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("AHMASS_LOG_FILE", os.path.join(BASE_DIR, "ahmass.log"))

# Supported report formats
SUPPORTED_REPORT_FORMATS = ["json", "csv"]

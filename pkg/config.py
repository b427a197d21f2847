"""
Configuration settings for the GCMP ignorability engine
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent
FIXTURES_DIR = BASE_DIR / "fixtures"

TOOL_VERSION = "0.3.0"

# Path-space limits
MAX_HORIZON = int(os.getenv("GCMP_MAX_HORIZON", "8"))
PATH_COUNT_CAP = int(os.getenv("GCMP_PATH_CAP", "100000"))
MEASURE_CACHE_SIZE = int(os.getenv("GCMP_MEASURE_CACHE", "256"))  # off-grid parameter entries kept per model

# Numeric policy
SUM_TOL = 1e-12  # direct sums (normalization, atom masses)
DERIVED_TOL = 1e-9  # derived quantities (compensators, certificates)
LOG_DOMAIN_THRESHOLD = 32  # products longer than this are accumulated as log-sums

# Estimation settings
GOLDEN_TOL = 1e-4
COARSE_GRID_POINTS = 21
DEFAULT_BRACKET = (0.02, 0.98)

# Theorem battery
BATTERY_MODELS = 200
BATTERY_MAX_HORIZON = 3
DEFAULT_SEED = 20050101

# Report settings
REPORT_INDENT = 2
MASK_TEXT = "NA"

# Debug settings
DEBUG = os.getenv("DEBUG", "False").lower() == "true"
LOG_LEVEL = "DEBUG" if DEBUG else "INFO"

# src/core/config.py
import os

# Centralized configuration and app-wide constants
DEFAULT_BETA = 0.5
DEFAULT_C = 1.0
MEDIAN_HEURISTIC_CAP = 1000
MEDIAN_HEURISTIC_SEED = 0
FALLBACK_BANDWIDTH = 1.0

# Finite-difference steps (relative to max(1, |x_j|))
HESS_FD_STEP = 1e-4

# Gram blocks are evaluated in row chunks so n x n never sits in memory
GRAM_CHUNK_ROWS = 512

MMD_REFERENCE_SIZE = 5000

ALL_RUNS_DIR = os.getenv("RST_OUT_DIR", "./runs")
PRESETS_DIR = os.getenv(
    "RST_PRESETS_DIR",
    os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "presets"),
)

LONG_FORMAT_COLUMNS = ["method", "d", "m", "eps", "seed", "metric", "value"]

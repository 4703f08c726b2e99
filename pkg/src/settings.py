from dotenv import load_dotenv
load_dotenv()  # Load environment variables from a .env file if present
import os
import logging
from dataclasses import dataclass

from src.core.config import ALL_RUNS_DIR, PRESETS_DIR


@dataclass(frozen=True)
class RuntimeSettings:
    out_dir: str
    threads: int
    log_level: int
    presets_dir: str


def init_settings() -> RuntimeSettings:
    """
    Reads the runtime settings from the environment (RST_OUT_DIR, RST_THREADS,
    RST_LOG_LEVEL, RST_PRESETS_DIR). CLI flags override them afterwards.
    """
    level_name = os.getenv("RST_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        raise ValueError(f"RST_LOG_LEVEL is not a logging level: {level_name}")

    threads = os.getenv("RST_THREADS", "1")
    if not threads.isdigit() or int(threads) < 1:
        raise ValueError(f"RST_THREADS must be a positive integer (got {threads!r})")

    return RuntimeSettings(
        out_dir=os.getenv("RST_OUT_DIR", ALL_RUNS_DIR),
        threads=int(threads),
        log_level=level,
        presets_dir=os.getenv("RST_PRESETS_DIR", PRESETS_DIR),
    )

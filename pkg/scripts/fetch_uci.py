#!/usr/bin/env python3
"""
fetch_uci.py - Download the UCI datasets used by the logistic regression experiment

Each raw file is downloaded, checked against data/checksums.json (sha256) and
converted to a CSV with a header row and a binary `label` column.
The data itself is never committed.

Usage:
    # Download every known dataset into ./data
    python -m scripts.fetch_uci

    # Only some datasets
    python -m scripts.fetch_uci breast_wisconsin haberman

    # Pin a checksum instead of recording the first download
    python -m scripts.fetch_uci haberman --expect <sha256>

    # List the known datasets
    python -m scripts.fetch_uci --list

Checksums:
    The first download of a dataset records its sha256 in data/checksums.json;
    later downloads must match it (use --force-checksum to re-record).
"""

import os
import sys
import json
import hashlib
import logging
import argparse
from io import StringIO
from pathlib import Path
from typing import Callable, Dict, Optional

import pandas as pd
import requests

# Add project root to path for imports
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from dotenv import load_dotenv

load_dotenv(PROJECT_ROOT / ".env")

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout),
    ]
)
logger = logging.getLogger(__name__)

UCI_BASE = os.getenv("UCI_BASE_URL", "https://archive.ics.uci.edu/ml/machine-learning-databases")
DATA_DIR = Path(os.getenv("RST_DATA_DIR", PROJECT_ROOT / "data"))
CHECKSUMS_FILE = DATA_DIR / "checksums.json"


def _wdbc(raw: str) -> pd.DataFrame:
    frame = pd.read_csv(StringIO(raw), header=None)
    features = frame.iloc[:, 2:]
    features.columns = [f"f{j + 1}" for j in range(features.shape[1])]
    return features.assign(label=(frame[1] == "M").astype(int))


def _haberman(raw: str) -> pd.DataFrame:
    frame = pd.read_csv(StringIO(raw), header=None, names=["age", "year", "nodes", "status"])
    # status 2 = died within 5 years
    return frame[["age", "year", "nodes"]].assign(label=(frame["status"] == 2).astype(int))


def _bupa(raw: str) -> pd.DataFrame:
    cols = ["mcv", "alkphos", "sgpt", "sgot", "gammagt", "drinks", "selector"]
    frame = pd.read_csv(StringIO(raw), header=None, names=cols)
    return frame[cols[:6]].assign(label=(frame["selector"] == 2).astype(int))


def _sonar(raw: str) -> pd.DataFrame:
    frame = pd.read_csv(StringIO(raw), header=None)
    features = frame.iloc[:, :60]
    features.columns = [f"f{j + 1}" for j in range(60)]
    return features.assign(label=(frame[60] == "M").astype(int))


DATASETS: Dict[str, Dict] = {
    "breast_wisconsin": {"path": "breast-cancer-wisconsin/wdbc.data", "convert": _wdbc},
    "haberman": {"path": "haberman/haberman.data", "convert": _haberman},
    "liver_disorders": {"path": "liver-disorders/bupa.data", "convert": _bupa},
    "sonar": {"path": "undocumented/connectionist-bench/sonar/sonar.all-data", "convert": _sonar},
}


def load_checksums() -> Dict[str, str]:
    if CHECKSUMS_FILE.exists():
        with open(CHECKSUMS_FILE, "r", encoding="utf-8") as f:
            return json.load(f)
    return {}


def save_checksums(checksums: Dict[str, str]):
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    temp_file = str(CHECKSUMS_FILE) + ".tmp"
    with open(temp_file, "w", encoding="utf-8") as f:
        json.dump(checksums, f, indent=2, sort_keys=True)
    os.replace(temp_file, CHECKSUMS_FILE)


def fetch_dataset(name: str, checksums: Dict[str, str], expect: Optional[str] = None,
                  force_checksum: bool = False) -> bool:
    """
    Downloads, verifies and converts one dataset.

    Returns:
        True when data/<name>.csv was written
    """
    entry = DATASETS[name]
    url = f"{UCI_BASE}/{entry['path']}"
    logger.info(f"🔄 Downloading {name} from {url}")
    try:
        resp = requests.get(url, timeout=60)
        resp.raise_for_status()
    except requests.exceptions.RequestException as e:
        logger.error(f"❌ Download failed for {name}: {e}")
        return False

    digest = hashlib.sha256(resp.content).hexdigest()
    known = expect or (None if force_checksum else checksums.get(name))
    if known and known != digest:
        logger.error(f"❌ Checksum mismatch for {name}: expected {known}, got {digest}")
        return False
    if not known:
        logger.warning(f"⚠️ Recording first-seen sha256 for {name}: {digest}")
    checksums[name] = digest

    convert: Callable[[str], pd.DataFrame] = entry["convert"]
    frame = convert(resp.text)
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    out = DATA_DIR / f"{name}.csv"
    temp_file = str(out) + ".tmp"
    frame.to_csv(temp_file, index=False)
    os.replace(temp_file, out)
    logger.info(f"💾 {name}: {frame.shape[0]} rows, {frame.shape[1] - 1} features -> {out}")
    return True


def main():
    parser = argparse.ArgumentParser(description="Download UCI datasets for the logistic regression experiment")
    parser.add_argument("datasets", nargs="*", help="Dataset names (all when omitted)")
    parser.add_argument("--list", action="store_true", help="List known datasets")
    parser.add_argument("--expect", help="Expected sha256 (only with a single dataset)")
    parser.add_argument("--force-checksum", action="store_true", help="Re-record checksums instead of verifying")
    args = parser.parse_args()

    if args.list:
        for name, entry in DATASETS.items():
            logger.info(f"   • {name}: {UCI_BASE}/{entry['path']}")
        return 0

    names = args.datasets or list(DATASETS)
    unknown = [n for n in names if n not in DATASETS]
    if unknown:
        logger.error(f"❌ Unknown datasets: {', '.join(unknown)}")
        return 1
    if args.expect and len(names) != 1:
        logger.error("❌ --expect needs exactly one dataset")
        return 1

    checksums = load_checksums()
    ok = [fetch_dataset(n, checksums, args.expect, args.force_checksum) for n in names]
    save_checksums(checksums)

    logger.info(f"✅ {sum(ok)}/{len(ok)} datasets ready in {DATA_DIR}")
    return 0 if all(ok) else 1


if __name__ == "__main__":
    sys.exit(main())

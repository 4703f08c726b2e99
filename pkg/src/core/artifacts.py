# src/core/artifacts.py
import os
import json
import logging
from typing import Dict, Iterable, List, Optional
from threading import Lock

import pandas as pd

from src import __version__
from src.core.config import LONG_FORMAT_COLUMNS
from src.core.utils import config_digest

logger = logging.getLogger(__name__)


class ArtifactCollector:
    """
    Écrit les artefacts d'un run (CSV, JSON) dans un dossier de sortie.

    - Écriture atomique : fichier temporaire puis os.replace
    - Un verrou sérialise les écritures concurrentes (workers)
    - rollback() supprime tout ce qui a été écrit pendant le run
    """

    def __init__(self, out_dir: str):
        """
        Args:
            out_dir: Dossier du run (créé à la première écriture)
        """
        self.out_dir = out_dir
        self.lock = Lock()
        self.written: List[str] = []
        self._created_dir = False
        self.stats = {
            "writes": 0,
            "bytes": 0,
            "errors": 0,
        }

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _ensure_dir(self):
        if not os.path.isdir(self.out_dir):
            os.makedirs(self.out_dir, exist_ok=True)
            self._created_dir = True

    def write_text(self, name: str, content: str) -> str:
        """
        Écrit `content` dans out_dir/name de manière atomique.

        Returns:
            Chemin complet du fichier écrit
        """
        target = self.path(name)
        with self.lock:
            self._ensure_dir()
            temp_file = target + ".tmp"
            try:
                with open(temp_file, "w", encoding="utf-8", newline="") as f:
                    f.write(content)
                os.replace(temp_file, target)
            except OSError as e:
                self.stats["errors"] += 1
                if os.path.exists(temp_file):
                    os.remove(temp_file)
                logger.error(f"❌ Error writing artifact {target}: {e}")
                raise
            if target not in self.written:
                self.written.append(target)
            self.stats["writes"] += 1
            self.stats["bytes"] += len(content.encode("utf-8"))
        logger.info(f"💾 Wrote {target}")
        return target

    def write_json(self, name: str, payload: dict, config: Optional[dict] = None) -> str:
        """JSON UTF-8; `config`, its digest and the library version are embedded when given."""
        document = dict(payload)
        if config is not None:
            provenance = {"config": config, "config_digest": config_digest(config), "version": __version__}
            for key, value in provenance.items():
                if document.get(key) is None:
                    document[key] = value
        return self.write_text(name, json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def write_frame(self, name: str, frame: pd.DataFrame, header: bool = True) -> str:
        return self.write_text(name, frame.to_csv(index=False, header=header, float_format="%.17g", lineterminator="\n"))

    def write_records(self, name: str, records: Iterable) -> str:
        """Long-format CSV (method, d, m, eps, seed, metric, value)."""
        rows = [r.model_dump() if hasattr(r, "model_dump") else dict(r) for r in records]
        frame = pd.DataFrame(rows, columns=LONG_FORMAT_COLUMNS)
        return self.write_frame(name, frame)

    def rollback(self):
        """Supprime tous les artefacts écrits pendant ce run."""
        with self.lock:
            for target in reversed(self.written):
                try:
                    if os.path.exists(target):
                        os.remove(target)
                        logger.info(f"🗑️  Removed partial artifact: {target}")
                except OSError as e:
                    logger.error(f"❌ Error removing {target}: {e}")
            self.written.clear()
            if self._created_dir and os.path.isdir(self.out_dir) and not os.listdir(self.out_dir):
                os.rmdir(self.out_dir)

    def get_stats(self) -> Dict[str, int]:
        return self.stats.copy()

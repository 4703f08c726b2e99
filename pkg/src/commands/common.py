# src/commands/common.py
import argparse
from typing import List, Tuple

from src.core.artifacts import ArtifactCollector
from src.core.errors import ConfigError
from src.core.experiments import load_experiments, resolve_preset_path, with_seed
from src.core.models import ExperimentConfig
from src.core.utils import get_run_path
from src.settings import RuntimeSettings


def add_config_arguments(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--config", help="Experiment JSON file")
    group.add_argument("--preset", help="Name of a preset in the presets directory")


def load_configs(args, settings: RuntimeSettings) -> Tuple[str, List[ExperimentConfig]]:
    """(run name, configs) from --config / --preset, with --seed applied."""
    if args.preset:
        path = resolve_preset_path(args.preset, settings.presets_dir)
    elif args.config:
        path = args.config
    else:
        raise ConfigError("--config or --preset is required")
    name, configs = load_experiments(path)
    return name, [with_seed(c, args.seed) for c in configs]


def load_single_config(args, settings: RuntimeSettings) -> ExperimentConfig:
    _, configs = load_configs(args, settings)
    if len(configs) != 1:
        raise ConfigError("this command takes a single experiment config, not a suite")
    return configs[0]


class RunContext:
    """Parsed arguments, settings and every collector opened by the command."""

    def __init__(self, args, settings: RuntimeSettings):
        self.args = args
        self.settings = settings
        self.collectors: List[ArtifactCollector] = []

    @property
    def threads(self) -> int:
        return self.args.threads or self.settings.threads

    @property
    def progress(self) -> bool:
        return not self.args.quiet

    def collector(self, run_name: str) -> ArtifactCollector:
        collector = ArtifactCollector(get_run_path(run_name, self.args.out_dir or self.settings.out_dir))
        self.collectors.append(collector)
        return collector

    def rollback(self):
        for collector in reversed(self.collectors):
            collector.rollback()

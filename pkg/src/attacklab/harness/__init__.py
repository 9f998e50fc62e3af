"""Experiment orchestration: config files, seeded runs, reports, CLI."""

from .config import (
    ATTACK_METHODS,
    ConfigError,
    ExperimentConfig,
    config_hash,
    load_config,
    parse_config_text,
)
from .report import emit_report, parse_report
from .runner import (
    Aggregate,
    RunRecord,
    SeedResult,
    WrongArity,
    aggregate_median3,
    load_record,
    run_experiment,
    save_record,
)

__all__ = [
    "ATTACK_METHODS",
    "Aggregate",
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "SeedResult",
    "WrongArity",
    "aggregate_median3",
    "config_hash",
    "emit_report",
    "load_config",
    "load_record",
    "parse_config_text",
    "parse_report",
    "run_experiment",
    "save_record",
]

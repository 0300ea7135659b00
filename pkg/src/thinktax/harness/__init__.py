"""Batch evaluation: datasets, resumable sweeps, checkpoints and reports."""

from .dataset import DataError, DatasetItem, load_dataset, parse_gold, synthetic_dataset
from .records import Checkpoint, RunRecord, RunSet, load_runset
from .report import diagnose, paired_compare, summarize, to_csv, to_json, to_text
from .sweep import PolicyEntry, SweepSpec, build_backend, load_config, run_sweep, sim_config_from

__all__ = [
    "Checkpoint",
    "DataError",
    "DatasetItem",
    "PolicyEntry",
    "RunRecord",
    "RunSet",
    "SweepSpec",
    "build_backend",
    "diagnose",
    "load_config",
    "load_dataset",
    "load_runset",
    "paired_compare",
    "parse_gold",
    "run_sweep",
    "sim_config_from",
    "summarize",
    "synthetic_dataset",
    "to_csv",
    "to_json",
    "to_text",
]

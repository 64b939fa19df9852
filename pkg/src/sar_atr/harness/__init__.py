"""Experiment orchestration: datasets, cross-validation, reports and the CLI."""
from .config import ExperimentConfig, load_config, parse_config
from .dataset import generate_dataset, load_dataset
from .experiment import angle_binned_report, report, run_cv, split_folds

__all__ = ["ExperimentConfig", "load_config", "parse_config", "generate_dataset",
           "load_dataset", "angle_binned_report", "report", "run_cv", "split_folds"]

"""Experiment protocol: configs, training runs, evaluation, comparison, plots, CLI."""

from .config import Budget, ConfigError, RunConfig
from .evaluation import EvalReport, evaluate_fitness, evaluate_policy
from .plots import emit_plots, median_smooth
from .report import ResultRow, compare_runs, ordered, read_trace, write_trace
from .runner import budget_hit, run_experiment
from .stats import ComparisonResult, mann_whitney_u
from .tasks import fitness_for_task, task_from_config

__all__ = [
    "Budget", "ComparisonResult", "ConfigError", "EvalReport", "ResultRow", "RunConfig", "budget_hit",
    "compare_runs", "emit_plots", "evaluate_fitness", "evaluate_policy", "fitness_for_task", "mann_whitney_u",
    "median_smooth", "ordered", "read_trace", "run_experiment", "task_from_config", "write_trace",
]

"""Continual learning for neural rankers: metrics, GEM projection, k-means,
and the experiment driver behind the ``contir`` command."""

from ._contir import (
    ConfigError,
    ContirError,
    DataError,
    DomainError,
    NumericError,
    ShapeError,
    StateError,
    __version__,
    bwt,
    check_config,
    config_keys,
    fwt,
    gem_project,
    kmeans,
    mrr,
    p_final,
    pearson,
    rank,
    report,
    run,
    run_experiment,
    solve_dual_qp,
    taskgen,
)

__all__ = [
    "ConfigError",
    "ContirError",
    "DataError",
    "DomainError",
    "NumericError",
    "ShapeError",
    "StateError",
    "__version__",
    "bwt",
    "check_config",
    "config_keys",
    "fwt",
    "gem_project",
    "kmeans",
    "mrr",
    "p_final",
    "pearson",
    "rank",
    "report",
    "run",
    "run_experiment",
    "solve_dual_qp",
    "taskgen",
]

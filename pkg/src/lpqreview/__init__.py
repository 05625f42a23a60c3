"""Two-step L(p,q) aggregation of multi-criteria peer reviews."""

from .engine import ConvergenceError, aggregate, erm_fit, left_median, pmean_1d, solve_dataset, solve_lpq
from .model import DatasetError, FittedValues, ObjectivityError, Params, ReviewDataset, Solution, validate_dataset

__all__ = [
    "ConvergenceError",
    "DatasetError",
    "FittedValues",
    "ObjectivityError",
    "Params",
    "ReviewDataset",
    "Solution",
    "aggregate",
    "erm_fit",
    "left_median",
    "pmean_1d",
    "solve_dataset",
    "solve_lpq",
    "validate_dataset",
]

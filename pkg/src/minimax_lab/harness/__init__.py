"""Experiment orchestration: configs, runs, sweeps, rate fits, recipes and output."""

from .config import RunConfig, parse_config, resolve
from .emit import Table, emit
from .recipes import RECIPES, RecipeResult, run_recipe
from .runner import RateFit, RunResult, execute, fit_rate, sweep, trajectory_table

__all__ = [
    "RunConfig", "parse_config", "resolve", "Table", "emit", "RECIPES", "RecipeResult", "run_recipe",
    "RateFit", "RunResult", "execute", "fit_rate", "sweep", "trajectory_table",
]

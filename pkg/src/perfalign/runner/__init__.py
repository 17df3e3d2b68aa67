"""Grid runner: configuration, grid expansion, experiment execution and CLI."""

from .config import ExperimentConfig, GridBlock, Recording, load_config, full_grid
from .experiment import annotate_transfer, run_experiment, single_alignment
from .grid import Cell, build_grid, expand_grid

__all__ = ["ExperimentConfig", "GridBlock", "Recording", "load_config", "full_grid", "annotate_transfer",
           "run_experiment", "single_alignment", "Cell", "build_grid", "expand_grid"]

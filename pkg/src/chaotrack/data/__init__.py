from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .grid import GridSeries, Location, default_locations, load_grid, save_grid
from .normalize import Normalizer, apply, fit_normalizer, invert
from .synthetic import gen_logistic, gen_lorenz, gen_seasonal_chaotic

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "GridSeries",
    "Location",
    "Normalizer",
    "apply",
    "default_locations",
    "fit_normalizer",
    "gen_logistic",
    "gen_lorenz",
    "gen_seasonal_chaotic",
    "invert",
    "load_checkpoint",
    "load_grid",
    "save_checkpoint",
    "save_grid",
]

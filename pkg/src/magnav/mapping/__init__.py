"""Map storage, file formats, georeferencing and synthetic map generation."""
from .formats import ASCII_GRID, CSV_GRID, detect_format, load_grid, save_grid
from .geodesy import LocalFrame
from .grid import MapGrid, downsample, sample, sample_many
from .synthetic import SyntheticMapSpec, synthetic_map

__all__ = [
    "ASCII_GRID",
    "CSV_GRID",
    "LocalFrame",
    "MapGrid",
    "SyntheticMapSpec",
    "detect_format",
    "downsample",
    "load_grid",
    "sample",
    "sample_many",
    "save_grid",
    "synthetic_map",
]

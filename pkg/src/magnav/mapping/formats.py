"""Readers and writers for ESRI ASCII grid and header-prefixed CSV maps."""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import numpy as np

from ..errors import MapParseError
from .grid import DEFAULT_NODATA, MapGrid

LOGGER = logging.getLogger(__name__)

ASCII_GRID = "ascii-grid"
CSV_GRID = "csv"
FORMATS = (ASCII_GRID, CSV_GRID)

_ESRI_REQUIRED = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")
_CSV_HEADER = ("lat0", "lon0", "cell_size", "n_rows", "n_cols", "nodata")


def detect_format(path: Path) -> str:
    # Infers the map format from the file suffix
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return CSV_GRID
    if suffix in {".asc", ".grd", ".txt"}:
        return ASCII_GRID
    raise MapParseError(f"cannot infer map format from suffix '{suffix}'; pass one of {FORMATS}", path=str(path))


def _parse_number(token: str, path: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MapParseError(f"non-numeric cell '{token}'", path=path, line=line) from None
    if not math.isfinite(value):
        raise MapParseError(f"non-finite cell '{token}'", path=path, line=line)
    return value


def _parse_rows(
    lines: Iterable[Tuple[int, str]], n_rows: int, n_cols: int, path: str, delimiter: str | None
) -> np.ndarray:
    # Reads exactly n_rows data rows of n_cols values, one row per line
    rows: List[List[float]] = []
    for data_row, (line_no, text) in enumerate(lines, start=1):
        tokens = text.split(delimiter) if delimiter else text.split()
        tokens = [token.strip() for token in tokens]
        if len(tokens) != n_cols:
            raise MapParseError(
                f"ragged row {data_row}: expected {n_cols} values, found {len(tokens)}", path=path, line=line_no
            )
        if len(rows) == n_rows:
            raise MapParseError(f"more than the declared {n_rows} rows", path=path, line=line_no)
        rows.append([_parse_number(token, path, line_no) for token in tokens])
    if len(rows) != n_rows:
        raise MapParseError(f"expected {n_rows} rows, found {len(rows)}", path=path)
    return np.array(rows, dtype=float)


def _numbered_lines(text: str) -> List[Tuple[int, str]]:
    return [(number, line) for number, line in enumerate(text.splitlines(), start=1) if line.strip()]


def _load_ascii_grid(path: Path) -> MapGrid:
    lines = _numbered_lines(path.read_text())
    header: Dict[str, float] = {}
    index = 0
    while index < len(lines):
        line_no, text = lines[index]
        tokens = text.split()
        key = tokens[0].lower()
        if key[0].isdigit() or key[0] in "+-.":
            break
        if len(tokens) != 2:
            raise MapParseError(f"malformed header line '{text.strip()}'", path=str(path), line=line_no)
        header[key] = _parse_number(tokens[1], str(path), line_no)
        index += 1
    missing = [key for key in _ESRI_REQUIRED if key not in header]
    if missing:
        raise MapParseError(f"missing header keys: {', '.join(missing)}", path=str(path))
    n_rows, n_cols = int(header["nrows"]), int(header["ncols"])
    values = _parse_rows(lines[index:], n_rows, n_cols, str(path), None)
    return MapGrid(
        origin_lat=header["yllcorner"],
        origin_lon=header["xllcorner"],
        cell_size=header["cellsize"],
        values=values,
        nodata=header.get("nodata_value", DEFAULT_NODATA),
    )


def _load_csv_grid(path: Path) -> MapGrid:
    lines = _numbered_lines(path.read_text())
    if not lines:
        raise MapParseError("empty file", path=str(path))
    names = tuple(token.strip().lower() for token in lines[0][1].split(","))
    if names == _CSV_HEADER:
        lines = lines[1:]
        if not lines:
            raise MapParseError("missing header values after column names", path=str(path))
    line_no, text = lines[0]
    tokens = [token.strip() for token in text.split(",")]
    if len(tokens) != len(_CSV_HEADER):
        raise MapParseError(
            f"malformed header: expected {','.join(_CSV_HEADER)}, found {len(tokens)} fields", path=str(path), line=line_no
        )
    lat0, lon0, cell_size, n_rows, n_cols, nodata = (_parse_number(token, str(path), line_no) for token in tokens)
    values = _parse_rows(lines[1:], int(n_rows), int(n_cols), str(path), ",")
    return MapGrid(origin_lat=lat0, origin_lon=lon0, cell_size=cell_size, values=values, nodata=nodata)


def load_grid(path: Path, fmt: str | None = None) -> MapGrid:
    """Load a TMI grid from an ESRI ASCII grid or header-prefixed CSV file."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt not in FORMATS:
        raise MapParseError(f"unknown map format '{fmt}'", path=str(path))
    try:
        grid = _load_ascii_grid(path) if fmt == ASCII_GRID else _load_csv_grid(path)
    except ValueError as exc:
        if isinstance(exc, MapParseError):
            raise
        raise MapParseError(str(exc), path=str(path)) from exc
    if grid.n_rows < 2 or grid.n_cols < 2:
        raise MapParseError(f"map needs at least 2x2 cells, got {grid.n_rows}x{grid.n_cols}", path=str(path))
    LOGGER.debug("Loaded %s map %s: %dx%d cells of %.1f m", fmt, path, grid.n_rows, grid.n_cols, grid.cell_size)
    return grid


def save_grid(grid: MapGrid, path: Path, fmt: str | None = None) -> Path:
    """Write a grid so that load_grid reproduces it bit for bit."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        if fmt == ASCII_GRID:
            handle.write(f"ncols {grid.n_cols}\n")
            handle.write(f"nrows {grid.n_rows}\n")
            handle.write(f"xllcorner {grid.origin_lon!r}\n")
            handle.write(f"yllcorner {grid.origin_lat!r}\n")
            handle.write(f"cellsize {grid.cell_size!r}\n")
            handle.write(f"NODATA_value {grid.nodata!r}\n")
            np.savetxt(handle, grid.values, fmt="%.17g", delimiter=" ")
        elif fmt == CSV_GRID:
            handle.write(
                f"{grid.origin_lat!r},{grid.origin_lon!r},{grid.cell_size!r},{grid.n_rows},{grid.n_cols},{grid.nodata!r}\n"
            )
            np.savetxt(handle, grid.values, fmt="%.17g", delimiter=",")
        else:
            raise MapParseError(f"unknown map format '{fmt}'", path=str(path))
    return path

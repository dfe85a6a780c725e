import numpy as np
import pytest

from magnav.errors import MapParseError
from magnav.mapping import ASCII_GRID, CSV_GRID, MapGrid, detect_format, load_grid, save_grid

ASC_TEXT = """ncols 3
nrows 2
xllcorner 144.5
yllcorner -38.0
cellsize 85
NODATA_value -9999
1.5 2.5 3.5
4.5 -9999 6.5
"""


def _random_grid(n_rows, n_cols, seed=0):
    rng = np.random.default_rng(seed)
    return MapGrid(-38.123456789, 144.987654321, 85.0, rng.normal(58000.0, 150.0, size=(n_rows, n_cols)))


@pytest.mark.parametrize("suffix", [".csv", ".asc"])
def test_saved_grid_reloads_bit_for_bit(tmp_path, suffix):
    grid = _random_grid(100, 100)
    loaded = load_grid(save_grid(grid, tmp_path / f"map{suffix}"))
    np.testing.assert_array_equal(loaded.values, grid.values)
    assert (loaded.origin_lat, loaded.origin_lon, loaded.cell_size) == (grid.origin_lat, grid.origin_lon, grid.cell_size)
    assert loaded.nodata == grid.nodata


def test_ascii_grid_rows_run_north_to_south(tmp_path):
    path = tmp_path / "tiny.asc"
    path.write_text(ASC_TEXT)
    grid = load_grid(path)
    assert grid.values.shape == (2, 3)
    assert grid.values[0, 0] == 1.5
    assert grid.cell_centre(0, 0)[0] == pytest.approx(127.5)
    assert grid.nodata == -9999.0
    assert not grid.valid_mask[1, 1]
    assert grid.nodata_count == 1


def test_ragged_row_reports_its_line(tmp_path):
    path = tmp_path / "ragged.asc"
    path.write_text(ASC_TEXT.replace("4.5 -9999 6.5", "4.5 6.5"))
    with pytest.raises(MapParseError) as info:
        load_grid(path)
    assert info.value.line == 8
    assert "ragged" in str(info.value)


def test_non_numeric_cell_is_rejected(tmp_path):
    path = tmp_path / "text.asc"
    path.write_text(ASC_TEXT.replace("2.5", "abc"))
    with pytest.raises(MapParseError) as info:
        load_grid(path)
    assert info.value.line == 7


def test_missing_header_key_is_rejected(tmp_path):
    path = tmp_path / "header.asc"
    path.write_text(ASC_TEXT.replace("cellsize 85\n", ""))
    with pytest.raises(MapParseError, match="cellsize"):
        load_grid(path)


def test_row_count_must_match_header(tmp_path):
    path = tmp_path / "short.asc"
    path.write_text(ASC_TEXT.replace("nrows 2", "nrows 3"))
    with pytest.raises(MapParseError, match="expected 3 rows"):
        load_grid(path)


@pytest.mark.parametrize("with_names", [True, False])
def test_csv_header_with_or_without_column_names(tmp_path, with_names):
    lines = ["-38.0,144.5,100.0,2,2,-99999.0", "1,2", "3,4"]
    if with_names:
        lines.insert(0, "lat0,lon0,cell_size,n_rows,n_cols,nodata")
    path = tmp_path / "grid.csv"
    path.write_text("\n".join(lines) + "\n")
    grid = load_grid(path)
    np.testing.assert_array_equal(grid.values, [[1.0, 2.0], [3.0, 4.0]])
    assert grid.cell_size == 100.0


def test_csv_with_short_header_is_rejected(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text("-38.0,144.5,100.0\n1,2\n3,4\n")
    with pytest.raises(MapParseError) as info:
        load_grid(path)
    assert info.value.line == 1


@pytest.mark.parametrize(
    "name, expected",
    [("a.csv", CSV_GRID), ("a.ASC", ASCII_GRID), ("a.grd", ASCII_GRID), ("a.txt", ASCII_GRID)],
)
def test_detect_format(name, expected):
    assert detect_format(name) == expected


def test_unknown_suffix_is_rejected():
    with pytest.raises(MapParseError):
        detect_format("map.tif")


def test_missing_file_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_grid(tmp_path / "absent.asc")


def test_single_row_map_is_rejected(tmp_path):
    path = tmp_path / "row.asc"
    path.write_text(ASC_TEXT.replace("nrows 2", "nrows 1").replace("4.5 -9999 6.5\n", ""))
    with pytest.raises(MapParseError, match="2x2"):
        load_grid(path)

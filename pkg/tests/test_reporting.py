import numpy as np
import pandas as pd
import pytest

from magnav.errors import ReportError
from magnav.harness import RunMetrics, RunRecord
from magnav.matching import SweepResult
from magnav.reporting import (
    RMS_COLUMNS,
    RUN_COLUMNS,
    emit_report,
    plot_sweep,
    read_rms_csv,
    read_run_csv,
    read_sweep_csv,
    rms_frame,
    rms_from_run_files,
    run_csv_name,
    write_run_directory,
    write_sweep_csv,
)

TIMES = np.array([0.0, 1.0, 2.0])


def _record(label, seed, errors):
    errors = np.asarray(errors, dtype=float)
    lat = -38.0 + 1e-4 * TIMES
    return RunRecord(
        label=label,
        seed=seed,
        times=TIMES.copy(),
        errors=errors,
        truth_lat=lat,
        truth_lon=np.full(3, 144.5),
        est_lat=lat + 1e-6,
        est_lon=np.full(3, 144.5 + 1e-6),
        mag_samples=0,
        attempts=0,
        fixes=0,
        accepted=0,
        rejected=0,
    )


@pytest.fixture
def records():
    return {
        "ins-only": [_record("ins-only", 1, [0.0, 3.0, 4.0]), _record("ins-only", 2, [0.0, 4.0, 3.0])],
        "sigma-0.1nT": [_record("sigma-0.1nT", 1, [0.0, 0.3, 1.0 / 3.0]), _record("sigma-0.1nT", 2, [0.0, 0.4, 0.1])],
    }


@pytest.fixture
def metrics(records):
    return {label: RunMetrics.from_records(runs) for label, runs in records.items()}


def test_rms_table_has_one_block_per_case(metrics):
    frame = rms_frame(metrics)
    assert list(frame.columns) == RMS_COLUMNS
    assert list(frame["case"]) == ["ins-only"] * 3 + ["sigma-0.1nT"] * 3
    np.testing.assert_allclose(frame["rms_m"][:3], [0.0, np.sqrt(12.5), np.sqrt(12.5)])
    assert set(frame["n_runs"]) == {2}


def test_rms_csv_reads_back_exactly(tmp_path, metrics):
    csv_path, svg_path = emit_report(metrics, tmp_path / "out" / "rms.csv", tmp_path / "out" / "rms.svg")
    assert len(csv_path.read_text(encoding="utf-8").splitlines()) == 7
    pd.testing.assert_frame_equal(read_rms_csv(csv_path), rms_frame(metrics))
    svg = svg_path.read_text(encoding="utf-8")
    assert 'id="ins-only"' in svg and 'id="sigma-0.1nT"' in svg


def test_single_case_csv(tmp_path, metrics):
    (path,) = emit_report({"ins-only": metrics["ins-only"]}, tmp_path / "rms.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,rms_m,n_runs,case"
    assert len(lines) == 4


def test_empty_report_is_rejected(tmp_path):
    with pytest.raises(ReportError):
        emit_report({}, tmp_path / "rms.csv")


def test_unwritable_destination(tmp_path, metrics):
    blocker = tmp_path / "taken"
    blocker.write_text("", encoding="utf-8")
    with pytest.raises(ReportError):
        emit_report(metrics, blocker / "rms.csv")


def test_run_files_reproduce_the_rms(tmp_path, records, metrics):
    paths = write_run_directory(records, tmp_path / "runs")
    assert [path.name for path in paths] == [
        "ins-only_run000.csv",
        "ins-only_run001.csv",
        "sigma-0_1nT_run000.csv",
        "sigma-0_1nT_run001.csv",
    ]
    frame = read_run_csv(paths[0])
    assert list(frame.columns) == RUN_COLUMNS
    np.testing.assert_array_equal(frame["est_lat"], records["ins-only"][0].est_lat)
    np.testing.assert_allclose(rms_from_run_files(paths[2:]), metrics["sigma-0.1nT"].rms, rtol=1e-12)


@pytest.mark.parametrize(
    "label, expected",
    [("ins-only", "ins-only_run007.csv"), ("sigma 0.1/nT", "sigma_0_1_nT_run007.csv"), ("a_b", "a_b_run007.csv")],
)
def test_run_file_names(label, expected):
    assert run_csv_name(label, 7) == expected


def test_sweep_csv_and_plot(tmp_path):
    results = [
        SweepResult(0.001, 1, 12.5, 3.0, 180, 20),
        SweepResult(0.1, 1, 30.0, 9.0, 200),
        SweepResult(0.001, 5, float("nan"), float("nan"), 0, 200),
        SweepResult(0.1, 5, 90.0, 20.0, 150, 50),
    ]
    path = write_sweep_csv(results, tmp_path / "sweep.csv")
    frame = read_sweep_csv(path)
    assert list(frame["factor"]) == [1, 1, 5, 5]
    assert np.isnan(frame["mean_error_m"][2])
    assert frame["n"][0] == 180
    svg = plot_sweep(results, tmp_path / "sweep.svg").read_text(encoding="utf-8")
    assert 'id="factor-1"' in svg and 'id="factor-5"' in svg


def test_missing_columns_are_reported(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("t,value\n0,1\n", encoding="utf-8")
    with pytest.raises(ReportError, match="missing columns"):
        read_rms_csv(path)

"""CSV and SVG output for runs, Monte Carlo summaries and noise/resolution sweeps."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import ReportError  # noqa: E402
from .harness import RunMetrics, RunRecord  # noqa: E402
from .matching.quality import SweepResult  # noqa: E402

LOGGER = logging.getLogger(__name__)

RMS_COLUMNS = ["t", "rms_m", "n_runs", "case"]
RUN_COLUMNS = ["t", "truth_lat", "truth_lon", "est_lat", "est_lon", "err_m"]
SWEEP_COLUMNS = ["sigma", "factor", "mean_error_m", "std_error_m", "n"]

# Stable element ids across invocations
plt.rcParams["svg.hashsalt"] = "magnav"


def _prepare(path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {path.parent}: {exc}") from exc
    return path


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = _prepare(path)
    try:
        frame.to_csv(path, index=False, encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    LOGGER.info("Wrote %d rows to %s", len(frame), path)
    return path


def _read_csv(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise ReportError(f"{path}: missing columns {missing}")
    return frame


def rms_frame(metrics: Mapping[str, RunMetrics]) -> pd.DataFrame:
    """Long table of per-time RMS, one block of rows per case in configuration order."""
    blocks = [
        pd.DataFrame({"t": case.times, "rms_m": case.rms, "n_runs": case.n_runs, "case": label})
        for label, case in metrics.items()
    ]
    return pd.concat(blocks, ignore_index=True)[RMS_COLUMNS]


def write_rms_csv(metrics: Mapping[str, RunMetrics], path: Path) -> Path:
    return _write_csv(rms_frame(metrics), path)


def read_rms_csv(path: Path) -> pd.DataFrame:
    return _read_csv(path, RMS_COLUMNS)


def _save_figure(fig, path: Path) -> Path:
    path = _prepare(path)
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    LOGGER.info("Wrote plot to %s", path)
    return path


def plot_rms(metrics: Mapping[str, RunMetrics], path: Path, title: Optional[str] = None) -> Path:
    """RMS horizontal error against time in hours; each case's line carries its label as SVG id."""
    fig, ax = plt.subplots(figsize=(10, 5))
    for label, case in metrics.items():
        (line,) = ax.plot(case.times / 3600.0, case.rms, label=f"{label} ({case.n_runs} runs)")
        line.set_gid(label)
    ax.set_xlabel("Time [h]")
    ax.set_ylabel("RMS horizontal position error [m]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save_figure(fig, path)


def emit_report(metrics: Mapping[str, RunMetrics], csv_path: Path, svg_path: Optional[Path] = None) -> List[Path]:
    """Writes the per-case RMS CSV and, when asked, the SVG plot."""
    if not metrics:
        raise ReportError("nothing to report: no cases")
    written = [write_rms_csv(metrics, csv_path)]
    if svg_path is not None:
        written.append(plot_rms(metrics, svg_path))
    return written


def run_frame(record: RunRecord) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "t": record.times,
            "truth_lat": record.truth_lat,
            "truth_lon": record.truth_lon,
            "est_lat": record.est_lat,
            "est_lon": record.est_lon,
            "err_m": record.errors,
        }
    )[RUN_COLUMNS]


def write_run_csv(record: RunRecord, path: Path) -> Path:
    return _write_csv(run_frame(record), path)


def read_run_csv(path: Path) -> pd.DataFrame:
    return _read_csv(path, RUN_COLUMNS)


def run_csv_name(label: str, index: int) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label)
    return f"{safe}_run{index:03d}.csv"


def write_run_directory(records: Mapping[str, Sequence[RunRecord]], directory: Path) -> List[Path]:
    # One CSV per (case, run index)
    directory = Path(directory)
    written = []
    for label, runs in records.items():
        for index, record in enumerate(runs):
            written.append(write_run_csv(record, directory / run_csv_name(label, index)))
    return written


def rms_from_run_files(paths: Sequence[Path]) -> np.ndarray:
    """Per-time RMS recomputed from stored run CSVs."""
    errors = np.vstack([read_run_csv(path)["err_m"].to_numpy() for path in paths])
    return np.sqrt(np.mean(errors ** 2, axis=0))


def sweep_frame(results: Sequence[SweepResult]) -> pd.DataFrame:
    return pd.DataFrame([result.to_dict() for result in results], columns=SWEEP_COLUMNS)


def write_sweep_csv(results: Sequence[SweepResult], path: Path) -> Path:
    return _write_csv(sweep_frame(results), path)


def read_sweep_csv(path: Path) -> pd.DataFrame:
    return _read_csv(path, SWEEP_COLUMNS)


def plot_sweep(results: Sequence[SweepResult], path: Path) -> Path:
    """Mean PDA error against sensor sigma on a log axis, one line per grid factor."""
    frame = sweep_frame(results)
    fig, ax = plt.subplots(figsize=(8, 5))
    groups: Dict[int, pd.DataFrame] = dict(tuple(frame.groupby("factor", sort=True)))
    for factor, group in groups.items():
        group = group.sort_values("sigma")
        (line,) = ax.plot(group["sigma"], group["mean_error_m"], marker="o", label=f"factor {factor}")
        line.set_gid(f"factor-{factor}")
    ax.set_xscale("log")
    ax.set_xlabel("Magnetometer noise sigma [nT]")
    ax.set_ylabel("Mean PDA position error [m]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save_figure(fig, path)

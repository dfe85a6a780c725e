"""Rich terminal UI for the magnav command line."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .harness import MonteCarloResult, RunRecord
from .mapping import MapGrid
from .matching import QualityRaster, SweepResult


def _metres(value: float) -> str:
    return "n/a" if value is None or not math.isfinite(value) else f"{value:,.1f} m"


class RichPresenter:
    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def _header(self, title: str) -> None:
        self.console.print()
        self.console.rule(f"[bold green]{title}[/bold green]")
        self.console.print()

    def display_map_info(self, grid: MapGrid, path: Optional[Path] = None) -> None:
        self._header("Map")
        low, high = grid.value_range()
        north, east = grid.extent
        table = Table(box=box.ROUNDED, show_header=False)
        table.add_column("Field", style="cyan", no_wrap=True)
        table.add_column("Value", justify="right")
        if path is not None:
            table.add_row("File", str(path))
        table.add_row("Size", f"{grid.n_rows} rows x {grid.n_cols} cols")
        table.add_row("Cell size", f"{grid.cell_size:g} m")
        table.add_row("Origin (SW)", f"{grid.origin_lat:.6f}, {grid.origin_lon:.6f}")
        table.add_row("Extent", f"{north / 1000.0:.2f} km N x {east / 1000.0:.2f} km E")
        table.add_row("TMI range", f"{low:.3f} .. {high:.3f} nT")
        table.add_row("Nodata cells", f"{grid.nodata_count}")
        self.console.print(table)
        self.console.print()

    def display_json(self, payload: Dict[str, Any]) -> None:
        self.console.print_json(data=payload)

    def display_raster(self, raster: QualityRaster, path: Optional[Path] = None) -> None:
        self._header(f"{raster.kind} raster")
        valid = raster.values[raster.valid_mask]
        table = Table(box=box.ROUNDED, show_header=False)
        table.add_column("Field", style="cyan")
        table.add_column("Value", justify="right")
        table.add_row("Valid cells", f"{valid.size}")
        if valid.size:
            table.add_row("Min / median / max", f"{valid.min():.4g} / {float(np.median(valid)):.4g} / {valid.max():.4g}")
        table.add_row("Normalised", "yes" if raster.normalized else "no")
        if path is not None:
            table.add_row("Written to", str(path))
        self.console.print(table)
        self.console.print()

    def display_sweep(self, results: Sequence[SweepResult]) -> None:
        self._header("Noise / resolution sweep")
        table = Table(box=box.ROUNDED, title="Mean PDA position error")
        table.add_column("Sigma [nT]", justify="right", style="cyan")
        table.add_column("Factor", justify="right")
        table.add_column("Mean error", justify="right", style="green")
        table.add_column("Std", justify="right")
        table.add_column("Fixes", justify="right")
        table.add_column("Empty", justify="right", style="magenta")
        for result in results:
            table.add_row(
                f"{result.sensor_sigma:g}",
                f"{result.grid_factor}",
                _metres(result.mean_error),
                _metres(result.std_error),
                f"{result.n_samples}",
                f"{result.n_empty}",
            )
        self.console.print(table)
        self.console.print()

    def display_run(self, record: RunRecord) -> None:
        self._header(f"Run {record.seed} ({record.label})")
        summary = (
            f"[bold]Final error:[/bold] {_metres(record.final_error)}\n"
            f"[bold]Peak error:[/bold] {_metres(float(record.errors.max()))}\n"
            f"[bold]Magnetometer readings:[/bold] {record.mag_samples}\n"
            f"[bold]Fixes:[/bold] {record.fixes}/{record.attempts} produced, "
            f"{record.accepted} accepted, {record.rejected} rejected"
        )
        self.console.print(Panel(summary, title="Summary", border_style="green", expand=False))
        self.console.print()

    def display_monte_carlo(self, result: MonteCarloResult) -> None:
        self._header(f"Monte Carlo ({result.n_runs} runs)")
        table = Table(box=box.ROUNDED, title="RMS horizontal position error")
        table.add_column("Case", style="cyan", no_wrap=True)
        table.add_column("Mean RMS", justify="right")
        table.add_column("Final RMS", justify="right", style="green")
        table.add_column("Fixes", justify="right")
        table.add_column("Success", justify="right")
        table.add_column("Rejected", justify="right", style="magenta")
        for label, metrics in result.cases.items():
            rate = metrics.success_rate
            table.add_row(
                label,
                _metres(metrics.mean_rms),
                _metres(metrics.final_rms),
                f"{metrics.fixes}/{metrics.attempts}",
                "-" if rate is None else f"{rate:.0%}",
                f"{metrics.rejected}",
            )
        self.console.print(table)
        self.console.print()


"""Command-line interface for magnetic anomaly map-matching navigation."""
from __future__ import annotations

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np

from .config import RuntimeSettings, ScenarioConfig, load_scenario
from .errors import ConfigurationError, MagnavError, MapParseError, ReportError
from .harness import prepare, run_monte_carlo, run_scenario
from .mapping import MapGrid, SyntheticMapSpec, load_grid, sample, save_grid, synthetic_map
from .matching import (
    ALGORITHMS,
    PMHT,
    GateParams,
    MatchParams,
    SearchWindow,
    load_batch,
    match_batch,
    mfv,
    noise_resolution_sweep,
    pda_error_map,
    single_scan_fix,
)
from .matching.quality import DEFAULT_PRIOR_STD_M
from .models import GeoPosition, MagMeasurement, PriorPosition
from .reporting import emit_report, plot_sweep, write_run_csv, write_run_directory, write_sweep_csv
from .ui import RichPresenter
from .utils import derive_seed

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _configure_logging(verbose: bool, level_name: Optional[str] = None) -> None:
    # Sets the logging level from the verbose flag, or from MAGNAV_LOG_LEVEL when given
    level = logging.DEBUG if verbose else logging.INFO
    if level_name and not verbose:
        level = getattr(logging, level_name.upper(), level)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")


def _add_map(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--map", type=Path, required=True, help="ESRI ASCII (.asc) or CSV TMI grid")


def _add_gate(parser: argparse.ArgumentParser, resolution_aware: bool = False) -> None:
    parser.add_argument("--prior-std", type=float, default=DEFAULT_PRIOR_STD_M, help="Prior position std dev in metres")
    parser.add_argument("--gate-probability", type=float, default=0.99, help="Search window probability mass")
    parser.add_argument("--gamma", type=float, help="Chi-square window threshold (overrides --gate-probability)")
    parser.add_argument("--kappa", type=float, default=3.0, help="Signal gate width in sigmas")
    parser.add_argument(
        "--resolution-aware",
        action=argparse.BooleanOptionalAction,
        default=resolution_aware,
        help="Widen the signal gate by the within-cell field spread",
    )


def build_parser() -> argparse.ArgumentParser:
    # Builds the argument parser with one subcommand per tool
    parser = argparse.ArgumentParser(prog="magnav", description="Magnetic anomaly map-matching navigation toolkit")
    parser.add_argument("--verbose", action="store_true", help="Enable verbose logging")
    commands = parser.add_subparsers(dest="command", required=True)

    info = commands.add_parser("map-info", help="Summarise a TMI map file")
    _add_map(info)

    pda = commands.add_parser("pda", help="Single-reading PDA position fix")
    _add_map(pda)
    pda.add_argument("--lat", type=float, help="Prior latitude in degrees")
    pda.add_argument("--lon", type=float, help="Prior longitude in degrees")
    pda.add_argument("--prior-mean", type=float, nargs=2, metavar=("NORTH", "EAST"), help="Prior mean in map metres")
    pda.add_argument("--sigma", type=float, required=True, help="Magnetometer noise std dev in nT")
    pda.add_argument("--value", type=float, help="Magnetometer reading in nT (default: the map value at the prior)")
    _add_gate(pda)
    pda.add_argument("--out", type=Path, help="Also write the JSON payload to this file")

    quality = commands.add_parser("mfv", help="Map feature variability raster")
    _add_map(quality)
    size = quality.add_mutually_exclusive_group()
    size.add_argument("--radius", type=float, help="Circular window radius in metres")
    size.add_argument("--prior-std", type=float, default=DEFAULT_PRIOR_STD_M, help="Window from an isotropic prior")
    quality.add_argument("--gate-probability", type=float, default=0.99)
    quality.add_argument("--gamma", type=float, help="Chi-square window threshold (overrides --gate-probability)")
    quality.add_argument("--normalize", action="store_true", help="Divide by the raster maximum")
    quality.add_argument("--out", type=Path, required=True, help="Raster output (.asc or .csv)")

    error_map = commands.add_parser("error-map", help="PDA error-distance raster at one noise level")
    _add_map(error_map)
    error_map.add_argument("--sigma", type=float, required=True, help="Magnetometer noise std dev in nT")
    error_map.add_argument("--samples", type=int, default=16, help="Noisy readings per cell")
    error_map.add_argument("--seed", type=int, default=0)
    _add_gate(error_map)
    error_map.add_argument("--out", type=Path, required=True, help="Raster output (.asc or .csv)")

    sweep = commands.add_parser("sweep", help="Mean PDA error over noise levels and map resolutions")
    sweep.add_argument("--map", type=Path, help="Map file; a seeded synthetic map when omitted")
    sweep.add_argument("--synthetic-size", type=int, default=512, help="Rows and columns of the synthetic map")
    sweep.add_argument("--synthetic-seed", type=int, default=0)
    sweep.add_argument("--sigmas", type=float, nargs="+", default=[0.001, 0.01, 0.1, 1.0])
    sweep.add_argument("--factors", type=int, nargs="+", default=[1, 5, 10])
    sweep.add_argument("--samples", type=int, default=200, help="Sample locations per cell")
    sweep.add_argument("--noise-draws", type=int, default=1, help="Noise realisations per location")
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--workers", type=int, help="Worker processes (default MAGNAV_WORKERS)")
    _add_gate(sweep, resolution_aware=True)
    sweep.add_argument("--out", type=Path, help="Sweep CSV")
    sweep.add_argument("--svg", type=Path, help="Sweep plot")

    match = commands.add_parser("match", help="Batch map matching of a JSON measurement batch")
    _add_map(match)
    match.add_argument("--batch", type=Path, required=True, help="Batch JSON file")
    match.add_argument("--algo", "--algorithm", dest="algorithm", choices=ALGORITHMS, default=PMHT)
    match.add_argument("--out", type=Path, help="Also write the JSON result to this file")

    simulate = commands.add_parser("simulate", help="One navigation run of a scenario")
    simulate.add_argument("--config", type=Path, required=True, help="Scenario JSON file")
    simulate.add_argument("--seed", type=int, help="Run seed (default: the first Monte Carlo run's seed)")
    simulate.add_argument("--case", help="Case label (default: the first case)")
    simulate.add_argument("--out", type=Path, help="Run CSV")

    montecarlo = commands.add_parser("montecarlo", help="Monte Carlo experiment over every configured case")
    montecarlo.add_argument("--config", type=Path, required=True, help="Scenario JSON file")
    montecarlo.add_argument("--seed", type=int, help="Override the master seed")
    montecarlo.add_argument("--runs", type=int, help="Override the number of runs")
    montecarlo.add_argument("--workers", type=int, help="Worker processes (default MAGNAV_WORKERS)")
    montecarlo.add_argument("--out", type=Path, help="RMS CSV")
    montecarlo.add_argument("--svg", type=Path, help="RMS plot")
    montecarlo.add_argument("--runs-dir", type=Path, help="Directory for per-run CSVs")
    return parser


def _gate_params(args: argparse.Namespace) -> GateParams:
    return GateParams(
        gate_probability=args.gate_probability,
        gamma=args.gamma,
        kappa=args.kappa,
        resolution_aware=args.resolution_aware,
    )


def _window_gate(args: argparse.Namespace) -> GateParams:
    return GateParams(gate_probability=args.gate_probability, gamma=args.gamma)


def _prior_cov(std: float) -> np.ndarray:
    if not std > 0:
        raise ConfigurationError(f"must be positive, got {std}", key="--prior-std")
    return std ** 2 * np.eye(2)


class CommandRunner:
    """Executes parsed subcommands, resolving relative outputs against the runtime output directory."""

    def __init__(self, settings: RuntimeSettings, presenter: Optional[RichPresenter] = None):
        self.settings = settings
        self.presenter = presenter or RichPresenter()

    def _output(self, path: Optional[Path]) -> Optional[Path]:
        if path is None or path.is_absolute():
            return path
        return self.settings.output_dir / path

    def _workers(self, requested: Optional[int]) -> int:
        workers = self.settings.workers if requested is None else requested
        if workers < 1:
            raise ConfigurationError(f"must be at least 1, got {workers}", key="--workers")
        return workers

    def _emit_json(self, payload: Dict[str, Any], path: Optional[Path]) -> None:
        # JSON always goes to stdout; --out keeps a copy on disk
        self.presenter.display_json(payload)
        path = self._output(path)
        if path is None:
            return
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc}") from exc
        LOGGER.info("Wrote %s", path)

    def _save_raster(self, grid: MapGrid, path: Path) -> Path:
        path = self._output(path)
        try:
            return save_grid(grid, path)
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc}") from exc

    def _prior_mean(self, grid: MapGrid, args: argparse.Namespace) -> np.ndarray:
        has_latlon = args.lat is not None or args.lon is not None
        if has_latlon == (args.prior_mean is not None):
            raise ConfigurationError("give either --lat and --lon or --prior-mean", key="--lat")
        if args.prior_mean is not None:
            return np.array(args.prior_mean, dtype=float)
        if args.lat is None or args.lon is None:
            raise ConfigurationError("--lat and --lon go together", key="--lat" if args.lat is None else "--lon")
        try:
            return grid.frame.to_local(GeoPosition(lat=args.lat, lon=args.lon))
        except ValueError as exc:
            raise ConfigurationError(str(exc), key="--lat") from exc

    def map_info(self, args: argparse.Namespace) -> None:
        grid = load_grid(args.map)
        self.presenter.display_map_info(grid, args.map)

    def pda(self, args: argparse.Namespace) -> None:
        grid = load_grid(args.map)
        mean = self._prior_mean(grid, args)
        params = _gate_params(args)
        value = sample(grid, mean) if args.value is None else args.value
        try:
            meas = MagMeasurement(value=value, sigma=args.sigma)
        except ValueError as exc:
            raise ConfigurationError(str(exc), key="--sigma") from exc
        fix, candidates = single_scan_fix(grid, PriorPosition(mean, _prior_cov(args.prior_std)), meas, params)
        payload: Dict[str, Any] = {
            "value_nT": value,
            "n_candidates": len(candidates),
            "underflow": candidates.underflow,
            "fix": None,
        }
        if fix is not None:
            where = grid.frame.from_local(fix.mean)
            payload["fix"] = {**fix.to_dict(), "lat": where.lat, "lon": where.lon}
        else:
            LOGGER.warning("No candidate cell passed the gate")
        self._emit_json(payload, args.out)

    def mfv(self, args: argparse.Namespace) -> None:
        grid = load_grid(args.map)
        if args.radius is not None:
            window = SearchWindow.circular(args.radius)
        else:
            window = SearchWindow.from_gate(_prior_cov(args.prior_std), _window_gate(args))
        raster = mfv(grid, window, normalize=args.normalize)
        path = self._save_raster(raster.grid, args.out)
        self.presenter.display_raster(raster, path)

    def error_map(self, args: argparse.Namespace) -> None:
        grid = load_grid(args.map)
        raster = pda_error_map(
            grid, args.sigma, _prior_cov(args.prior_std), _gate_params(args), n_samples=args.samples, seed=args.seed
        )
        path = self._save_raster(raster.grid, args.out)
        self.presenter.display_raster(raster, path)

    def sweep(self, args: argparse.Namespace) -> None:
        if args.map is not None:
            grid = load_grid(args.map)
        else:
            size = args.synthetic_size
            grid = synthetic_map(SyntheticMapSpec(n_rows=size, n_cols=size, seed=args.synthetic_seed))
        results = noise_resolution_sweep(
            grid,
            args.sigmas,
            args.factors,
            n_samples=args.samples,
            seed=args.seed,
            prior_cov=_prior_cov(args.prior_std),
            params=_gate_params(args),
            n_noise=args.noise_draws,
            workers=self._workers(args.workers),
        )
        self.presenter.display_sweep(results)
        if args.out is not None:
            write_sweep_csv(results, self._output(args.out))
        if args.svg is not None:
            plot_sweep(results, self._output(args.svg))

    def match(self, args: argparse.Namespace) -> None:
        grid = load_grid(args.map)
        batch = load_batch(args.batch)
        result = match_batch(batch, grid, args.algorithm, MatchParams())
        payload = result.to_dict()
        if result.fix is not None:
            where = grid.frame.from_local(result.fix.mean)
            payload["fix"].update(lat=where.lat, lon=where.lon)
        self._emit_json(payload, args.out)

    def simulate(self, args: argparse.Namespace) -> None:
        config = load_scenario(args.config)
        case = config.cases[0]
        if args.case is not None:
            matches = [item for item in config.cases if item.label == args.case]
            if not matches:
                raise ConfigurationError(f"no case labelled {args.case!r}", key="--case")
            case = matches[0]
        seed = args.seed if args.seed is not None else derive_seed(config.seed, 0)
        record = run_scenario(config, seed, case)
        self.presenter.display_run(record)
        out = args.out or config.output.csv
        if out is not None:
            write_run_csv(record, self._output(out))

    def montecarlo(self, args: argparse.Namespace) -> None:
        config: ScenarioConfig = load_scenario(args.config)
        overrides: Dict[str, Any] = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.runs is not None:
            overrides["n_runs"] = args.runs
        if overrides:
            config = replace(config, **overrides)
        setup = prepare(config)
        result = run_monte_carlo(config, workers=self._workers(args.workers), setup=setup)
        self.presenter.display_monte_carlo(result)
        csv_path = args.out or config.output.csv
        svg_path = args.svg or config.output.svg
        runs_dir = args.runs_dir or config.output.runs_dir
        if csv_path is not None:
            emit_report(result.cases, self._output(csv_path), self._output(svg_path))
        elif svg_path is not None:
            LOGGER.warning("An SVG path needs a CSV path as well; no report written")
        if runs_dir is not None:
            write_run_directory(result.records, self._output(runs_dir))

    def dispatch(self, args: argparse.Namespace) -> None:
        handlers: Dict[str, Callable[[argparse.Namespace], None]] = {
            "map-info": self.map_info,
            "pda": self.pda,
            "mfv": self.mfv,
            "error-map": self.error_map,
            "sweep": self.sweep,
            "match": self.match,
            "simulate": self.simulate,
            "montecarlo": self.montecarlo,
        }
        handlers[args.command](args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    # Orchestrates argument parsing, command execution and exit codes
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    try:
        settings = RuntimeSettings.from_env()
    except ConfigurationError as exc:
        _configure_logging(args.verbose)
        LOGGER.error("%s", exc)
        return EXIT_CONFIG
    _configure_logging(args.verbose, settings.log_level)
    try:
        CommandRunner(settings).dispatch(args)
    except (ConfigurationError, MapParseError, FileNotFoundError) as exc:
        LOGGER.error("%s", exc)
        return EXIT_CONFIG
    except MagnavError as exc:
        LOGGER.error("%s", exc)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

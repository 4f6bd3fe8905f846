"""End-to-end orchestration: ingest -> windows/debias -> fit -> correct."""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .artifacts import (
    ArtifactWriter, read_window_index, require, window_from_index, write_parameters,
    write_trace, write_window_index,
)
from .correct import CorrectedSeries, correct_series, monthly_reported_counts
from .debias import DebiasedDistribution, compute_delay_distribution
from .fit import FitError, FitRun, OptimizerConfig, fit_all_windows
from .ingest import EventSet, ParseResult, dedupe, parse_events, redistribute_default_dates, write_events, write_rejects
from .synth import generate, load_scenario, truth_rows
from .windows import DelayHistograms, Window, build_histograms, enumerate_windows, format_month, month_of, parse_month

logger = logging.getLogger(__name__)

DEFAULT_DATE_MODES = ("redistribute", "exclude", "keep")


class ConfigError(ValueError):
    """Invalid configuration (exit status 2)."""


@dataclass
class PipelineConfig:
    inputs: list[str] = field(default_factory=list)
    scenario: str | None = None
    output_dir: str = "out"
    window_length: int = 24
    window_step: int = 1
    first_end: str | None = None
    last_end: str | None = None
    min_events: int = 100
    lag_resolution: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    age_reference: str = "mid"
    year_days: int = 365
    default_dates: str = "redistribute"
    redistribute_seed: int = 0
    emit_traces: bool = False
    emit_windows: bool = False
    threads: int = 1
    delimiter: str = ","
    columns: dict = field(default_factory=dict)

    def validate(self, check_paths: bool = True, require_source: bool = True) -> None:
        if require_source and bool(self.inputs) == bool(self.scenario):
            raise ConfigError("give either input file(s) or a scenario, not both or neither")
        if check_paths:
            for p in [*self.inputs, *([self.scenario] if self.scenario else [])]:
                if not Path(p).exists():
                    raise ConfigError(f"input path does not exist: {p}")
        if self.window_length < 1 or self.window_step < 1:
            raise ConfigError("window length and step must be at least one month")
        if self.lag_resolution != 1:
            raise ConfigError("only 1-day lag resolution is supported")
        if self.min_events < 0:
            raise ConfigError("min_events must be non-negative")
        if self.age_reference not in ("mid", "end"):
            raise ConfigError("age_reference must be 'mid' or 'end'")
        if self.year_days <= 0:
            raise ConfigError("year_days must be positive")
        if self.default_dates not in DEFAULT_DATE_MODES:
            raise ConfigError(f"default_dates must be one of {DEFAULT_DATE_MODES}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.optimizer.max_generations < 1:
            raise ConfigError("max_generations must be positive")
        for name in ("first_end", "last_end"):
            value = getattr(self, name)
            if value is not None:
                try:
                    parse_month(value)
                except ValueError as exc:
                    raise ConfigError(f"{name}: {exc}") from exc

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d["optimizer"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["optimizer"].items()}
        return d


def config_from_dict(d: dict) -> PipelineConfig:
    d = dict(d)
    opt = d.pop("optimizer", None) or {}
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
    opt_known = {f.name for f in dataclasses.fields(OptimizerConfig)}
    if set(opt) - opt_known:
        raise ConfigError(f"unknown optimizer key(s): {', '.join(sorted(set(opt) - opt_known))}")
    opt = {k: tuple(v) if isinstance(v, list) else v for k, v in opt.items()}
    if isinstance(d.get("inputs"), str):
        d["inputs"] = [d["inputs"]]
    for key in ("first_end", "last_end"):
        if isinstance(d.get(key), dt.date):
            d[key] = format_month((d[key].year, d[key].month))
    return PipelineConfig(**d, optimizer=OptimizerConfig(**opt))


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be a mapping")
    return data


# -- stages -----------------------------------------------------------------

@dataclass
class IngestResult:
    events: EventSet
    parse: ParseResult | None
    n_raw: int
    n_duplicates: int
    redistributed: dict[int, int]
    n_moved: int


def ingest_stage(config: PipelineConfig) -> IngestResult:
    parsed: ParseResult | None = None
    if config.scenario:
        events, _ = generate(load_scenario(config.scenario))
    else:
        results = []
        for path in config.inputs:
            with open(path, encoding="utf-8", newline="") as fh:
                results.append(parse_events(fh, config.columns, config.delimiter))
        events = EventSet(
            np.concatenate([r.events.entity_id for r in results]),
            np.concatenate([r.events.occurred_on for r in results]),
            np.concatenate([r.events.reported_on for r in results]),
        )
        parsed = ParseResult(events, [j for r in results for j in r.rejects], sum(r.n_missing_occurred for r in results))
    n_raw = len(events)
    events = dedupe(events)
    n_dup = n_raw - len(events)
    redistributed: dict[int, int] = {}
    n_moved = 0
    if config.default_dates != "keep":
        red = redistribute_default_dates(events, config.redistribute_seed)
        redistributed = red.excess_by_year
        n_moved = int(red.moved.sum())
        events = red.events if config.default_dates == "redistribute" else events.subset(~red.moved)
    logger.info("ingest: %d events (%d duplicates removed, %d default dates moved)", len(events), n_dup, n_moved)
    return IngestResult(events, parsed, n_raw, n_dup, redistributed, n_moved)


@dataclass
class WindowResult:
    window: Window
    histograms: DelayHistograms
    distribution: DebiasedDistribution


def debias_stage(events: EventSet, config: PipelineConfig) -> list[WindowResult]:
    first = parse_month(config.first_end) if config.first_end else None
    last = parse_month(config.last_end) if config.last_end else None
    if last is not None and last > month_of(events.cutoff):
        raise ConfigError(f"last window end {config.last_end} is after the data cutoff {events.cutoff}")
    try:
        windows = enumerate_windows(events, first, last, config.window_length, config.window_step, config.min_events)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    def one(window: Window) -> WindowResult:
        h = build_histograms(events, window)
        return WindowResult(window, h, compute_delay_distribution(h))

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        results = list(pool.map(one, windows))
    for r in results:
        if r.window.sparse:
            logger.warning("window %s is sparse (%d events)", r.window.label, r.window.n_events)
        if r.distribution.degenerate:
            logger.warning("window %s: debiased distribution is degenerate", r.window.label)
    return results


def window_index_rows(results: list[WindowResult], delta_fix: int) -> list[dict]:
    return [
        {
            "window_end": r.window.label,
            "start": r.window.start.isoformat(),
            "end": r.window.end.isoformat(),
            "cutoff": r.window.cutoff.isoformat(),
            "n_events": r.window.n_events,
            "delta_max": r.distribution.delta_max,
            "a_max": r.distribution.a_max,
            "sparse": int(r.window.sparse),
            "degenerate": int(r.distribution.degenerate),
            "delta_fix": delta_fix,
            "distribution": f"distributions/{r.window.label}.csv",
        }
        for r in results
    ]


def write_debias_outputs(writer: ArtifactWriter, results: list[WindowResult], delta_fix: int, histograms: bool) -> None:
    for r in results:
        writer.write(f"distributions/{r.window.label}.csv", r.distribution.write_csv)
        if histograms:
            writer.write(f"histograms/{r.window.label}.csv", r.histograms.write_csv)
    writer.write("windows.csv", lambda fh: write_window_index(window_index_rows(results, delta_fix), fh))


def load_debias_outputs(index_path: Path) -> tuple[list[tuple[Window, DebiasedDistribution]], int]:
    index_path = require(index_path, "debias")
    with open(index_path, encoding="utf-8", newline="") as fh:
        rows = read_window_index(fh)
    if not rows:
        raise ConfigError(f"{index_path} lists no windows")
    pairs = []
    for row in rows:
        dist_path = require(index_path.parent / row["distribution"], "debias")
        with open(dist_path, encoding="utf-8", newline="") as fh:
            pairs.append((window_from_index(row), DebiasedDistribution.read_csv(fh)))
    return pairs, int(rows[0]["delta_fix"])


def fit_stage(pairs, delta_fix: int, config: PipelineConfig) -> FitRun:
    return fit_all_windows(pairs, delta_fix, config.optimizer, trace=config.emit_traces)


def write_fit_outputs(writer: ArtifactWriter, run: FitRun, traces: bool) -> None:
    writer.write("parameters.csv", lambda fh: write_parameters(run.fits, fh))
    if traces:
        for f in run.fits:
            writer.write(f"traces/{f.label}.csv", lambda fh, rows=f.trace: write_trace(rows, fh))


def correct_stage(events: EventSet, run_fits, config: PipelineConfig) -> CorrectedSeries:
    return correct_series(monthly_reported_counts(events), run_fits, events.cutoff, config.age_reference, config.year_days)


# -- full run ---------------------------------------------------------------

@dataclass
class RunResult:
    manifest: dict
    files: list[Path]


def run_pipeline(config: PipelineConfig) -> RunResult:
    """Run every stage and write all artifacts under ``config.output_dir``.

    On any error the files written so far are removed before re-raising.
    """
    config.validate()
    out = Path(config.output_dir)
    writer = ArtifactWriter(out)
    timings: dict[str, float] = {}

    def timed(stage, fn, *args):
        t0 = time.perf_counter()
        try:
            return fn(*args)
        except Exception as exc:
            exc.stage = stage
            raise
        finally:
            timings[stage] = time.perf_counter() - t0

    try:
        ing = timed("ingest", ingest_stage, config)
        events = ing.events
        writer.write("events.csv", lambda fh: write_events(events, fh))
        writer.write("rejects.csv", lambda fh: write_rejects(ing.parse.rejects if ing.parse else [], fh))

        results = timed("debias", debias_stage, events, config)
        delta_fix = int(events.delays.max())
        if config.emit_windows:
            write_debias_outputs(writer, results, delta_fix, histograms=True)

        pairs = [(r.window, r.distribution) for r in results]
        run = timed("fit", fit_stage, pairs, delta_fix, config)
        if not run.fits:
            err = FitError(f"all {len(pairs)} window fits failed")
            err.stage = "fit"
            raise err
        write_fit_outputs(writer, run, config.emit_traces)

        series = timed("correct", correct_stage, events, run.fits, config)
        writer.write("corrected.csv", series.write_csv)

        manifest = {
            "package": "delaycorrect",
            "versions": {
                "delaycorrect": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "config": config.echo(),
            "seed": config.optimizer.seed,
            "data": {
                "n_events": len(events),
                "n_raw": ing.n_raw,
                "duplicates_removed": ing.n_duplicates,
                "rejected_rows": len(ing.parse.rejects) if ing.parse else 0,
                "missing_occurrence_date": ing.parse.n_missing_occurred if ing.parse else 0,
                "default_date_excess_by_year": {str(k): v for k, v in sorted(ing.redistributed.items())},
                "default_dates_moved": ing.n_moved,
                "cutoff": events.cutoff.isoformat(),
                "delta_fix": delta_fix,
            },
            "windows": {
                "count": len(results),
                "first_end": results[0].window.label,
                "last_end": results[-1].window.label,
                "sparse": [r.window.label for r in results if r.window.sparse],
                "degenerate": [r.window.label for r in results if r.distribution.degenerate],
                "failed": [e.window for e in run.failures],
                "unconverged": [f.label for f in run.fits if not f.converged],
            },
            "corrected": {
                "months": len(series.rows),
                "extrapolated": [format_month(r.month) for r in series.rows if r.extrapolated],
            },
            "artifacts": sorted(str(p.relative_to(out)) for p in writer.written),
        }
        writer.write_json("manifest.json", manifest)
        writer.write_json("timings.json", {k: round(v, 6) for k, v in timings.items()})
    except BaseException:
        writer.rollback()
        raise
    return RunResult(manifest, list(writer.written))


def write_synth_outputs(writer: ArtifactWriter, scenario_path) -> EventSet:
    spec = load_scenario(scenario_path)
    events, truth = generate(spec)
    writer.write("events.csv", lambda fh: write_events(events, fh))

    def fill(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "true_count", "alpha", "scale", "mu", "sigma"])
        for month, n, *theta in truth_rows(truth):
            w.writerow([month, n, *(repr(float(v)) for v in theta)])

    writer.write("truth.csv", fill)
    return events

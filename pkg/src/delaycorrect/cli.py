"""Command line interface.

Every stage reads the previous stage's files, so ``ingest``, ``debias``,
``fit`` and ``correct`` can be run one at a time; ``run`` chains them.
Settings come from command-line flags, then ``--config`` (YAML), then the
defaults of :class:`~delaycorrect.pipeline.PipelineConfig`.

Exit status: 0 success, 2 invalid configuration or missing inputs, 3 data
error, 4 fit failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .artifacts import ArtifactWriter, MissingArtifact, read_parameters, require
from .correct import CorrectionError
from .debias import compute_delay_distribution
from .fit import FitError
from .ingest import DataError, EventSet, parse_events, write_events, write_rejects
from .pipeline import (
    ConfigError, PipelineConfig, config_from_dict, correct_stage, debias_stage, fit_stage, ingest_stage,
    load_config_file, load_debias_outputs, run_pipeline, write_debias_outputs, write_fit_outputs,
    write_synth_outputs,
)
from .windows import DelayHistograms

logger = logging.getLogger("delaycorrect")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4

# flag dest -> (config key, optimizer key?)
_CONFIG_KEYS = {
    "inputs": "inputs", "scenario": "scenario", "out": "output_dir",
    "window_length": "window_length", "window_step": "window_step", "first_end": "first_end",
    "last_end": "last_end", "min_events": "min_events", "lag_resolution": "lag_resolution",
    "age_reference": "age_reference", "year_days": "year_days", "default_dates": "default_dates",
    "redistribute_seed": "redistribute_seed", "trace": "emit_traces", "emit_windows": "emit_windows",
    "threads": "threads", "delimiter": "delimiter",
}
_OPTIMIZER_KEYS = {"seed": "seed", "max_generations": "max_generations", "sigma0": "sigma0", "tol_fun": "tol_fun"}

S = argparse.SUPPRESS


def _add_ingest_opts(p):
    p.add_argument("--input", dest="inputs", action="append", default=S, help="event CSV (repeatable)")
    p.add_argument("--default-dates", choices=["redistribute", "exclude", "keep"], default=S,
                   help="what to do with the January-1 excess (default: redistribute)")
    p.add_argument("--redistribute-seed", type=int, default=S)
    p.add_argument("--delimiter", default=S)
    p.add_argument("--column", action="append", default=S, metavar="FIELD=NAME",
                   help="map entity_id/occurred_on/reported_on to a differently named column")


def _add_window_opts(p):
    p.add_argument("--window-length", type=int, default=S, help="months per window (24)")
    p.add_argument("--window-step", type=int, default=S, help="months between windows (1)")
    p.add_argument("--first-end", default=S, metavar="YYYY-MM")
    p.add_argument("--last-end", default=S, metavar="YYYY-MM")
    p.add_argument("--min-events", type=int, default=S, help="windows with fewer events are flagged sparse")
    p.add_argument("--lag-resolution", type=int, default=S, help="days per lag bin (only 1)")
    p.add_argument("--threads", type=int, default=S)


def _add_fit_opts(p):
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--max-generations", type=int, default=S)
    p.add_argument("--sigma0", type=float, default=S)
    p.add_argument("--tol-fun", type=float, default=S)
    p.add_argument("--trace", action="store_true", default=S, help="write per-generation traces")


def _add_correct_opts(p):
    p.add_argument("--age-reference", choices=["mid", "end"], default=S)
    p.add_argument("--year-days", type=int, default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaycorrect", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="YAML configuration file")
        p.add_argument("--out", type=Path, default=S, help="output directory")
        return p

    p = command("ingest", "parse, de-duplicate and clean raw events")
    _add_ingest_opts(p)

    p = command("debias", "per-window histograms and debiased delay distributions")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--events", type=Path, help="events.csv written by `ingest`")
    src.add_argument("--histogram", type=Path, help="single lag,h_A,h_delta histogram file")
    _add_window_opts(p)

    p = command("fit", "fit the delay mixture to each window")
    p.add_argument("--windows", type=Path, required=True, help="windows.csv written by `debias`")
    _add_fit_opts(p)

    p = command("correct", "corrected and year-ahead monthly counts")
    p.add_argument("--events", type=Path, required=True, help="events.csv written by `ingest`")
    p.add_argument("--parameters", type=Path, required=True, help="parameters.csv written by `fit`")
    _add_correct_opts(p)

    p = command("synth", "generate a synthetic event set from a scenario file")
    p.add_argument("--scenario", required=True, default=S)

    p = command("run", "run the whole pipeline")
    _add_ingest_opts(p)
    p.add_argument("--scenario", default=S, help="generate events from a scenario instead of --input")
    _add_window_opts(p)
    _add_fit_opts(p)
    _add_correct_opts(p)
    p.add_argument("--emit-windows", action="store_true", default=S,
                   help="also write per-window histograms and distributions")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    merged: dict = load_config_file(args.config) if getattr(args, "config", None) else {}
    merged = dict(merged)
    optimizer = dict(merged.pop("optimizer", None) or {})
    ns = vars(args)
    for dest, key in _CONFIG_KEYS.items():
        if dest in ns:
            merged[key] = str(ns[dest]) if dest == "out" else ns[dest]
    for dest, key in _OPTIMIZER_KEYS.items():
        if dest in ns:
            optimizer[key] = ns[dest]
    if "column" in ns:
        cols = dict(merged.get("columns") or {})
        for item in ns["column"]:
            field_name, _, name = item.partition("=")
            if field_name not in ("entity_id", "occurred_on", "reported_on") or not name:
                raise ConfigError(f"bad --column {item!r}")
            cols[field_name] = name
        merged["columns"] = cols
    merged["optimizer"] = optimizer
    return config_from_dict(merged)


def _cmd_ingest(config: PipelineConfig, args, writer: ArtifactWriter) -> None:
    if not config.inputs:
        raise ConfigError("ingest needs at least one --input")
    config.validate()
    result = ingest_stage(config)
    writer.write("events.csv", lambda fh: write_events(result.events, fh))
    writer.write("rejects.csv", lambda fh: write_rejects(result.parse.rejects, fh))
    print(f"{len(result.events)} events, {len(result.parse.rejects)} rejected rows, "
          f"{result.n_duplicates} duplicates, {result.n_moved} default dates moved")


def _read_events(path: Path, producer: str = "ingest") -> EventSet:
    with open(require(path, producer), encoding="utf-8", newline="") as fh:
        return parse_events(fh).events


def _cmd_debias(config: PipelineConfig, args, writer: ArtifactWriter) -> None:
    config.validate(require_source=False)
    if args.histogram is not None:
        with open(require(args.histogram, "debias --events ... (histograms/)"), encoding="utf-8", newline="") as fh:
            h = DelayHistograms.read_csv(fh)
        dist = compute_delay_distribution(h)
        writer.write("distribution.csv", dist.write_csv)
        print(f"delta_max={dist.delta_max} a_max={dist.a_max} degenerate={dist.degenerate}")
        return
    events = _read_events(args.events)
    results = debias_stage(events, config)
    write_debias_outputs(writer, results, int(events.delays.max()), histograms=True)
    print(f"{len(results)} windows, {results[0].window.label} .. {results[-1].window.label}")


def _cmd_fit(config: PipelineConfig, args, writer: ArtifactWriter) -> None:
    config.validate(require_source=False)
    pairs, delta_fix = load_debias_outputs(args.windows)
    run = fit_stage(pairs, delta_fix, config)
    if not run.fits:
        raise FitError(f"all {len(pairs)} window fits failed")
    write_fit_outputs(writer, run, config.emit_traces)
    print(f"{len(run.fits)} windows fitted, {len(run.failures)} failed")


def _cmd_correct(config: PipelineConfig, args, writer: ArtifactWriter) -> None:
    config.validate(require_source=False)
    events = _read_events(args.events)
    with open(require(args.parameters, "fit"), encoding="utf-8", newline="") as fh:
        fits = read_parameters(fh, events.cutoff)
    series = correct_stage(events, fits, config)
    writer.write("corrected.csv", series.write_csv)
    print(f"{len(series.rows)} months corrected")


def _cmd_synth(config: PipelineConfig, args, writer: ArtifactWriter) -> None:
    if not Path(config.scenario).exists():
        raise ConfigError(f"scenario file not found: {config.scenario}")
    events = write_synth_outputs(writer, config.scenario)
    print(f"{len(events)} events reported by {events.cutoff}")


def _cmd_run(config: PipelineConfig, args, writer: ArtifactWriter) -> None:
    result = run_pipeline(config)
    w = result.manifest["windows"]
    print(f"{result.manifest['data']['n_events']} events, {w['count']} windows "
          f"({len(w['failed'])} failed), {result.manifest['corrected']['months']} months corrected")


COMMANDS = {
    "ingest": _cmd_ingest, "debias": _cmd_debias, "fit": _cmd_fit,
    "correct": _cmd_correct, "synth": _cmd_synth, "run": _cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    stage = args.command
    writer = None
    try:
        config = resolve_config(args)
        writer = ArtifactWriter(Path(config.output_dir))
        COMMANDS[args.command](config, args, writer)
        return EXIT_OK
    except (ConfigError, MissingArtifact) as exc:
        code, err = EXIT_CONFIG, exc
    except (DataError, CorrectionError) as exc:
        code, err = EXIT_DATA, exc
    except FitError as exc:
        code, err = EXIT_FIT, exc
    if writer is not None:
        writer.rollback()
    print(f"delaycorrect: error [{getattr(err, 'stage', stage)}]: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

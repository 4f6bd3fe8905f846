"""Atomic artifact files and the CSV formats passed between pipeline stages."""
from __future__ import annotations

import csv
import datetime as dt
import json
import os
import tempfile
from pathlib import Path
from typing import Callable, TextIO

from .fit import TRACE_COLUMNS, WindowFit
from .mixture import MixtureParams
from .windows import Window, format_month, parse_month

PARAMETER_COLUMNS = (
    "window_end", "alpha", "scale", "mu", "sigma", "objective", "converged",
    "evaluations", "generations", "sparse", "degenerate", "window_start", "n_events",
)
WINDOW_COLUMNS = (
    "window_end", "start", "end", "cutoff", "n_events", "delta_max", "a_max",
    "sparse", "degenerate", "delta_fix", "distribution",
)


class MissingArtifact(FileNotFoundError):
    def __init__(self, path: Path, producer: str):
        super().__init__(f"{path} not found; produce it with `delaycorrect {producer}`")
        self.path = path
        self.producer = producer


def require(path: Path, producer: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(path, producer)
    return path


class ArtifactWriter:
    """Writes files atomically under ``root`` and can remove everything it wrote."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.written: list[Path] = []

    def write(self, relpath: str, fill: Callable[[TextIO], None]) -> Path:
        target = self.root / relpath
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fill(fh)
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        self.written.append(target)
        return target

    def write_json(self, relpath: str, payload) -> Path:
        return self.write(relpath, lambda fh: fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n"))

    def rollback(self) -> None:
        for path in reversed(self.written):
            path.unlink(missing_ok=True)
        self.written.clear()


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes")


def write_parameters(fits: list[WindowFit], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(PARAMETER_COLUMNS)
    for f in fits:
        w.writerow([
            f.label, *(repr(v) for v in f.theta.as_tuple()), repr(f.objective_value), int(f.converged),
            f.evaluations, f.generations, int(f.sparse), int(f.degenerate),
            f.window.start.isoformat(), f.window.n_events,
        ])


def read_parameters(source: TextIO, cutoff: dt.date | None = None) -> list[WindowFit]:
    fits = []
    for row in csv.DictReader(source):
        end_month = parse_month(row["window_end"])
        start = dt.date.fromisoformat(row["window_start"])
        window = Window(start, start, cutoff or start, end_month, int(row["n_events"]), _bool(row["sparse"]))
        theta = MixtureParams(float(row["alpha"]), float(row["scale"]), float(row["mu"]), float(row["sigma"]))
        fits.append(WindowFit(
            window, theta, float(row["objective"]), int(row["evaluations"]), _bool(row["converged"]),
            _bool(row["sparse"]), _bool(row["degenerate"]), int(row["generations"]),
        ))
    return fits


def write_trace(rows: list[tuple], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for gen, best, *theta in rows:
        w.writerow([gen, repr(float(best)), *(repr(float(v)) for v in theta)])


def write_window_index(rows: list[dict], sink: TextIO) -> None:
    w = csv.DictWriter(sink, fieldnames=WINDOW_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


def read_window_index(source: TextIO) -> list[dict]:
    return list(csv.DictReader(source))


def window_from_index(row: dict) -> Window:
    return Window(
        dt.date.fromisoformat(row["start"]),
        dt.date.fromisoformat(row["end"]),
        dt.date.fromisoformat(row["cutoff"]),
        parse_month(row["window_end"]),
        int(row["n_events"]),
        _bool(row["sparse"]),
    )

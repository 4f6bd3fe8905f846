"""Corrected and year-ahead-corrected monthly incident counts."""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .fit import WindowFit
from .ingest import EventSet
from .mixture import MixtureParams, renormalized_cdf
from .windows import Month, format_month, month_end, month_of

YEAR_DAYS = 365


class CorrectionError(ValueError):
    pass


def monthly_reported_counts(events: EventSet) -> dict[Month, int]:
    months = events.occurred_on.astype("datetime64[M]")
    uniq, counts = np.unique(months, return_counts=True)
    out = {}
    for m, c in zip(uniq, counts):
        d = m.astype("datetime64[D]").item()
        out[(d.year, d.month)] = int(c)
    return out


def month_age(month: Month, cutoff: dt.date, reference: str = "mid") -> int:
    """Days from the month's reference day (15th, or last day) to ``cutoff``."""
    if month > month_of(cutoff):
        raise CorrectionError(f"month {format_month(month)} lies after the cutoff {cutoff}")
    if reference == "mid":
        ref = dt.date(month[0], month[1], 15)
    elif reference == "end":
        ref = month_end(month)
    else:
        raise ValueError(f"unknown age reference {reference!r}")
    return (cutoff - min(ref, cutoff)).days


def _theta(fit: WindowFit | MixtureParams) -> MixtureParams:
    return fit.theta if isinstance(fit, WindowFit) else fit


def correction_factor(fit: WindowFit | MixtureParams, age: float) -> float:
    """Share of a month's incidents expected to be reported by the time they are ``age`` days old."""
    if age < 0:
        raise CorrectionError("age must be non-negative")
    return renormalized_cdf(_theta(fit), age)


def year_ahead_factor(fit: WindowFit | MixtureParams, age: float, year_days: int = YEAR_DAYS) -> float:
    if age < 0:
        raise CorrectionError("age must be non-negative")
    theta = _theta(fit)
    later = renormalized_cdf(theta, age + year_days)
    if later <= 0:
        raise CorrectionError(f"model CDF is zero at age {age + year_days}")
    return renormalized_cdf(theta, age) / later


@dataclass(frozen=True)
class CorrectedRow:
    month: Month
    reported: int
    age_days: int
    cdf: float
    corrected: float
    year_ahead_factor: float
    year_ahead: float
    window_end: str
    extrapolated: bool


CSV_COLUMNS = ("month", "reported", "age_days", "cdf", "corrected", "year_ahead_factor", "year_ahead", "window_end", "extrapolated")


@dataclass
class CorrectedSeries:
    rows: list[CorrectedRow]
    cutoff: dt.date

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def write_csv(self, sink: TextIO) -> None:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([
                format_month(r.month), r.reported, r.age_days, repr(r.cdf), repr(r.corrected),
                repr(r.year_ahead_factor), repr(r.year_ahead), r.window_end, int(r.extrapolated),
            ])


def _assign_fits(months: Sequence[Month], fits: Sequence[WindowFit]) -> list[tuple[WindowFit, bool]]:
    by_end = {f.window.end_month: f for f in fits}
    ends = sorted(by_end)
    out = []
    for m in months:
        if m in by_end:
            out.append((by_end[m], False))
        elif m < ends[0]:
            out.append((by_end[ends[0]], True))
        else:
            # gap (failed window) or beyond the last window: latest fit not after m
            prior = [e for e in ends if e <= m]
            out.append((by_end[prior[-1]], True))
    return out


def correct_series(
    counts: dict[Month, int],
    fits: Sequence[WindowFit],
    cutoff: dt.date,
    age_reference: str = "mid",
    year_days: int = YEAR_DAYS,
) -> CorrectedSeries:
    """Divide each month's reported count by the model CDF at the month's age.

    Month ``m`` uses the fit of the window ending at ``m``.  Months before the
    first window reuse the first fit, and months without their own window use
    the latest earlier fit; both are flagged ``extrapolated``.
    """
    if not fits:
        raise CorrectionError("no window fits available")
    months = sorted(counts)
    rows = []
    for m, (fit, extrapolated) in zip(months, _assign_fits(months, fits)):
        age = month_age(m, cutoff, age_reference)
        cdf = correction_factor(fit, age)
        if cdf <= 0:
            raise CorrectionError(f"correction factor is zero for month {format_month(m)} (age {age})")
        ya = year_ahead_factor(fit, age, year_days)
        reported = counts[m]
        rows.append(CorrectedRow(m, reported, age, cdf, reported / cdf, ya, reported / ya, fit.label, extrapolated))
    return CorrectedSeries(rows, cutoff)


def read_corrected_csv(source: TextIO) -> list[dict]:
    return list(csv.DictReader(source))

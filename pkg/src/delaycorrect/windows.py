"""Rolling occurrence windows and their age/delay histograms."""
from __future__ import annotations

import calendar
import csv
import datetime as dt
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .ingest import DataError, EventSet

Month = tuple[int, int]  # (year, month)


def parse_month(text: str) -> Month:
    y, m = text.strip().split("-")[:2]
    month = (int(y), int(m))
    if not 1 <= month[1] <= 12:
        raise ValueError(f"invalid month {text!r}")
    return month


def format_month(month: Month) -> str:
    return f"{month[0]:04d}-{month[1]:02d}"


def add_months(month: Month, k: int) -> Month:
    idx = month[0] * 12 + (month[1] - 1) + k
    return (idx // 12, idx % 12 + 1)


def month_of(day: dt.date) -> Month:
    return (day.year, day.month)


def month_start(month: Month) -> dt.date:
    return dt.date(month[0], month[1], 1)


def month_end(month: Month) -> dt.date:
    return dt.date(month[0], month[1], calendar.monthrange(*month)[1])


def months_between(first: Month, last: Month) -> list[Month]:
    n = (last[0] * 12 + last[1]) - (first[0] * 12 + first[1])
    return [add_months(first, k) for k in range(n + 1)]


def compute_age(occurred_on: dt.date, cutoff: dt.date) -> int:
    if occurred_on > cutoff:
        raise ValueError(f"occurrence {occurred_on} lies after cutoff {cutoff}")
    return (cutoff - occurred_on).days


@dataclass(frozen=True)
class Window:
    start: dt.date
    end: dt.date
    cutoff: dt.date
    end_month: Month
    n_events: int = 0
    sparse: bool = False

    @property
    def label(self) -> str:
        return format_month(self.end_month)


def enumerate_windows(
    events: EventSet,
    first_end: Month | None = None,
    last_end: Month | None = None,
    length_months: int = 24,
    step_months: int = 1,
    min_events: int = 100,
) -> list[Window]:
    """One window per ``step_months`` from ``first_end`` to ``last_end``.

    Defaults: the first window is the earliest one fully covered by data, the
    last one ends in the cutoff month.  A window ending in the cutoff month is
    capped at the cutoff day.
    """
    cutoff = events.cutoff
    cut_month = month_of(cutoff)
    if first_end is None:
        first_end = add_months(month_of(events.occurred_on.min().item()), length_months - 1)
    if last_end is None:
        last_end = cut_month
    if last_end > cut_month:
        raise ValueError(f"last window end {format_month(last_end)} is after the data cutoff {cutoff}")
    if first_end > last_end:
        raise ValueError(f"first window end {format_month(first_end)} is after last {format_month(last_end)}")

    occ = events.occurred_on
    out = []
    end_m = first_end
    while end_m <= last_end:
        start = month_start(add_months(end_m, -(length_months - 1)))
        end = min(month_end(end_m), cutoff)
        n = int(np.count_nonzero((occ >= np.datetime64(start)) & (occ <= np.datetime64(end))))
        out.append(Window(start, end, cutoff, end_m, n, n < min_events))
        end_m = add_months(end_m, step_months)
    return out


@dataclass
class DelayHistograms:
    """Counts of events by age (``h_age``) and by delay (``h_delay``), indexed by lag in days."""

    h_age: np.ndarray
    h_delay: np.ndarray

    def __post_init__(self):
        self.h_age = np.asarray(self.h_age, dtype=np.int64)
        self.h_delay = np.asarray(self.h_delay, dtype=np.int64)
        if self.h_age.sum() == 0:
            raise DataError("histograms are empty")
        if self.h_age.sum() != self.h_delay.sum():
            raise ValueError("age and delay histograms hold different event totals")
        if np.any(self.h_age < 0) or np.any(self.h_delay < 0):
            raise ValueError("negative histogram counts")
        if self.delta_max > self.a_max:
            raise ValueError(f"max delay {self.delta_max} exceeds max age {self.a_max}")

    @property
    def n_events(self) -> int:
        return int(self.h_age.sum())

    @property
    def a_max(self) -> int:
        return int(np.flatnonzero(self.h_age)[-1])

    @property
    def delta_max(self) -> int:
        return int(np.flatnonzero(self.h_delay)[-1])

    @classmethod
    def from_lags(cls, ages, delays) -> "DelayHistograms":
        ages = np.asarray(ages, dtype=np.int64)
        delays = np.asarray(delays, dtype=np.int64)
        if len(ages) == 0:
            raise DataError("no events to histogram")
        if np.any(ages < 0) or np.any(delays < 0):
            raise ValueError("negative lags")
        size = int(ages.max()) + 1
        return cls(np.bincount(ages, minlength=size), np.bincount(delays, minlength=size))

    @classmethod
    def from_counts(cls, h_age: dict[int, int], h_delay: dict[int, int]) -> "DelayHistograms":
        size = max(max(h_age, default=0), max(h_delay, default=0)) + 1
        a, d = np.zeros(size, np.int64), np.zeros(size, np.int64)
        for k, v in h_age.items():
            a[k] = v
        for k, v in h_delay.items():
            d[k] = v
        return cls(a, d)

    def write_csv(self, sink: TextIO) -> None:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["lag", "h_A", "h_delta"])
        size = max(len(self.h_age), len(self.h_delay))
        a = np.pad(self.h_age, (0, size - len(self.h_age)))
        d = np.pad(self.h_delay, (0, size - len(self.h_delay)))
        for lag in np.flatnonzero((a > 0) | (d > 0)):
            w.writerow([int(lag), int(a[lag]), int(d[lag])])

    @classmethod
    def read_csv(cls, source: TextIO) -> "DelayHistograms":
        h_age, h_delay = {}, {}
        for row in csv.DictReader(source):
            lag = int(row["lag"])
            h_age[lag] = int(row["h_A"])
            h_delay[lag] = int(row["h_delta"])
        return cls.from_counts(h_age, h_delay)


def select_window(events: EventSet, window: Window) -> EventSet:
    occ = events.occurred_on
    mask = (occ >= np.datetime64(window.start)) & (occ <= np.datetime64(window.end))
    if not mask.any():
        raise DataError(f"window ending {window.label} contains no events")
    return events.subset(mask)


def build_histograms(events: EventSet, window: Window) -> DelayHistograms:
    """Histograms of every event occurring inside ``window``, whenever it was reported.

    Ages are measured against the window's (global) cutoff.
    """
    sel = select_window(events, window)
    ages = (np.datetime64(window.cutoff) - sel.occurred_on).astype(np.int64)
    if np.any(ages < 0):
        raise DataError(f"window ending {window.label} has events after the cutoff")
    return DelayHistograms.from_lags(ages, sel.delays)

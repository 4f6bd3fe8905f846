"""Reading, validating and cleaning raw incident records."""
from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

logger = logging.getLogger(__name__)

DEDUP_WINDOW_DAYS = 7
DEFAULT_COLUMNS = {"entity_id": "entity_id", "occurred_on": "occurred_on", "reported_on": "reported_on"}


class DataError(Exception):
    """Input data cannot produce a usable event set."""


@dataclass(frozen=True)
class EventRecord:
    entity_id: str
    occurred_on: dt.date
    reported_on: dt.date

    def __post_init__(self):
        if self.reported_on < self.occurred_on:
            raise DataError(f"{self.entity_id}: reported_on {self.reported_on} precedes occurred_on {self.occurred_on}")

    @property
    def delay(self) -> int:
        return (self.reported_on - self.occurred_on).days


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    detail: str


class EventSet:
    """Columnar collection of incidents.

    Dates are held as ``datetime64[D]`` arrays. ``cutoff`` is always the latest
    report date in the set.
    """

    def __init__(self, entity_id, occurred_on, reported_on):
        self.entity_id = np.asarray(entity_id, dtype=object)
        self.occurred_on = np.asarray(occurred_on, dtype="datetime64[D]")
        self.reported_on = np.asarray(reported_on, dtype="datetime64[D]")
        n = len(self.entity_id)
        if not (len(self.occurred_on) == len(self.reported_on) == n):
            raise ValueError("column lengths differ")
        if n == 0:
            raise DataError("event set is empty")
        if np.any(self.reported_on < self.occurred_on):
            raise DataError("event set contains negative delays")

    @classmethod
    def from_records(cls, records: Iterable[EventRecord]) -> "EventSet":
        records = list(records)
        return cls(
            [r.entity_id for r in records],
            [r.occurred_on for r in records],
            [r.reported_on for r in records],
        )

    def __len__(self) -> int:
        return len(self.entity_id)

    def __iter__(self):
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> EventRecord:
        return EventRecord(self.entity_id[i], self.occurred_on[i].item(), self.reported_on[i].item())

    @property
    def cutoff(self) -> dt.date:
        return self.reported_on.max().item()

    @property
    def delays(self) -> np.ndarray:
        return (self.reported_on - self.occurred_on).astype(np.int64)

    def subset(self, mask) -> "EventSet":
        return EventSet(self.entity_id[mask], self.occurred_on[mask], self.reported_on[mask])

    def reported_by(self, cutoff: dt.date) -> "EventSet":
        """Events already reported on ``cutoff``; this is how a past snapshot looked."""
        return self.subset(self.reported_on <= np.datetime64(cutoff, "D"))

    def sorted(self) -> "EventSet":
        order = np.lexsort((self.reported_on, self.occurred_on, self.entity_id.astype(str)))
        return self.subset(order)


@dataclass
class ParseResult:
    events: EventSet
    rejects: list[Reject] = field(default_factory=list)
    n_missing_occurred: int = 0


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def parse_events(source: TextIO, columns: dict[str, str] | None = None, delimiter: str = ",") -> ParseResult:
    """Parse delimited text into an :class:`EventSet`.

    Rows without an occurrence date are dropped and counted. Malformed or
    inconsistent rows are collected as :class:`Reject` entries keyed by line
    number (the header is line 1).
    """
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    reader = csv.DictReader(source, delimiter=delimiter)
    missing = [c for c in cols.values() if reader.fieldnames is None or c not in reader.fieldnames]
    if missing:
        raise DataError(f"input is missing column(s): {', '.join(missing)}")

    ids, occ, rep = [], [], []
    rejects: list[Reject] = []
    n_missing = 0
    for line, row in enumerate(reader, start=2):
        entity = (row.get(cols["entity_id"]) or "").strip()
        occ_text = (row.get(cols["occurred_on"]) or "").strip()
        rep_text = (row.get(cols["reported_on"]) or "").strip()
        if not occ_text:
            n_missing += 1
            rejects.append(Reject(line, "missing_occurred", "occurrence date empty"))
            continue
        if not entity or not rep_text:
            rejects.append(Reject(line, "missing_field", "entity_id or reported_on empty"))
            continue
        try:
            o, r = _parse_date(occ_text), _parse_date(rep_text)
        except ValueError as exc:
            rejects.append(Reject(line, "bad_date", str(exc)))
            continue
        if r < o:
            rejects.append(Reject(line, "inconsistent", f"reported {r} before occurred {o}"))
            continue
        ids.append(entity)
        occ.append(o)
        rep.append(r)

    if not ids:
        raise DataError(f"no valid events ({len(rejects)} rows rejected)")
    if rejects:
        logger.info("rejected %d rows (%d missing occurrence date)", len(rejects), n_missing)
    return ParseResult(EventSet(ids, occ, rep), rejects, n_missing)


def write_events(events: EventSet, sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["entity_id", "occurred_on", "reported_on"])
    occ = events.occurred_on.astype(str)
    rep = events.reported_on.astype(str)
    for e, o, r in zip(events.entity_id, occ, rep):
        w.writerow([e, o, r])


def write_rejects(rejects: list[Reject], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["line", "reason", "detail"])
    for r in rejects:
        w.writerow([r.line, r.reason, r.detail])


def dedupe(events: EventSet) -> EventSet:
    """Collapse records of one entity that occurred within a week of each other.

    Records are walked in (entity, occurred_on, reported_on) order; a record is
    dropped when it lies within :data:`DEDUP_WINDOW_DAYS` of the last kept
    record of the same entity, so the earliest occurrence always survives.
    """
    ev = events.sorted()
    ids = ev.entity_id.astype(str)
    occ = ev.occurred_on.astype(np.int64)
    n = len(ev)
    same_prev = np.zeros(n, dtype=bool)
    same_prev[1:] = (ids[1:] == ids[:-1]) & (occ[1:] - occ[:-1] <= DEDUP_WINDOW_DAYS)
    keep = ~same_prev
    # only runs of near-duplicates need the sequential walk
    for head in np.flatnonzero(~same_prev[:-1] & same_prev[1:]) if n > 1 else []:
        anchor = occ[head]
        j = head + 1
        while j < n and same_prev[j]:
            if occ[j] - anchor > DEDUP_WINDOW_DAYS:
                keep[j] = True
                anchor = occ[j]
            j += 1
    return ev.subset(keep)


@dataclass
class Redistribution:
    events: EventSet
    moved: np.ndarray  # boolean mask over ``events`` marking relocated records
    excess_by_year: dict[int, int]


def redistribute_default_dates(events: EventSet, rng_seed: int) -> Redistribution:
    """Spread the January-1 excess of each year over the rest of that year.

    The baseline is the median daily count over the year's other days (within
    the observed date span).  Excess records are drawn at random and relocated
    to days after Jan 1 but no later than their own report date, with
    probability proportional to the existing daily counts.  A year whose other
    days carry no events falls back to a uniform spread.
    """
    rng = np.random.default_rng(rng_seed)
    occ = events.occurred_on.copy()
    rep = events.reported_on
    moved = np.zeros(len(events), dtype=bool)
    first, last = occ.min(), events.reported_on.max()
    years = occ.astype("datetime64[Y]").astype(int) + 1970
    excess_by_year: dict[int, int] = {}

    for year in np.unique(years):
        jan1 = np.datetime64(f"{year:04d}-01-01", "D")
        dec31 = np.datetime64(f"{year:04d}-12-31", "D")
        on_jan1 = np.flatnonzero(occ == jan1)
        if len(on_jan1) == 0:
            continue
        span_lo, span_hi = max(jan1 + 1, first), min(dec31, last)
        in_year = (years == year) & (occ != jan1)
        n_days = (dec31 - jan1).astype(int) + 1
        daily = np.bincount((occ[in_year] - jan1).astype(int), minlength=n_days).astype(float)
        lo_idx, hi_idx = int((span_lo - jan1).astype(int)), int((span_hi - jan1).astype(int))
        baseline = float(np.median(daily[lo_idx:hi_idx + 1])) if hi_idx >= lo_idx else 0.0
        excess = max(0, len(on_jan1) - int(round(baseline)))
        excess_by_year[int(year)] = excess
        if excess == 0:
            continue

        chosen = np.sort(rng.choice(on_jan1, size=excess, replace=False))
        weights = daily.copy()
        weights[0] = 0.0
        cum = np.cumsum(weights)
        limits = np.minimum((rep[chosen] - jan1).astype(int), n_days - 1)
        u = rng.random(excess)
        for k, (idx, lim) in enumerate(zip(chosen, limits)):
            if lim < 1:
                continue  # reported on Jan 1 itself: nowhere else to go
            if cum[lim] > 0:
                day = int(np.searchsorted(cum, u[k] * cum[lim], side="right"))
                day = min(max(day, 1), lim)
            else:
                day = 1 + int(u[k] * lim)
            occ[idx] = jan1 + day
            moved[idx] = True

    out = EventSet(events.entity_id, occ, events.reported_on)
    return Redistribution(out, moved, excess_by_year)

"""Synthetic incident streams with a known delay mixture.

Each month's events are drawn from their own generator seeded by
``(seed, month_index)``, so the output does not depend on evaluation order.
Continuous delays are rounded *up* to whole days: an event with delay
``x`` is visible at age ``a`` exactly when ``x <= a``, which makes the model CDF
at an integer age the true visible share.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import yaml

from .ingest import DataError, EventSet
from .mixture import MixtureParams, renormalized_cdf, sample_delays
from .windows import Month, add_months, format_month, month_end, month_start, parse_month


@dataclass(frozen=True)
class RateSpec:
    kind: str = "constant"  # constant | linear | piecewise
    start: float = 1000.0
    end: float | None = None
    # piecewise: (first month index, rate) breakpoints, step function
    steps: tuple[tuple[int, float], ...] = ()

    def __call__(self, k: int, n_months: int) -> float:
        if self.kind == "constant":
            r = self.start
        elif self.kind == "linear":
            end = self.start if self.end is None else self.end
            r = self.start + (end - self.start) * (k / max(n_months - 1, 1))
        elif self.kind == "piecewise":
            r = self.start
            for first, value in self.steps:
                if k >= first:
                    r = value
        else:
            raise ValueError(f"unknown rate kind {self.kind!r}")
        if r < 0:
            raise ValueError("rates must be non-negative")
        return r


@dataclass(frozen=True)
class ScenarioSpec:
    start: Month
    months: int
    truth: MixtureParams | tuple[MixtureParams, ...]
    rate: RateSpec = field(default_factory=RateSpec)
    cutoff: dt.date | None = None  # default: last day of the horizon
    seed: int = 0
    poisson: bool = True

    @property
    def end(self) -> Month:
        return add_months(self.start, self.months - 1)

    @property
    def effective_cutoff(self) -> dt.date:
        return self.cutoff or month_end(self.end)

    def truth_for(self, k: int) -> MixtureParams:
        if isinstance(self.truth, MixtureParams):
            return self.truth
        return self.truth[k]

    def __post_init__(self):
        if self.months <= 0:
            raise ValueError("months must be positive")
        if not isinstance(self.truth, MixtureParams) and len(self.truth) != self.months:
            raise ValueError("per-month truth must list one parameter set per month")
        if self.cutoff is not None and self.cutoff < month_start(self.start):
            raise ValueError("cutoff precedes the horizon")


@dataclass
class GroundTruth:
    spec: ScenarioSpec
    month_totals: dict[Month, int]
    entity_id: np.ndarray
    occurred_on: np.ndarray  # datetime64[D]
    reported_on: np.ndarray  # datetime64[D], may lie beyond the cutoff

    def observe(self, cutoff: dt.date) -> EventSet:
        """The event set as it would look on ``cutoff``."""
        mask = self.reported_on <= np.datetime64(cutoff, "D")
        if not mask.any():
            raise DataError(f"no events reported by {cutoff}")
        return EventSet(self.entity_id[mask], self.occurred_on[mask], self.reported_on[mask])

    def true_cdf(self, month: Month) -> Callable:
        k = (month[0] * 12 + month[1]) - (self.spec.start[0] * 12 + self.spec.start[1])
        theta = self.spec.truth_for(k)
        return lambda d: renormalized_cdf(theta, d)

    @property
    def delays(self) -> np.ndarray:
        return (self.reported_on - self.occurred_on).astype(np.int64)


def _month_events(spec: ScenarioSpec, k: int):
    rng = np.random.default_rng([spec.seed, k])
    rate = spec.rate(k, spec.months)
    n = int(rng.poisson(rate)) if spec.poisson else int(round(rate))
    month = add_months(spec.start, k)
    first = np.datetime64(month_start(month), "D")
    n_days = (month_end(month) - month_start(month)).days + 1
    occurred = first + rng.integers(0, n_days, size=n)
    delay = np.ceil(sample_delays(spec.truth_for(k), rng.random(n))).astype(np.int64)
    ids = np.array([f"syn{k:04d}-{i:07d}" for i in range(n)], dtype=object)
    return month, ids, occurred, occurred + delay


def generate_truth(spec: ScenarioSpec) -> GroundTruth:
    totals, ids, occ, rep = {}, [], [], []
    for k in range(spec.months):
        month, i, o, r = _month_events(spec, k)
        totals[month] = len(i)
        ids.append(i)
        occ.append(o)
        rep.append(r)
    return GroundTruth(
        spec,
        totals,
        np.concatenate(ids),
        np.concatenate(occ).astype("datetime64[D]"),
        np.concatenate(rep).astype("datetime64[D]"),
    )


def generate(spec: ScenarioSpec) -> tuple[EventSet, GroundTruth]:
    """Draw a scenario and right-truncate it at the spec's cutoff."""
    truth = generate_truth(spec)
    return truth.observe(spec.effective_cutoff), truth


def ks_distance(F1, F2, upper: int) -> float:
    """Largest absolute CDF gap over the integer lags ``0..upper``.

    Each CDF may be a callable on lag arrays or an array indexed by lag
    (held at 1 past its end).
    """
    lags = np.arange(upper + 1)

    def values(F):
        if callable(F):
            return np.asarray(F(lags), dtype=float)
        F = np.asarray(F, dtype=float)
        return np.where(lags < len(F), F[np.minimum(lags, len(F) - 1)], 1.0)

    return float(np.max(np.abs(values(F1) - values(F2))))


# -- scenario files ---------------------------------------------------------

def _params(d: dict) -> MixtureParams:
    return MixtureParams(float(d["alpha"]), float(d["scale"]), float(d["mu"]), float(d["sigma"]))


def _date(v) -> dt.date:
    return v if isinstance(v, dt.date) else dt.date.fromisoformat(str(v))


def spec_from_dict(d: dict) -> ScenarioSpec:
    rate = d.get("rate", {}) or {}
    steps = tuple((int(a), float(b)) for a, b in rate.get("steps", []))
    rate_spec = RateSpec(rate.get("kind", "constant"), float(rate.get("start", 1000.0)),
                         None if rate.get("end") is None else float(rate["end"]), steps)
    if "truth_by_month" in d:
        truth: MixtureParams | tuple = tuple(_params(p) for p in d["truth_by_month"])
    else:
        truth = _params(d["truth"])
    start = d["start"]
    start = parse_month(start if isinstance(start, str) else format_month((start.year, start.month)))
    return ScenarioSpec(
        start=start,
        months=int(d["months"]),
        truth=truth,
        rate=rate_spec,
        cutoff=_date(d["cutoff"]) if d.get("cutoff") else None,
        seed=int(d.get("seed", 0)),
        poisson=bool(d.get("poisson", True)),
    )


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return spec_from_dict(yaml.safe_load(fh))


def truth_rows(truth: GroundTruth) -> Sequence[tuple]:
    rows = []
    for k in range(truth.spec.months):
        month = add_months(truth.spec.start, k)
        theta = truth.spec.truth_for(k)
        rows.append((format_month(month), truth.month_totals[month], *theta.as_tuple()))
    return rows

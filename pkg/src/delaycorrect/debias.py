"""Debiased empirical delay distribution from right-truncated observations.

Recent events are only visible if their delay is short, so the raw delay
histogram under-represents long delays.  The estimate is built from the
longest delay downwards: when lag ``d`` is processed, the CDF is already known
at every lag above it, so the number of events of age ``a`` that *would*
eventually be reported can be estimated as ``h_age[a] / F[a]`` and used as the
exposure for delay ``d``::

    f[d] = h_delay[d] / sum_{a >= d} h_age[a] / F[a]
    F[d - 1] = F[d] - f[d]
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .windows import DelayHistograms

CDF_FLOOR = 1e-9
_CLAMP_SLACK = 1e-12


@dataclass
class DebiasedDistribution:
    f: np.ndarray  # probability mass per lag, lags 0..a_max
    F: np.ndarray  # cumulative probability per lag
    delta_max: int
    a_max: int
    degenerate: bool = False

    def cdf_at(self, delta) -> float | np.ndarray:
        return empirical_cdf_at(self, delta)

    def write_csv(self, sink: TextIO) -> None:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["lag", "f", "F", "degenerate_flag"])
        flag = int(self.degenerate)
        for lag in range(self.a_max + 1):
            w.writerow([lag, repr(float(self.f[lag])), repr(float(self.F[lag])), flag])

    @classmethod
    def read_csv(cls, source: TextIO) -> "DebiasedDistribution":
        rows = list(csv.DictReader(source))
        if not rows:
            raise ValueError("empty distribution file")
        lags = np.array([int(r["lag"]) for r in rows])
        if not np.array_equal(lags, np.arange(len(rows))):
            raise ValueError("distribution file must list every lag from 0")
        f = np.array([float(r["f"]) for r in rows])
        F = np.array([float(r["F"]) for r in rows])
        nz = np.flatnonzero(f)
        return cls(f, F, int(nz[-1]) if len(nz) else 0, len(rows) - 1, any(r["degenerate_flag"] == "1" for r in rows))


def compute_delay_distribution(h: DelayHistograms) -> DebiasedDistribution:
    a_max = h.a_max
    h_age = np.zeros(a_max + 1)
    h_delay = np.zeros(a_max + 1)
    h_age[: min(len(h.h_age), a_max + 1)] = h.h_age[: a_max + 1]
    h_delay[: min(len(h.h_delay), a_max + 1)] = h.h_delay[: a_max + 1]

    f = np.zeros(a_max + 1)
    F = np.ones(a_max + 1)
    degenerate = False
    underflow_pending = False
    denom = 0.0
    F_cur = 1.0  # F[d] for the lag being processed
    for d in range(a_max, -1, -1):
        F[d] = F_cur
        if h_age[d] > 0:
            if F_cur < CDF_FLOOR:
                underflow_pending = True
            denom += h_age[d] / max(F_cur, CDF_FLOOR)
        if h_delay[d] > 0:
            if underflow_pending:
                degenerate = True
            mass = h_delay[d] / denom
            if mass > F_cur:
                if mass - F_cur > _CLAMP_SLACK:
                    degenerate = True
                mass = F_cur
            f[d] = mass
            F_cur = F_cur - mass
    if not degenerate:
        # without clamping the masses sum to one exactly, so F vanishes below
        # the shortest observed delay; drop the subtraction round-off there
        F[: int(np.flatnonzero(h_delay)[0])] = 0.0
    return DebiasedDistribution(f, F, h.delta_max, a_max, degenerate)


def empirical_cdf_at(dist: DebiasedDistribution, delta):
    """Right-continuous step lookup of the debiased CDF; 1 beyond ``a_max``."""
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0):
        raise ValueError("lag must be non-negative")
    idx = np.floor(d).astype(np.int64)
    out = np.where(idx > dist.a_max, 1.0, dist.F[np.minimum(idx, dist.a_max)])
    return float(out) if np.ndim(delta) == 0 else out


def raw_delay_cdf(h: DelayHistograms) -> np.ndarray:
    """Naive CDF of the observed delays, biased towards short delays."""
    cdf = np.cumsum(h.h_delay[: h.a_max + 1]) / h.n_events
    return np.pad(cdf, (0, h.a_max + 1 - len(cdf)), constant_values=1.0)

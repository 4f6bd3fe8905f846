"""Year-ahead replay: correct at one cutoff, compare with what a year later shows.

A scenario is simulated once and observed at ``--cutoff`` and one year
(365 days) later.  The run at the first cutoff fits the rolling windows
ending in the last ``--months`` months, and its year-ahead corrected counts
are compared month by month with the reported counts of the later view.

    python scripts/run_year_ahead_replay.py --rate 20000 --seeds 1 2
"""
import argparse
import datetime as dt
import time

import numpy as np

from delaycorrect.correct import monthly_reported_counts
from delaycorrect.fit import fit_all_windows
from delaycorrect.mixture import MixtureParams
from delaycorrect.pipeline import PipelineConfig, correct_stage, debias_stage
from delaycorrect.synth import RateSpec, ScenarioSpec, generate_truth
from delaycorrect.windows import add_months, format_month, month_of


def replay(seed, rate, cutoff, months, truth):
    spec = ScenarioSpec((2014, 1), 48, truth, RateSpec("constant", rate), seed=seed)
    gt = generate_truth(spec)
    now = gt.observe(cutoff)
    later = monthly_reported_counts(gt.observe(cutoff + dt.timedelta(days=365)))
    first_end = format_month(add_months(month_of(cutoff), -(months - 1)))
    config = PipelineConfig(scenario="memory", first_end=first_end)
    results = debias_stage(now, config)
    run = fit_all_windows([(r.window, r.distribution) for r in results], int(now.delays.max()), config.optimizer)
    series = correct_stage(now, run.fits, config)
    return [(r.month, r.reported, r.year_ahead, later[r.month]) for r in series.rows[-months:]]


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[1])
    p.add_argument("--rate", type=float, default=20000.0, help="events per month")
    p.add_argument("--cutoff", default="2017-12-31")
    p.add_argument("--months", type=int, default=18)
    p.add_argument("--verbose", action="store_true", help="print every month")
    args = p.parse_args()
    truth = MixtureParams(0.15, 60.0, 400.0, 80.0)
    cutoff = dt.date.fromisoformat(args.cutoff)

    for seed in args.seeds:
        t0 = time.perf_counter()
        rows = replay(seed, args.rate, cutoff, args.months, truth)
        errors = np.array([ya / seen - 1 for _, _, ya, seen in rows])
        if args.verbose:
            for (month, reported, ya, seen), e in zip(rows, errors):
                print(f"  {format_month(month)} reported {reported:>7} year-ahead {ya:>9.1f} later {seen:>7} ({e:+.3f})")
        print(f"seed {seed}: worst |error| {np.max(np.abs(errors)):.3f}, mean error {errors.mean():+.4f}, "
              f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()

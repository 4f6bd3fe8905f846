"""A small (mu/mu_w, lambda)-CMA-ES with box constraints handled by resampling.

Selection uses objective ranks only; objective values enter solely through
the stagnation test and the reported best.  All randomness comes from one
``numpy.random.Generator`` so a seed fixes the whole trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class AllCandidatesInvalid(RuntimeError):
    """Every candidate of too many consecutive generations was infeasible."""


@dataclass
class Generation:
    index: int
    candidates: np.ndarray  # (lam, n)
    values: np.ndarray  # (lam,), inf for infeasible candidates
    best_x: np.ndarray  # best-so-far point
    best_f: float


@dataclass
class CMAESResult:
    x: np.ndarray
    f: float
    evaluations: int
    generations: int
    converged: bool
    history: list[float] = field(default_factory=list)  # best-so-far per generation


def default_popsize(n: int) -> int:
    return 4 + int(3 * np.log(n))


def minimize(
    func: Callable[[np.ndarray], float],
    x0,
    lower,
    upper,
    sigma0: float = 0.3,
    seed: int = 0,
    max_generations: int = 500,
    tol_fun: float = 1e-10,
    stall_generations: int = 30,
    max_invalid_generations: int = 10,
    max_resample: int = 100,
    popsize: int | None = None,
    callback: Callable[[Generation], None] | None = None,
) -> CMAESResult:
    """Minimise ``func`` over the box ``[lower, upper]``.

    Samples falling outside the box are redrawn up to ``max_resample`` times;
    a candidate that is still outside, or whose value is not finite, counts as
    infeasible.  The run stops as converged once the per-generation best
    value has moved by less than ``tol_fun`` across ``stall_generations``
    generations, and stops unconverged at ``max_generations``.  The returned
    point is the best evaluated one, ``x0`` included.
    """
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = len(x0)
    if not np.all((lower <= x0) & (x0 <= upper)):
        raise ValueError("initial point lies outside the bounds")
    rng = np.random.default_rng(seed)

    lam = popsize or default_popsize(n)
    mu = lam // 2
    w = np.log(lam / 2 + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / np.sum(w**2)

    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, np.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))

    mean = x0.copy()
    sigma = float(sigma0)
    C = np.eye(n)
    B, D = np.eye(n), np.ones(n)
    pc, ps = np.zeros(n), np.zeros(n)

    # the start point competes for "best" so a warm start is never lost
    f0 = float(func(x0))
    best_x, best_f = x0.copy(), f0 if np.isfinite(f0) else np.inf
    history: list[float] = []
    gen_best: list[float] = []
    evaluations = 1
    invalid_streak = 0
    converged = False
    gen = 0
    while gen < max_generations:
        gen += 1
        z = rng.standard_normal((lam, n))
        y = z @ (B * D).T
        x = mean + sigma * y
        feasible = np.all((x >= lower) & (x <= upper), axis=1)
        for k in range(lam):
            tries = 0
            while not feasible[k] and tries < max_resample:
                z[k] = rng.standard_normal(n)
                y[k] = (B * D) @ z[k]
                x[k] = mean + sigma * y[k]
                feasible[k] = np.all((x[k] >= lower) & (x[k] <= upper))
                tries += 1

        values = np.full(lam, np.inf)
        for k in np.flatnonzero(feasible):
            v = float(func(x[k]))
            evaluations += 1
            values[k] = v if np.isfinite(v) else np.inf

        if not np.any(np.isfinite(values)):
            invalid_streak += 1
            if invalid_streak >= max_invalid_generations:
                raise AllCandidatesInvalid(f"no feasible candidate in {invalid_streak} consecutive generations")
            history.append(best_f)
            continue
        invalid_streak = 0

        order = np.argsort(values, kind="stable")
        gen_best.append(float(values[order[0]]))
        if values[order[0]] < best_f:
            best_f = float(values[order[0]])
            best_x = x[order[0]].copy()
        history.append(best_f)
        if callback is not None:
            callback(Generation(gen, x.copy(), values.copy(), best_x.copy(), best_f))

        sel = order[:mu]
        y_w = w @ y[sel]
        mean = mean + sigma * y_w

        inv_sqrt_C = B @ np.diag(1 / D) @ B.T
        ps = (1 - cs) * ps + np.sqrt(cs * (2 - cs) * mueff) * (inv_sqrt_C @ y_w)
        h_sig = np.linalg.norm(ps) / np.sqrt(1 - (1 - cs) ** (2 * gen)) / chi_n < 1.4 + 2 / (n + 1)
        pc = (1 - cc) * pc + h_sig * np.sqrt(cc * (2 - cc) * mueff) * y_w
        rank_mu = (y[sel].T * w) @ y[sel]
        C = (
            (1 - c1 - cmu) * C
            + c1 * (np.outer(pc, pc) + (1 - h_sig) * cc * (2 - cc) * C)
            + cmu * rank_mu
        )
        sigma *= np.exp((cs / damps) * (np.linalg.norm(ps) / chi_n - 1))

        C = (C + C.T) / 2
        evals, B = np.linalg.eigh(C)
        D = np.sqrt(np.maximum(evals, 1e-300))

        recent = gen_best[-(stall_generations + 1):]
        if len(recent) > stall_generations and max(recent) - min(recent) < tol_fun:
            converged = True
            break

    return CMAESResult(best_x, best_f, evaluations, gen, converged, history)

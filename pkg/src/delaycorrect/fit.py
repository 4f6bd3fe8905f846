"""Per-window mixture fits against the debiased empirical delay CDF.

The score of a parameter vector is::

    w * mean((log10 F'(d) - log10 F_emp(d))^2)          d in [d_lo, delta_max]
    + (1 - w) * mean((log10 S_prev(d) - log10 S(d))^2)  d in (delta_max, delta_fix]
    + F_normal(0)^2 + S(horizon)^2

with ``w = delta_max / delta_fix``.  ``F'`` is the mixture truncated to
``[0, delta_max]``, ``S`` the survival function of the ``[0, inf)`` mixture and
``S_prev`` that of the previous window's optimum (the middle term vanishes
for the first window).  The last two terms keep normal mass off negative
delays and off delays beyond ten years.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logit, ndtr

from . import cmaes
from .debias import DebiasedDistribution
from .mixture import MixtureParams, ParameterError, survival, truncated_cdf
from .windows import Window

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-300
TEN_YEARS = 3650


class FitError(RuntimeError):
    def __init__(self, message: str, window: str | None = None):
        super().__init__(f"window {window}: {message}" if window else message)
        self.window = window


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    max_generations: int = 500
    sigma0: float = 0.3
    tol_fun: float = 1e-10
    stall_generations: int = 30
    max_invalid_generations: int = 10
    popsize: int | None = None
    alpha_bounds: tuple[float, float] = (0.01, 0.99)
    scale_bounds: tuple[float, float] = (1.0, 2000.0)
    sigma_bounds: tuple[float, float] = (1.0, 2000.0)
    # mu bounds as multiples of delta_fix
    mu_bounds: tuple[float, float] = (-1.0, 2.0)
    penalty_horizon: int = TEN_YEARS
    # optional extra multipliers on the fit and coupling terms
    term_weights: tuple[float, float] = (1.0, 1.0)


@dataclass
class ObjectiveContext:
    empirical: DebiasedDistribution
    delta_max: int
    delta_fix: int
    theta_prev: MixtureParams | None = None
    penalty_horizon: int = TEN_YEARS
    term_weights: tuple[float, float] = (1.0, 1.0)
    fit_grid: np.ndarray = field(init=False, repr=False)
    log_empirical: np.ndarray = field(init=False, repr=False)
    tail_grid: np.ndarray = field(init=False, repr=False)
    log_prev_survival: np.ndarray | None = field(init=False, repr=False)

    def __post_init__(self):
        if self.delta_max > self.delta_fix:
            raise ValueError(f"delta_max {self.delta_max} exceeds delta_fix {self.delta_fix}")
        if self.delta_fix <= 0:
            raise ValueError("delta_fix must be positive")
        lags = np.arange(self.delta_max + 1)
        emp = self.empirical.F[: self.delta_max + 1]
        keep = emp > 0
        if not keep.any():
            raise FitError("empirical CDF is zero on the whole fit range")
        self.fit_grid = lags[keep].astype(float)
        self.log_empirical = np.log10(emp[keep])
        self.tail_grid = np.arange(self.delta_max + 1, self.delta_fix + 1, dtype=float)
        if self.theta_prev is not None and len(self.tail_grid):
            self.log_prev_survival = np.log10(np.maximum(survival(self.theta_prev, self.tail_grid), LOG_FLOOR))
        else:
            self.log_prev_survival = None

    @property
    def weights(self) -> tuple[float, float]:
        w = self.delta_max / self.delta_fix
        return w, 1.0 - w

    @classmethod
    def for_distribution(
        cls,
        dist: DebiasedDistribution,
        delta_fix: int,
        theta_prev: MixtureParams | None = None,
        config: OptimizerConfig | None = None,
    ) -> "ObjectiveContext":
        config = config or OptimizerConfig()
        return cls(dist, dist.delta_max, delta_fix, theta_prev, config.penalty_horizon, config.term_weights)


@dataclass(frozen=True)
class ObjectiveTerms:
    fit: float
    coupling: float
    negative_penalty: float
    tail_penalty: float
    w_fit: float
    w_coupling: float

    @property
    def total(self) -> float:
        return self.w_fit * self.fit + self.w_coupling * self.coupling + self.negative_penalty + self.tail_penalty


def objective_terms(theta: MixtureParams, ctx: ObjectiveContext) -> ObjectiveTerms:
    model = np.maximum(truncated_cdf(theta, ctx.fit_grid, ctx.delta_max), LOG_FLOOR)
    t1 = float(np.mean((np.log10(model) - ctx.log_empirical) ** 2))
    if ctx.log_prev_survival is None:
        t2 = 0.0
    else:
        s = np.maximum(survival(theta, ctx.tail_grid), LOG_FLOOR)
        t2 = float(np.mean((ctx.log_prev_survival - np.log10(s)) ** 2))
    neg = float(ndtr(-theta.mu / theta.sigma)) ** 2
    tail = float(survival(theta, ctx.penalty_horizon)) ** 2
    w1, w2 = ctx.weights
    x1, x2 = ctx.term_weights
    return ObjectiveTerms(t1, t2, neg, tail, w1 * x1, w2 * x2)


def objective(theta: MixtureParams, ctx: ObjectiveContext) -> float:
    return objective_terms(theta, ctx).total


# -- search space -----------------------------------------------------------

def to_search_space(theta: MixtureParams, delta_fix: float) -> np.ndarray:
    return np.array([logit(theta.alpha), np.log(theta.scale), theta.mu / delta_fix, np.log(theta.sigma)])


def from_search_space(x, delta_fix: float) -> MixtureParams:
    return MixtureParams(float(expit(x[0])), float(np.exp(x[1])), float(x[2] * delta_fix), float(np.exp(x[3])))


def search_bounds(config: OptimizerConfig) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([logit(config.alpha_bounds[0]), np.log(config.scale_bounds[0]), config.mu_bounds[0], np.log(config.sigma_bounds[0])])
    hi = np.array([logit(config.alpha_bounds[1]), np.log(config.scale_bounds[1]), config.mu_bounds[1], np.log(config.sigma_bounds[1])])
    return lo, hi


def clip_params(theta: MixtureParams, delta_fix: float, config: OptimizerConfig) -> MixtureParams:
    lo, hi = search_bounds(config)
    return from_search_space(np.clip(to_search_space(theta, delta_fix), lo, hi), delta_fix)


def initial_guess(dist: DebiasedDistribution, delta_fix: float, config: OptimizerConfig | None = None) -> MixtureParams:
    """Moment-based start: the short-delay head seeds the exponential, the rest the normal."""
    config = config or OptimizerConfig()
    lags = np.arange(len(dist.f), dtype=float)
    f = dist.f
    head = lags < 90
    alpha = float(f[lags < 30].sum())
    alpha = min(max(alpha, config.alpha_bounds[0]), config.alpha_bounds[1])
    scale = float(np.average(lags[head], weights=f[head])) if f[head].sum() > 0 else 30.0
    if f[~head].sum() > 0:
        mu = float(np.average(lags[~head], weights=f[~head]))
        sigma = float(np.sqrt(np.average((lags[~head] - mu) ** 2, weights=f[~head])))
    else:
        mu, sigma = dist.delta_max / 2.0, max(dist.delta_max / 4.0, 1.0)
    theta = MixtureParams(alpha, max(scale, config.scale_bounds[0]), mu, max(sigma, config.sigma_bounds[0]))
    return clip_params(theta, delta_fix, config)


# -- fitting ----------------------------------------------------------------

@dataclass
class WindowFit:
    window: Window | None
    theta: MixtureParams
    objective_value: float
    evaluations: int
    converged: bool
    sparse: bool = False
    degenerate: bool = False
    generations: int = 0
    trace: list[tuple] | None = None

    @property
    def label(self) -> str:
        return self.window.label if self.window is not None else ""


TRACE_COLUMNS = ("generation", "best_objective", "alpha", "scale", "mu", "sigma")


def window_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def minimize(
    ctx: ObjectiveContext,
    init: MixtureParams,
    config: OptimizerConfig | None = None,
    window: Window | None = None,
    seed: int | None = None,
    trace: bool = False,
    on_evaluation: Callable[[MixtureParams, ObjectiveTerms], None] | None = None,
) -> WindowFit:
    """Fit one window with CMA-ES in the (logit alpha, log scale, mu/delta_fix, log sigma) space."""
    config = config or OptimizerConfig()
    lo, hi = search_bounds(config)
    x0 = to_search_space(init, ctx.delta_fix)
    if not np.all((lo <= x0) & (x0 <= hi)):
        raise ValueError(f"initial parameters {init} are outside the search bounds")

    def score(x):
        try:
            theta = from_search_space(x, ctx.delta_fix)
            terms = objective_terms(theta, ctx)
        except ParameterError:
            return np.inf
        if on_evaluation is not None:
            on_evaluation(theta, terms)
        return terms.total

    rows: list[tuple] = []

    def record(g: cmaes.Generation):
        rows.append((g.index, g.best_f, *from_search_space(g.best_x, ctx.delta_fix).as_tuple()))

    label = window.label if window is not None else None
    try:
        res = cmaes.minimize(
            score, x0, lo, hi,
            sigma0=config.sigma0,
            seed=config.seed if seed is None else seed,
            max_generations=config.max_generations,
            tol_fun=config.tol_fun,
            stall_generations=config.stall_generations,
            max_invalid_generations=config.max_invalid_generations,
            popsize=config.popsize,
            callback=record if trace else None,
        )
    except cmaes.AllCandidatesInvalid as exc:
        raise FitError(str(exc), label) from exc
    if not np.isfinite(res.f):
        raise FitError("no finite objective value found", label)

    return WindowFit(
        window=window,
        theta=from_search_space(res.x, ctx.delta_fix),
        objective_value=res.f,
        evaluations=res.evaluations,
        converged=res.converged,
        sparse=bool(window.sparse) if window is not None else False,
        degenerate=ctx.empirical.degenerate,
        generations=res.generations,
        trace=rows if trace else None,
    )


@dataclass
class FitRun:
    fits: list[WindowFit]
    failures: list[FitError]


def fit_all_windows(
    distributions: Sequence[tuple[Window, DebiasedDistribution]],
    delta_fix: int,
    config: OptimizerConfig | None = None,
    trace: bool = False,
    on_evaluation: Callable[[Window, MixtureParams, ObjectiveTerms], None] | None = None,
) -> FitRun:
    """Fit windows in chronological order, each coupled to the last successful fit.

    The previous optimum both enters the coupling term and seeds the search;
    the first window starts from :func:`initial_guess`.  ``on_evaluation``, if
    given, sees every objective evaluation together with its window.
    """
    config = config or OptimizerConfig()
    fits: list[WindowFit] = []
    failures: list[FitError] = []
    prev: MixtureParams | None = None
    for k, (window, dist) in enumerate(distributions):
        try:
            ctx = ObjectiveContext.for_distribution(dist, delta_fix, prev, config)
            init = initial_guess(dist, delta_fix, config) if prev is None else clip_params(prev, delta_fix, config)
            hook = None if on_evaluation is None else (lambda th, t, w=window: on_evaluation(w, th, t))
            fit = minimize(ctx, init, config, window=window, seed=window_seed(config.seed, k), trace=trace,
                           on_evaluation=hook)
        except FitError as exc:
            exc.window = exc.window or window.label
            logger.warning("fit failed for window %s: %s", window.label, exc)
            failures.append(exc)
            continue
        logger.info(
            "window %s: alpha=%.4f scale=%.2f mu=%.2f sigma=%.2f obj=%.3g (%d evals)",
            window.label, *fit.theta.as_tuple(), fit.objective_value, fit.evaluations,
        )
        fits.append(fit)
        prev = fit.theta
    return FitRun(fits, failures)

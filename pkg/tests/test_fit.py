import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaycorrect.debias import DebiasedDistribution
from delaycorrect.fit import (
    FitError, ObjectiveContext, OptimizerConfig, fit_all_windows, from_search_space, initial_guess, minimize,
    objective, objective_terms, search_bounds, to_search_space,
)
from delaycorrect.mixture import MixtureParams, normal_cdf, survival, truncated_cdf
from delaycorrect.windows import Window

TRUTH = MixtureParams(0.15, 60.0, 400.0, 80.0)
# mpmath: Phi(-4)^2
NEG_PENALTY_MU_MINUS_200 = 0.99993665851940131941


def exact_distribution(theta, delta_max, a_max=None):
    """Debiased distribution that equals the truncated model on every lag."""
    a_max = a_max or delta_max
    F = np.ones(a_max + 1)
    F[: delta_max + 1] = truncated_cdf(theta, np.arange(delta_max + 1, dtype=float), delta_max)
    f = np.diff(F, prepend=0.0)
    return DebiasedDistribution(f, F, delta_max, a_max)


def window(label_month):
    end = dt.date(*label_month, 28)
    return Window(dt.date(2000, 1, 1), end, end, label_month, 1000)


def test_objective_vanishes_at_exact_fit():
    theta = MixtureParams(0.5, 100.0, 300.0, 50.0)
    ctx = ObjectiveContext(exact_distribution(theta, 900), 900, 900)
    terms = objective_terms(theta, ctx)
    assert terms.fit < 1e-25
    assert terms.coupling == 0.0
    assert terms.total == pytest.approx(normal_cdf(0.0, 300.0, 50.0) ** 2 + survival(theta, 3650.0) ** 2, abs=1e-25)
    assert terms.total < 1e-17


def test_identical_previous_fit_gives_zero_coupling():
    ctx = ObjectiveContext(exact_distribution(TRUTH, 600), 600, 1500, theta_prev=TRUTH)
    assert objective_terms(TRUTH, ctx).coupling == 0.0
    assert objective_terms(MixtureParams(0.2, 60.0, 400.0, 80.0), ctx).coupling > 0


def test_negative_mean_is_penalised():
    theta = MixtureParams(0.5, 100.0, -200.0, 50.0)
    ctx = ObjectiveContext(exact_distribution(TRUTH, 900), 900, 900)
    terms = objective_terms(theta, ctx)
    assert terms.negative_penalty == pytest.approx(NEG_PENALTY_MU_MINUS_200, abs=1e-12)


def test_weights_follow_delay_ratio():
    ctx = ObjectiveContext(exact_distribution(TRUTH, 600), 600, 1500, theta_prev=TRUTH)
    assert ctx.weights == (0.4, 0.6)
    t = objective_terms(MixtureParams(0.3, 30.0, 500.0, 100.0), ctx)
    assert t.total == pytest.approx(0.4 * t.fit + 0.6 * t.coupling + t.negative_penalty + t.tail_penalty)


def test_extra_term_weights_hook():
    plain = ObjectiveContext(exact_distribution(TRUTH, 600), 600, 1500, theta_prev=TRUTH)
    tilted = ObjectiveContext(exact_distribution(TRUTH, 600), 600, 1500, theta_prev=TRUTH, term_weights=(2.0, 0.5))
    theta = MixtureParams(0.3, 30.0, 500.0, 100.0)
    a, b = objective_terms(theta, plain), objective_terms(theta, tilted)
    assert b.w_fit == pytest.approx(2 * a.w_fit) and b.w_coupling == pytest.approx(0.5 * a.w_coupling)


def test_zero_lags_are_left_out_of_the_fit_grid():
    dist = exact_distribution(TRUTH, 900)
    dist.F[:5] = 0.0
    ctx = ObjectiveContext(dist, 900, 900)
    assert ctx.fit_grid[0] == 5.0


def test_empty_fit_grid_is_an_error():
    dist = DebiasedDistribution(np.zeros(11), np.r_[np.zeros(10), 1.0], 5, 10)
    with pytest.raises(FitError):
        ObjectiveContext(dist, 5, 10)


def test_delta_max_beyond_delta_fix_is_rejected():
    with pytest.raises(ValueError):
        ObjectiveContext(exact_distribution(TRUTH, 900), 900, 800)


def test_search_space_round_trip():
    x = to_search_space(TRUTH, 1200)
    np.testing.assert_allclose(x[2], 400 / 1200)
    back = from_search_space(x, 1200)
    np.testing.assert_allclose(back.as_tuple(), TRUTH.as_tuple(), rtol=1e-12)
    lo, hi = search_bounds(OptimizerConfig())
    np.testing.assert_allclose(from_search_space(lo, 1000).as_tuple(), (0.01, 1.0, -1000.0, 1.0))
    np.testing.assert_allclose(from_search_space(hi, 1000).as_tuple(), (0.99, 2000.0, 2000.0, 2000.0))


def test_initial_guess_from_moments():
    init = initial_guess(exact_distribution(TRUTH, 900), 900)
    # mass under 30 days: the exponential's share there plus a sliver of the normal
    assert init.alpha == pytest.approx(0.15 * (1 - np.exp(-0.5)), rel=0.05)
    assert 20 < init.scale < 60
    assert init.mu == pytest.approx(400, rel=0.05)
    assert init.sigma == pytest.approx(80, rel=0.2)


def test_recovers_parameters_from_exact_distribution():
    dist = exact_distribution(TRUTH, 900)
    ctx = ObjectiveContext.for_distribution(dist, 900)
    fit = minimize(ctx, initial_guess(dist, 900), OptimizerConfig(seed=4))
    # both sit at the penalty floor Phi(-5)^2 ~ 8e-14; tol_fun resolves no finer
    assert fit.objective_value <= objective(TRUTH, ctx) + 1e-12
    assert fit.theta.alpha == pytest.approx(0.15, abs=0.005)
    assert fit.theta.scale == pytest.approx(60, rel=0.02)
    assert fit.theta.mu == pytest.approx(400, rel=0.01)
    assert fit.theta.sigma == pytest.approx(80, rel=0.02)


def test_same_seed_same_fit():
    dist = exact_distribution(TRUTH, 700)
    ctx = ObjectiveContext.for_distribution(dist, 900)
    cfg = OptimizerConfig(seed=9, max_generations=60)
    a = minimize(ctx, initial_guess(dist, 900), cfg, trace=True)
    b = minimize(ctx, initial_guess(dist, 900), cfg, trace=True)
    assert a.theta == b.theta and a.objective_value == b.objective_value
    assert a.trace == b.trace
    assert len(a.trace) == a.generations
    assert not a.converged or a.generations < 60


def test_trace_rows_are_monotone():
    dist = exact_distribution(TRUTH, 900)
    ctx = ObjectiveContext.for_distribution(dist, 900)
    fit = minimize(ctx, initial_guess(dist, 900), OptimizerConfig(max_generations=80), trace=True)
    best = [row[1] for row in fit.trace]
    assert best == sorted(best, reverse=True)
    assert fit.trace[-1][1] == fit.objective_value


def test_coupling_anchors_duplicate_window():
    dist = exact_distribution(TRUTH, 800, a_max=900)
    run = fit_all_windows([(window((2018, 1)), dist), (window((2018, 2)), dist)], 900, OptimizerConfig(seed=2))
    assert not run.failures
    first, second = run.fits
    np.testing.assert_allclose(second.theta.as_tuple(), first.theta.as_tuple(), rtol=0.02)


def test_failed_window_is_skipped_and_coupling_continues():
    good = exact_distribution(TRUTH, 800, a_max=900)
    bad = DebiasedDistribution(np.zeros(901), np.r_[np.zeros(900), 1.0], 800, 900)
    run = fit_all_windows(
        [(window((2018, 1)), good), (window((2018, 2)), bad), (window((2018, 3)), good)], 900,
        OptimizerConfig(seed=2, max_generations=40),
    )
    assert [f.label for f in run.fits] == ["2018-01", "2018-03"]
    assert [e.window for e in run.failures] == ["2018-02"]


thetas = st.builds(
    MixtureParams,
    alpha=st.floats(0.01, 0.99),
    scale=st.floats(1.0, 2000.0),
    mu=st.floats(-1500.0, 3000.0),
    sigma=st.floats(1.0, 2000.0),
)
CTX = ObjectiveContext(exact_distribution(TRUTH, 700, a_max=1500), 700, 1500, theta_prev=TRUTH)


@settings(max_examples=300, deadline=None)
@given(thetas, st.integers(1, 1500))
def test_objective_nonnegative_and_weights_sum_to_one(theta, delta_max):
    assert objective(theta, CTX) >= 0
    ctx = ObjectiveContext(exact_distribution(TRUTH, delta_max, a_max=1500), delta_max, 1500)
    w1, w2 = ctx.weights
    assert w1 + w2 == pytest.approx(1.0, abs=1e-15)
    assert 0 <= w2 <= 1

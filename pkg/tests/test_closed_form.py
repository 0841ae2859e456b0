import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abstain import closed_form as cf
from abstain.core import ConfigError, GameConfig

from conftest import near, quad_loss, quad_manipulation_no, quad_manipulation_with


def cfg(K, c=0.3):
    return GameConfig.from_k(K, c=c)


# -- best responses -----------------------------------------------------------

@pytest.mark.parametrize("x,t,K,x_hat", [
    (0.7, 1.0, 0.5, 1.0),
    (1.2, 1.0, 0.5, 1.2),
    (1.2, 1.0, 3.0, 1.2),
    (-1.9, 1.0, 2.0, -1.9),
    (-0.5, 1.0, 2.0, 1.0),
])
def test_best_response_examples(x, t, K, x_hat):
    br = cf.best_response(x, t, cfg(K))
    assert br.x_hat == x_hat
    assert br.manipulated == (x_hat != x)


def test_best_response_endpoint_is_truthful():
    # x = t - K: manipulation would leave utility exactly 0, same as staying
    br = cf.best_response(-0.5, 0.5, cfg(1.0))
    assert br.x_hat == -0.5 and not br.manipulated


def test_best_response_domain_floor():
    # K large: the interval starts at -2 but excludes it
    assert cf.best_response(-2.0, 1.0, cfg(5.0)).x_hat == -2.0
    assert cf.best_response(-1.999, 1.0, cfg(5.0)).x_hat == 1.0


@pytest.mark.parametrize("x", [-2.5, 2.01])
def test_best_response_rejects_outside_domain(x):
    with pytest.raises(ValueError):
        cf.best_response(x, 1.0, cfg(1.0))
    with pytest.raises(ValueError):
        cf.best_response_no_abstention(x, cfg(1.0))


@pytest.mark.parametrize("x,K,x_hat", [(-0.5, 1.0, 0.0), (0.3, 1.0, 0.3), (-1.5, 1.0, -1.5),
                                       (-1.0, 1.0, 0.0)])
def test_best_response_no_abstention(x, K, x_hat):
    assert cf.best_response_no_abstention(x, cfg(K)).x_hat == x_hat


def _utility(z, x, t, gamma):
    return float(z >= 0 and abs(z) >= t) - gamma * (z - x) ** 2


def test_best_response_dominates_candidates():
    rng = np.random.default_rng(12345)
    for _ in range(10_000):
        x = rng.uniform(-2, 2)
        t = rng.uniform(0, 2)
        K = rng.uniform(0.05, 6)
        config = cfg(K)
        br = cf.best_response(x, t, config)
        assert br.utility == pytest.approx(_utility(br.x_hat, x, t, config.gamma), abs=1e-12)
        for z in (x, t, 0.0):
            assert br.utility >= _utility(z, x, t, config.gamma) - 1e-12


@settings(max_examples=300)
@given(st.floats(-2, 2), st.floats(0, 2), st.floats(0.05, 6))
def test_best_response_never_worse_than_truth(x, t, K):
    br = cf.best_response(x, t, cfg(K))
    assert br.utility >= _utility(x, x, t, cfg(K).gamma) - 1e-12


@settings(max_examples=200)
@given(st.floats(0, 2), st.floats(0.05, 6))
def test_vectorized_response_matches_scalar(t, K):
    xs = np.linspace(-2, 2, 401)
    config = cfg(K)
    vec = cf.respond(xs, t, config.K)
    assert all(v == cf.best_response(float(x), t, config).x_hat for x, v in zip(xs, vec))


# -- analytic loss --------------------------------------------------------------

@pytest.mark.parametrize("t,K,c,expected", [
    (1.0, 1.0, 0.3, 0.075),
    (0.75, 1.0, 0.3, 0.1),
    (0.0, 1.0, 0.3, 0.25),
    (1.0, 4.0, 0.3, 0.5),
])
def test_analytic_loss_examples(t, K, c, expected):
    assert near(cf.analytic_loss(t, cfg(K, c)), expected)


def test_analytic_loss_capped_case_matches_quadrature():
    # The (K - T)/4 piece would give 0.75 here; direct integration gives 1/2.
    config = cfg(4.0, 0.3)
    assert near(quad_loss(1.0, config), 0.5, 1e-9)
    assert near(cf.analytic_loss(1.0, config), quad_loss(1.0, config), 1e-9)


@pytest.mark.parametrize("K", [0.5, 1.0, 1.7, 2.0, 2.6, 3.3, 4.0, 5.0])
@pytest.mark.parametrize("c", [0.0, 0.2, 0.5, 0.8, 1.0])
def test_analytic_loss_matches_quadrature(K, c):
    config = cfg(K, c)
    for t in np.linspace(0, 2, 17):
        assert near(cf.analytic_loss(float(t), config), quad_loss(float(t), config), 1e-9)


def _piecewise_loss(t, K, c):
    """Slope pieces of the piecewise loss, on the ranges where each is valid."""
    if K > 4:
        return 0.5
    if K < 2:
        if t <= K / 2:
            return (K - t) / 4
        if t < K:
            return (t * (2 * c - 1) + K * (1 - c)) / 4
        return c * (2 * t - K) / 4
    if t <= K / 2:
        return (K - t) / 4 if t >= K - 2 else None  # excluded: exceeds the 1/2 cap
    return (t * (2 * c - 1) + K * (1 - c)) / 4


@pytest.mark.parametrize("K", [0.5, 1.0, 1.9, 2.0, 2.5, 3.5, 4.0, 4.5])
@pytest.mark.parametrize("c", [0.1, 0.5, 0.9])
def test_unified_formula_equals_piecewise_losss(K, c):
    config = cfg(K, c)
    for t in np.linspace(0, 2, 41):
        expected = _piecewise_loss(float(t), config.K, c)
        if expected is not None:
            assert near(cf.analytic_loss(float(t), config), expected)


def test_analytic_loss_rejects_noise_and_range():
    with pytest.raises(ConfigError):
        cf.analytic_loss(1.0, GameConfig(gamma=1.0, c=0.3, sigma=0.5))
    with pytest.raises(ValueError):
        cf.analytic_loss(2.5, cfg(1.0))
    with pytest.raises(ConfigError):
        cf.analytic_loss(1.0, GameConfig(gamma=1.0, domain_lo=-1.0, domain_hi=1.0))


def test_nonstrategic_curve_pieces():
    config = cfg(1.0, 0.4)
    assert cf.analytic_loss_nonstrategic(0.0, config) == 0.0
    assert near(cf.analytic_loss_nonstrategic(1.5, config), 0.4 * 3.0 / 4.0)


# -- optimal thresholds ----------------------------------------------------------

@pytest.mark.parametrize("K,c,lo,hi,loss", [
    (1.5, 0.3, 1.5, 1.5, 0.1125),
    (3.0, 0.3, 2.0, 2.0, 0.325),
    (2.0, 0.7, 1.0, 1.0, 0.25),
    (1.0, 0.5, 0.5, 1.0, 0.125),
    (5.0, 0.3, 0.0, 2.0, 0.5),
])
def test_optimal_threshold_examples(K, c, lo, hi, loss):
    opt = cf.optimal_threshold(cfg(K, c))
    assert near(opt.lo, lo) and near(opt.hi, hi) and near(opt.loss, loss)
    assert opt.canonical == opt.lo


def _dense_configs():
    for K in np.round(np.arange(1, 61) * 0.1, 10):
        for c in np.round(np.arange(21) * 0.05, 10):
            yield float(K), float(c)


def test_optimal_threshold_is_argmin_on_dense_grid():
    ts = np.round(np.arange(2001) * 0.001, 10)
    for K, c in _dense_configs():
        config = cfg(K, c)
        opt = cf.optimal_threshold(config)
        assert 0.0 <= opt.lo <= opt.canonical <= opt.hi <= 2.0
        assert 0.0 <= opt.loss <= 0.5
        assert near(cf.analytic_loss(opt.canonical, config), opt.loss)
        assert min(cf.analytic_loss(float(t), config) for t in ts) >= opt.loss - 1e-12


def test_optimal_threshold_flat_over_interval():
    for K, c in _dense_configs():
        if c != 0.5 and K <= 4:
            continue
        config = cfg(K, c)
        opt = cf.optimal_threshold(config)
        for t in np.linspace(opt.lo, opt.hi, 25):
            assert near(cf.analytic_loss(float(t), config), opt.loss)


def test_abstention_never_hurts_and_zero_band_is_no_abstention():
    for K, c in _dense_configs():
        config = cfg(K, c)
        base = cf.no_abstention_loss(config)
        assert cf.optimal_threshold(config).loss <= base + 1e-15
        assert cf.analytic_loss(0.0, config) == base


@pytest.mark.parametrize("K,expected", [(1.0, 0.25), (3.0, 0.5), (2.0, 0.5), (1e-9, 2.5e-10)])
def test_no_abstention_loss(K, expected):
    assert near(cf.no_abstention_loss(cfg(K)), expected)


# -- expected manipulation -------------------------------------------------------

@pytest.mark.parametrize("K,expected", [(1.0, 0.125), (2.0, 0.5), (3.0, 0.5)])
def test_manipulation_no_abstention(K, expected):
    rep = cf.expected_manipulation_no_abstention(cfg(K))
    assert near(rep.expected_manipulation, expected)
    assert near(quad_manipulation_no(cfg(K)), expected, 1e-6)


@pytest.mark.parametrize("K,c,t_choice,expected", [
    (1.5, 0.3, None, 0.0),
    (3.0, 0.3, None, 0.625),
    (2.0, 0.7, None, 0.375),
    (5.0, 0.3, 0.0, 0.5),
    (5.0, 0.3, 2.0, 1.5),
])
def test_manipulation_with_abstention(K, c, t_choice, expected):
    rep = cf.expected_manipulation_with_abstention(cfg(K, c), t_choice)
    assert near(rep.expected_manipulation, expected)


def test_manipulation_with_abstention_needs_choice_when_k_large():
    with pytest.raises(ConfigError):
        cf.expected_manipulation_with_abstention(cfg(5.0))
    with pytest.raises(ConfigError):
        cf.expected_manipulation_with_abstention(cfg(5.0), t_choice=2.5)
    # ignored when K <= 4
    rep = cf.expected_manipulation_with_abstention(cfg(1.0, 0.3), t_choice=1.9)
    assert rep.t == 1.0


def test_manipulation_zero_exactly_in_low_k_cheap_regime():
    for K, c in _dense_configs():
        config = cfg(K, c)
        if config.K > 4:
            continue
        rep = cf.expected_manipulation_with_abstention(config)
        assert rep.expected_manipulation >= 0
        assert (rep.expected_manipulation == 0.0) == (rep.regime is cf.Regime.LOW_K_CHEAP)


@pytest.mark.parametrize("K", [0.3, 1.0, 1.99, 2.0, 2.01, 2.5, math.sqrt(16 / 3), 2.7,
                               math.sqrt(8), 3.4, 4.0])
@pytest.mark.parametrize("c", [0.1, 0.5, 0.9])
def test_manipulation_matches_quadrature(K, c):
    config = cfg(K, c)
    rep = cf.expected_manipulation_with_abstention(config)
    assert abs(rep.expected_manipulation - quad_manipulation_with(config, rep.t)) <= 1e-6
    assert abs(cf.expected_manipulation_no_abstention(config).expected_manipulation
               - quad_manipulation_no(config)) <= 1e-6


@pytest.mark.parametrize("t", [0.0, 0.4, 1.3, 2.0])
def test_manipulation_high_k_matches_quadrature(t):
    config = cfg(6.0, 0.3)
    rep = cf.expected_manipulation_with_abstention(config, t)
    assert abs(rep.expected_manipulation - quad_manipulation_with(config, t)) <= 1e-6


def test_manipulation_continuity_at_k2():
    lo = cf.expected_manipulation_with_abstention(cfg(2.0 - 1e-9, 0.3)).expected_manipulation
    hi = cf.expected_manipulation_with_abstention(cfg(2.0 + 1e-9, 0.3)).expected_manipulation
    assert abs(lo - hi) < 1e-8
    lo = cf.expected_manipulation_no_abstention(cfg(2.0 - 1e-9)).expected_manipulation
    hi = cf.expected_manipulation_no_abstention(cfg(2.0 + 1e-9)).expected_manipulation
    assert abs(lo - hi) < 1e-8


@pytest.mark.parametrize("t", [0.0, 0.5, 1.2, 2.0])
@pytest.mark.parametrize("K", [0.5, 1.5, 3.0, 5.0])
def test_curve_manipulation_columns_match_quadrature(t, K):
    config = cfg(K)
    assert near(cf.manipulation_mass_unqualified(t, config), quad_manipulation_with(config, t), 1e-9)


# -- comparison -------------------------------------------------------------------

@pytest.mark.parametrize("K,c,t_choice,expected", [
    (1.0, 0.7, None, cf.Ordering.ABSTENTION_LOWER),
    (1.0, 0.3, None, cf.Ordering.ABSTENTION_LOWER),
    (math.sqrt(8), 0.3, None, cf.Ordering.EQUAL),
    (2.5, 0.3, None, cf.Ordering.ABSTENTION_LOWER),
    (3.5, 0.3, None, cf.Ordering.ABSTENTION_HIGHER),
    (math.sqrt(16 / 3), 0.8, None, cf.Ordering.EQUAL),
    (3.0, 0.7, None, cf.Ordering.ABSTENTION_HIGHER),
    (2.2, 0.7, None, cf.Ordering.ABSTENTION_LOWER),
    (5.0, 0.3, 0.0, cf.Ordering.EQUAL),
    (5.0, 0.3, 0.1, cf.Ordering.ABSTENTION_HIGHER),
])
def test_manipulation_comparison(K, c, t_choice, expected):
    assert cf.manipulation_comparison(cfg(K, c), t_choice) is expected


def test_comparison_matches_sign_of_difference_away_from_crossovers():
    for K, c in _dense_configs():
        config = cfg(K, c)
        t_choice = 1.0 if config.K > 4 else None
        diff = (cf.expected_manipulation_with_abstention(config, t_choice).expected_manipulation
                - cf.expected_manipulation_no_abstention(config).expected_manipulation)
        if abs(diff) < 1e-9:
            continue
        expected = cf.Ordering.ABSTENTION_LOWER if diff < 0 else cf.Ordering.ABSTENTION_HIGHER
        assert cf.manipulation_comparison(config, t_choice) is expected

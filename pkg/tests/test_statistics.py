"""Tests for correlation estimation and rate fitting."""
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats

from qmlab.environment import Environment, ParameterLaw
from qmlab.errors import ArgumentError, InsufficientSignalError
from qmlab.orbits import evolve_ensemble
from qmlab.statistics import (
    CorrelationSeries,
    FitModel,
    Observable,
    ObservableKind,
    attractor_sample,
    bound_ratio,
    default_burnin,
    estimate_correlations,
    expansion_tail,
    fit_curve,
    fit_rate,
    prefactor_distribution,
    quenched_correlation,
    signal_horizon,
    theory_exponent,
)


@pytest.fixture
def solenoid_env():
    return Environment(seed=5, law=ParameterLaw.uniform(0.45, 0.55))


def series(values, stderr):
    values = np.asarray(values, dtype=np.float64)
    return CorrelationSeries(lags=np.arange(len(values)), values=values, stderr=np.asarray(stderr, dtype=np.float64))


class TestObservable:
    @pytest.mark.parametrize("text,kind", [
        ("const", ObservableKind.CONSTANT),
        ("cos", ObservableKind.SMOOTH_COS),
        ("holder_cusp:0.3", ObservableKind.HOLDER_CUSP),
        ("fiber_y", ObservableKind.FIBER_Y),
        ("indicator_halfcircle", ObservableKind.INDICATOR_HALFCIRCLE),
    ])
    def test_parses(self, text, kind):
        assert Observable.parse(text).kind is kind

    def test_rejects_unknown_name(self):
        with pytest.raises(ValueError, match="Unknown observable"):
            Observable.parse("banana")

    def test_values_are_bounded(self):
        states = np.column_stack([np.linspace(0, 0.999, 200), np.linspace(-0.5, 0.5, 200)])
        for text in ("cos", "holder_cusp:0.3", "fiber_y", "indicator_halfcircle", "const"):
            assert np.all(np.abs(Observable.parse(text)(states)) <= 1.0)

    def test_fiber_needs_two_coordinates(self):
        with pytest.raises(ArgumentError):
            Observable.parse("fiber_y")(np.zeros((3, 1)))


class TestEstimateCorrelations:
    def test_constant_psi_gives_exact_zero(self):
        rng = np.random.default_rng(1)
        phi = rng.uniform(-1, 1, size=(5, 1000))
        result = estimate_correlations(phi, np.ones(1000))
        assert np.all(result.values == 0.0)

    def test_variance_at_lag_zero(self):
        rng = np.random.default_rng(2)
        psi = rng.uniform(-1, 1, size=5000)
        result = estimate_correlations(psi[None, :], psi)
        assert result.values[0] >= 0.0
        assert result.values[0] == pytest.approx(psi.var(), rel=1e-9)

    def test_invariant_under_sample_permutation(self):
        rng = np.random.default_rng(3)
        psi = rng.uniform(-1, 1, size=3000)
        phi = np.stack([psi * 0.5**n + rng.normal(0, 0.1, 3000) for n in range(4)])
        order = rng.permutation(3000)
        assert np.array_equal(
            estimate_correlations(phi, psi).values,
            estimate_correlations(phi[:, order], psi[order]).values,
        )


class TestQuenchedCorrelation:
    def test_constant_observable_is_exactly_null(self, solenoid_env):
        result = quenched_correlation(
            solenoid_env, "solenoid", Observable.parse("cos"), Observable.parse("const"), 10, N=500
        )
        assert np.all(result.values == 0.0)
        assert result.meta.psi == "constant"

    def test_default_burnin(self, solenoid_env):
        result = quenched_correlation(
            solenoid_env, "solenoid", Observable.parse("cos"), Observable.parse("cos"), 10, N=200
        )
        assert result.meta.burnin == default_burnin(10) == 100

    def test_bounded_by_one(self, solenoid_env):
        result = quenched_correlation(
            solenoid_env, "solenoid", Observable.parse("cos"), Observable.parse("cos"), 20, m=50, N=2000
        )
        assert np.all(np.abs(result.values) <= 1.0 + 1e-12)
        assert result.values[0] > 0.0

    def test_independent_of_chunks_and_workers(self, solenoid_env):
        phi, psi = Observable.parse("cos"), Observable.parse("holder_cusp:0.5")
        whole = quenched_correlation(solenoid_env, "solenoid", phi, psi, 8, m=30, N=1000)
        with ThreadPoolExecutor(max_workers=3) as executor:
            split = quenched_correlation(solenoid_env, "solenoid", phi, psi, 8, m=30, N=1000,
                                         executor=executor, chunk=97)
        assert np.array_equal(whole.values, split.values)
        assert np.array_equal(whole.stderr, split.stderr)

    def test_stderr_shrinks_with_sample_size(self, solenoid_env):
        phi, psi = Observable.parse("cos"), Observable.parse("cos")
        small = quenched_correlation(solenoid_env, "solenoid", phi, psi, 30, m=60, N=20000)
        large = quenched_correlation(solenoid_env, "solenoid", phi, psi, 30, m=60, N=40000)
        assert large.stderr.mean() / small.stderr.mean() == pytest.approx(1 / np.sqrt(2), abs=0.15)

    def test_rejects_zero_lags(self, solenoid_env):
        with pytest.raises(ArgumentError):
            quenched_correlation(solenoid_env, "solenoid", Observable.parse("cos"), Observable.parse("cos"), 0)


class TestAttractorSample:
    def test_solenoid_fibers_shrink_onto_attractor(self, solenoid_env):
        points = attractor_sample(solenoid_env, "solenoid", 30, 2000)
        radius = np.hypot(points[:, 1], points[:, 2])
        assert np.all(radius <= 0.5 / 0.9 + 1e-12)
        assert np.all(radius >= 0.5 - 0.1 / 0.9 - 1e-12)

    def test_cat_map_preserves_lebesgue(self, cat_env):
        points = attractor_sample(cat_env, "perturbed_cat", 10, 5000)
        for axis in (0, 1):
            assert stats.kstest(points[:, axis], "uniform").pvalue > 1e-3

    def test_shifted_sample_matches_pushed_sample(self, solenoid_env):
        shifted = attractor_sample(solenoid_env.shift(1), "solenoid", 100, 20000)
        pushed = evolve_ensemble(solenoid_env, "solenoid", attractor_sample(solenoid_env, "solenoid", 100, 20000), 0, 1)
        for axis in (0, 1):
            assert stats.wasserstein_distance(shifted[:, axis], pushed[:, axis]) < 0.01

    def test_rejects_empty_sample(self, solenoid_env):
        with pytest.raises(ArgumentError):
            attractor_sample(solenoid_env, "solenoid", 10, 0)


class TestFits:
    def test_polynomial_fit(self):
        n = np.arange(5, 200)
        fit = fit_curve(n, 3.0 * n**-2.0, FitModel.POLYNOMIAL)
        assert fit.exponent == pytest.approx(-2.0)
        assert fit.prefactor == pytest.approx(3.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.window == (5, 199)

    def test_exponential_fit(self):
        n = np.arange(1, 60)
        fit = fit_curve(n, np.exp(-0.3 * n), FitModel.EXPONENTIAL)
        assert fit.exponent == pytest.approx(-0.3)
        assert fit.theta == 1.0

    def test_stretched_fit_profiles_theta(self):
        n = np.arange(1, 400)
        fit = fit_curve(n, np.exp(-0.5 * np.sqrt(n)), FitModel.STRETCHED)
        assert fit.theta == 0.5
        assert fit.exponent == pytest.approx(-0.5)

    def test_signal_horizon(self):
        s = series([1.0, 0.5, 0.3, 0.01, 0.2], [0.01] * 5)
        assert signal_horizon(s) == 2

    def test_fit_rate_on_significant_lags(self):
        n = np.arange(0, 31, dtype=np.float64)
        values = np.r_[1.0, n[1:] ** -1.5]
        fit = fit_rate(series(values, np.full(31, 1e-6)), "polynomial")
        assert fit.exponent == pytest.approx(-1.5)
        assert fit.window == (1, 30)

    def test_fit_rate_respects_window(self):
        n = np.arange(0, 41, dtype=np.float64)
        values = np.r_[1.0, np.exp(-0.2 * n[1:])]
        fit = fit_rate(series(values, np.full(41, 1e-9)), FitModel.EXPONENTIAL, window=(10, 30))
        assert fit.window == (10, 30)
        assert fit.exponent == pytest.approx(-0.2)

    def test_noise_raises_insufficient_signal(self):
        with pytest.raises(InsufficientSignalError) as info:
            fit_rate(series(np.zeros(30), np.ones(30)))
        assert info.value.signal_horizon == 0

    def test_short_signal_reports_its_horizon(self):
        values = np.r_[1.0, 0.5**np.arange(1, 30)]
        stderr = np.full(30, 1e-3)
        with pytest.raises(InsufficientSignalError) as info:
            fit_rate(series(values, stderr))
        assert 0 < info.value.signal_horizon < 10


class TestTheory:
    def test_tail_limited_regime(self):
        assert theory_exponent(0.5, 1.0) == pytest.approx(-1.0)

    def test_regularity_limited_regime(self):
        assert theory_exponent(0.5, 0.3) == pytest.approx(-0.6)

    def test_bound_ratio_is_finite(self, solenoid_env):
        result = quenched_correlation(
            solenoid_env, "solenoid", Observable.parse("cos"), Observable.parse("cos"), 20, m=50, N=1000
        )
        ratio = bound_ratio(result, solenoid_env, 0.45, 1.0)
        assert 0.0 <= ratio < np.inf

    def test_bound_ratio_needs_enough_lags(self, solenoid_env):
        with pytest.raises(ArgumentError):
            bound_ratio(series([1.0, 0.5, 0.2], [0.1] * 3), solenoid_env, 0.5, 1.0)

    def test_prefactors_skip_seeds_without_signal(self):
        prefactors = prefactor_distribution(
            [1, 2], ParameterLaw.uniform(0.45, 0.55), "solenoid",
            Observable.parse("cos"), Observable.parse("const"), 15, 300,
        )
        assert prefactors == []


class TestExpansionTail:
    def test_cat_map_expands_at_once(self, cat_env):
        grid = np.column_stack([np.linspace(0.05, 0.95, 20), np.linspace(0.1, 0.9, 20)])
        tail = expansion_tail(cat_env, "perturbed_cat", grid, 20, 0.5)
        assert len(tail) == 20
        assert all(fraction == 0.0 for _, fraction in tail)

    def test_fraction_is_nonincreasing(self):
        env = Environment(seed=2, law=ParameterLaw.uniform(0.4, 0.6))
        tail = expansion_tail(env, "intermittent_circle", np.linspace(0.001, 0.999, 200), 300, 0.1)
        fractions = [f for _, f in tail]
        assert all(b <= a for a, b in zip(fractions, fractions[1:]))
        assert all(0.0 <= f <= 1.0 for f in fractions)

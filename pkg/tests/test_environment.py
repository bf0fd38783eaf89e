"""Tests for seeded environments and parameter laws."""
import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from qmlab.environment import Environment, LawKind, ParameterLaw, Stream, bits_to_unit, counter_bits


class TestParameterLaw:
    def test_parses_dirac(self):
        law = ParameterLaw.parse("dirac:0.5")
        assert law.kind is LawKind.DIRAC
        assert law.value == 0.5
        assert law.is_deterministic

    def test_parses_uniform(self):
        law = ParameterLaw.parse("uniform:0.4,0.6")
        assert law.support_bounds == (0.4, 0.6)
        assert law.mean == pytest.approx(0.5)
        assert not law.is_deterministic

    def test_parses_finite(self):
        law = ParameterLaw.parse("finite:0.4@0.25,0.6@0.75")
        assert law.values == (0.4, 0.6)
        assert law.weights == (0.25, 0.75)
        assert law.mean == pytest.approx(0.55)

    def test_describe_round_trips(self):
        for text in ("dirac:0.5", "uniform:0.4,0.6", "finite:0.4@0.25,0.6@0.75"):
            assert ParameterLaw.parse(text).describe() == text

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="Unknown law kind"):
            ParameterLaw.parse("gamma:1")

    def test_rejects_weights_not_summing_to_one(self):
        with pytest.raises(ValidationError):
            ParameterLaw.finite([0.4, 0.6], [0.5, 0.6])

    def test_rejects_reversed_interval(self):
        with pytest.raises(ValidationError):
            ParameterLaw.uniform(0.6, 0.4)

    def test_finite_sample_respects_weights(self):
        law = ParameterLaw.finite([0.4, 0.6], [0.25, 0.75])
        u = (np.arange(10000) + 0.5) / 10000
        draws = law.sample(u)
        assert set(np.unique(draws)) == {0.4, 0.6}
        assert np.mean(draws == 0.4) == pytest.approx(0.25, abs=1e-3)

    def test_zero_weight_value_is_outside_support(self):
        law = ParameterLaw.finite([0.2, 0.5], [0.0, 1.0])
        assert law.is_deterministic
        assert law.support_bounds == (0.5, 0.5)


class TestCounterStreams:
    def test_uniforms_lie_in_unit_interval(self):
        u = bits_to_unit(counter_bits(123, Stream.PARAMETER, 0, np.arange(-1000, 1000)))
        assert np.all((u >= 0.0) & (u < 1.0))

    def test_streams_are_distinct(self):
        a = bits_to_unit(counter_bits(5, Stream.ATTRACTOR, np.arange(100)))
        b = bits_to_unit(counter_bits(5, Stream.TOWER, np.arange(100)))
        assert not np.array_equal(a, b)

    def test_seeds_are_distinct(self):
        a = bits_to_unit(counter_bits(1, Stream.PARAMETER, 0, np.arange(100)))
        b = bits_to_unit(counter_bits(2, Stream.PARAMETER, 0, np.arange(100)))
        assert not np.array_equal(a, b)

    def test_accepts_full_seed_range(self):
        env = Environment(seed=2**64 - 1, law=ParameterLaw.uniform(0.4, 0.6))
        assert 0.4 <= env.param_at(0) <= 0.6


class TestEnvironment:
    def test_dirac_law_is_constant(self, lsv_env):
        assert all(lsv_env.param_at(k) == 0.5 for k in (-7, 0, 3, 10**6))

    def test_param_at_is_deterministic(self):
        env = Environment(seed=1, law=ParameterLaw.uniform(0.4, 0.6))
        assert env.param_at(0) == env.param_at(0)
        assert Environment(seed=1, law=env.law).param_at(0) == env.param_at(0)

    def test_empirical_mean(self):
        env = Environment(seed=1, law=ParameterLaw.uniform(0.4, 0.6))
        window = env.param_window(-10**4, 2 * 10**4 + 1)
        assert 0.498 <= window.mean() <= 0.502

    def test_window_follows_the_law(self):
        law = ParameterLaw.uniform(0.4, 0.6)
        window = Environment(seed=1, law=law).param_window(0, 20000)[:, 0]
        assert stats.kstest(window, law.cdf).pvalue > 1e-3

    def test_window_matches_pointwise_draws(self, random_env):
        window = random_env.param_window(-5, 20)[:, 0]
        assert [random_env.param_at(k) for k in range(-5, 15)] == window.tolist()

    def test_shift_by_zero_is_identity(self, random_env):
        assert random_env.shift(0) == random_env

    def test_shift_is_a_group_action(self, random_env):
        back = random_env.shift(3).shift(-3)
        assert back.param_window(-10, 30).tolist() == random_env.param_window(-10, 30).tolist()

    def test_shifted_negative_index(self, random_env):
        assert random_env.shift(5).param_at(-5) == random_env.param_at(0)

    @pytest.mark.parametrize("j,k", [(1, 2), (-40, 17), (1000, -999), (12345, 0), (-3, -3)])
    def test_shift_compatibility(self, random_env, j, k):
        assert random_env.shift(j).param_at(k) == random_env.param_at(j + k)

    def test_components_are_independent(self, cat_env):
        window = cat_env.param_window(0, 1000, components=2)
        assert window.shape == (1000, 2)
        assert abs(np.corrcoef(window[:, 0], window[:, 1])[0, 1]) < 0.1

    def test_first_component_matches_single_component_window(self, cat_env):
        both = cat_env.param_window(0, 50, components=2)
        assert both[:, 0].tolist() == cat_env.param_window(0, 50)[:, 0].tolist()

    def test_uniforms_ignore_offset(self, random_env):
        index = np.arange(10)
        assert random_env.shift(4).uniforms(Stream.ATTRACTOR, index).tolist() == \
            random_env.uniforms(Stream.ATTRACTOR, index).tolist()

    def test_rejects_negative_seed(self):
        with pytest.raises(ValidationError):
            Environment(seed=-1, law=ParameterLaw.dirac(0.5))

    def test_is_hashable(self, random_env):
        assert hash(random_env) == hash(Environment(seed=3, law=ParameterLaw.uniform(0.3, 0.7)))

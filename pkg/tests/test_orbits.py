"""Tests for the random composition engine."""
import numpy as np
import pytest

from qmlab.environment import Environment, ParameterLaw
from qmlab.errors import DomainError, RangeError
from qmlab.maps import CAT_EXPANSION, eval_T
from qmlab.orbits import (
    OrbitMode,
    OrbitRequest,
    cocycle_trace,
    evolve_ensemble,
    fold_orbit,
    iter_orbit,
    run_orbit,
)


def request(env, family="intermittent_circle", start=(0.3,), length=10, mode=OrbitMode.FORWARD):
    return OrbitRequest(env=env, family=family, start=start, length=length, mode=mode)


class TestRunOrbit:
    def test_empty_composition(self, random_env):
        orbit = run_orbit(request(random_env, length=0))
        assert orbit.tolist() == [[0.3]]

    def test_dirac_law_is_deterministic_iteration(self, lsv_env):
        orbit = run_orbit(request(lsv_env, length=20))[:, 0]
        x = 0.3
        for value in orbit:
            assert value == x
            x = eval_T(0.5, x)

    def test_forward_orbit_uses_consecutive_parameters(self, random_env):
        orbit = run_orbit(request(random_env, length=5))[:, 0]
        x = 0.3
        for k in range(5):
            x = eval_T(random_env.param_at(k), x)
            assert orbit[k + 1] == x

    def test_pullback_orbit_uses_negative_indices(self, random_env):
        orbit = run_orbit(request(random_env, length=5, mode=OrbitMode.PULLBACK))[:, 0]
        forward = run_orbit(request(random_env.shift(-5), length=5))[:, 0]
        assert orbit.tolist() == forward.tolist()

    def test_blocks_concatenate_to_the_orbit(self, random_env):
        blocks = list(iter_orbit(random_env, "intermittent_circle", (0.3,), 25, block=7))
        assert sum(len(b) for b in blocks) == 26
        assert np.concatenate(blocks).tolist() == run_orbit(request(random_env, length=25)).tolist()

    def test_fold_counts_states(self, random_env):
        count = fold_orbit(random_env, "solenoid", (0.2, 0.0, 0.0), 100, lambda acc, b: acc + len(b), 0)
        assert count == 101

    def test_solenoid_orbit_stays_in_torus(self, random_env):
        orbit = run_orbit(request(random_env, family="solenoid", start=(0.2, 0.5, 0.5), length=200))
        assert np.all(orbit[1:, 1] ** 2 + orbit[1:, 2] ** 2 <= 0.61**2)

    def test_rejects_bad_start(self, random_env):
        with pytest.raises(RangeError):
            run_orbit(request(random_env, start=(1.2,)))

    def test_rejects_out_of_domain_parameters(self):
        env = Environment(seed=1, law=ParameterLaw.uniform(0.5, 1.5))
        with pytest.raises(DomainError):
            run_orbit(request(env, length=50))


class TestCocycleTrace:
    def test_cat_map_trace_is_constant(self, cat_env):
        trace = cocycle_trace(request(cat_env, family="perturbed_cat", start=(0.1, 0.2), length=50))
        assert np.allclose(trace.log_inverse_expansion, -np.log(CAT_EXPANSION))
        assert trace.birkhoff_average == pytest.approx(-0.9624236501, abs=1e-9)

    def test_neutral_fixed_point_trace_is_zero(self, lsv_env):
        trace = cocycle_trace(request(lsv_env, start=(0.0,), length=30))
        assert np.all(trace.log_inverse_expansion == 0.0)

    def test_random_orbit_is_nonuniformly_expanding(self):
        env = Environment(seed=1, law=ParameterLaw.uniform(0.4, 0.6))
        trace = cocycle_trace(request(env, start=(0.3,), length=10**5))
        assert trace.birkhoff_average < -0.1

    def test_empty_trace(self, random_env):
        trace = cocycle_trace(request(random_env, length=0))
        assert len(trace) == 0
        assert trace.birkhoff_average == 0.0

    @pytest.mark.parametrize("m,n", [(1, 1), (7, 13), (50, 50), (23, 4)])
    def test_cocycle_additivity(self, random_env, m, n):
        whole = cocycle_trace(request(random_env, length=m + n)).log_inverse_expansion
        head = cocycle_trace(request(random_env, length=m)).log_inverse_expansion
        middle = float(run_orbit(request(random_env, length=m))[-1, 0])
        tail = cocycle_trace(request(random_env.shift(m), start=(middle,), length=n)).log_inverse_expansion
        assert np.concatenate([head, tail]).tolist() == whole.tolist()


class TestEvolveEnsemble:
    def test_visits_every_time(self, random_env):
        seen = []
        states = np.linspace(0.05, 0.95, 10)[:, None]
        evolve_ensemble(random_env, "intermittent_circle", states, 0, 6, lambda t, s: seen.append(t))
        assert seen == list(range(7))

    def test_matches_single_orbits(self, random_env):
        states = np.array([[0.3], [0.7]])
        final = evolve_ensemble(random_env, "intermittent_circle", states, 0, 12)
        for row, x0 in zip(final, (0.3, 0.7)):
            assert row[0] == pytest.approx(run_orbit(request(random_env, start=(x0,), length=12))[-1, 0], abs=1e-9)

"""Pytest fixtures for quenched mixing lab tests."""
import pytest

from qmlab.config import Command, ExperimentConfig
from qmlab.environment import Environment, ParameterLaw
from qmlab.events.dispatcher import Experiment, ExperimentDispatcher
from qmlab.handlers import (
    ConeHandler,
    CorrelateHandler,
    CoupleHandler,
    ExpansionHandler,
    MarkovHandler,
    PlissHandler,
    TailHandler,
)
from qmlab.middleware.base import MiddlewareChain
from qmlab.registry import default_registry


@pytest.fixture
def lsv_env():
    """Deterministic environment, alpha = 1/2."""
    return Environment(seed=1, law=ParameterLaw.dirac(0.5))


@pytest.fixture
def random_env():
    return Environment(seed=3, law=ParameterLaw.uniform(0.3, 0.7))


@pytest.fixture
def cat_env():
    return Environment(seed=7, law=ParameterLaw.uniform(-0.05, 0.05))


@pytest.fixture
def family_registry():
    return default_registry()


@pytest.fixture
def experiment_dispatcher(family_registry):
    dispatcher = ExperimentDispatcher()
    dispatcher.register_handler(Command.TAIL, TailHandler(family_registry))
    dispatcher.register_handler(Command.MARKOV, MarkovHandler(family_registry))
    dispatcher.register_handler(Command.CORRELATE, CorrelateHandler(family_registry))
    dispatcher.register_handler(Command.COUPLE, CoupleHandler(family_registry))
    dispatcher.register_handler(Command.CONE, ConeHandler(family_registry))
    dispatcher.register_handler(Command.PLISS, PlissHandler(family_registry))
    dispatcher.register_handler(Command.EXPANSION, ExpansionHandler(family_registry))
    return dispatcher


@pytest.fixture
def middleware_chain():
    return MiddlewareChain()


@pytest.fixture
def tail_config(tmp_path):
    return ExperimentConfig(command=Command.TAIL, law="dirac:0.5", max_n=200,
                            tail_window=(20, 200), output_dir=tmp_path / "tail")


@pytest.fixture
def tail_experiment(tail_config):
    return Experiment(config=tail_config)


@pytest.fixture
def correlate_config(tmp_path):
    return ExperimentConfig(command=Command.CORRELATE, law="uniform:0.45,0.55", family="solenoid",
                            n_max=20, N=2000, m=50, output_dir=tmp_path / "correlate")

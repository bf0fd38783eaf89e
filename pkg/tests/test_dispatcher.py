"""Tests for the experiment dispatcher."""
import pytest
from unittest.mock import AsyncMock

from pydantic import ValidationError

from qmlab.config import Command, RunSummary
from qmlab.events.dispatcher import Experiment, ExperimentDispatcher


class TestCommandIdentification:
    def test_identifies_named_command(self):
        assert ExperimentDispatcher.identify_command({"command": "couple"}) == Command.COUPLE

    def test_defaults_to_tail(self):
        assert ExperimentDispatcher.identify_command({"seed": 3}) == Command.TAIL

    def test_rejects_unknown_command(self):
        with pytest.raises(ValueError):
            ExperimentDispatcher.identify_command({"command": "lyapunov"})


class TestExperiment:
    def test_command_comes_from_config(self, tail_config):
        assert Experiment(config=tail_config).command is Command.TAIL

    def test_rejects_unknown_fields(self, tail_config):
        with pytest.raises(ValidationError):
            Experiment(config=tail_config, context={"origin": "test"})


class TestExperimentDispatcher:
    def test_registers_handler(self):
        dispatcher = ExperimentDispatcher()
        handler = object()
        dispatcher.register_handler(Command.CONE, handler)
        assert dispatcher._handlers[Command.CONE] == handler
        assert dispatcher.commands == [Command.CONE]

    def test_fixture_covers_every_command(self, experiment_dispatcher):
        assert set(experiment_dispatcher.commands) == set(Command)

    @pytest.mark.asyncio
    async def test_raises_error_for_unregistered_command(self, tail_experiment):
        dispatcher = ExperimentDispatcher()

        with pytest.raises(ValueError, match="No handler registered for tail"):
            await dispatcher.dispatch(tail_experiment)

    @pytest.mark.asyncio
    async def test_routes_to_registered_handler(self, tail_config):
        summary = RunSummary.for_config(tail_config)
        handler = AsyncMock()
        handler.handle = AsyncMock(return_value=summary)
        dispatcher = ExperimentDispatcher()
        dispatcher.register_handler(Command.TAIL, handler)
        experiment = Experiment(config=tail_config)

        result = await dispatcher.dispatch(experiment)

        assert result is summary
        handler.handle.assert_awaited_once_with(experiment)

    @pytest.mark.asyncio
    async def test_tail_handler_end_to_end(self, experiment_dispatcher, tail_experiment, tail_config):
        summary = await experiment_dispatcher.dispatch(tail_experiment)

        assert summary.command == Command.TAIL
        assert summary.checks["mass_conservation"]
        assert (tail_config.output_dir / "tail.csv").exists()

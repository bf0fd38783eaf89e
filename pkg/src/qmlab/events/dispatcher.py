"""Experiment dispatcher routing validated configs to their handlers."""
from typing import Any, Protocol

from pydantic import BaseModel, ConfigDict

from ..config import Command, ExperimentConfig, RunSummary


class Experiment(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ExperimentConfig

    @property
    def command(self) -> Command:
        return self.config.command


class ExperimentHandler(Protocol):
    async def handle(self, experiment: Experiment) -> RunSummary: ...


class ExperimentDispatcher:
    def __init__(self):
        self._handlers: dict[Command, ExperimentHandler] = {}

    def register_handler(self, command: Command, handler: ExperimentHandler):
        self._handlers[command] = handler

    @property
    def commands(self) -> list[Command]:
        return list(self._handlers)

    async def dispatch(self, experiment: Experiment) -> RunSummary:
        handler = self._handlers.get(experiment.command)
        if not handler:
            raise ValueError(f"No handler registered for {experiment.command.value}")
        return await handler.handle(experiment)

    @staticmethod
    def identify_command(raw: dict[str, Any]) -> Command:
        """Command named by a manifest; manifests without one default to `tail`."""
        return Command(raw.get("command", Command.TAIL.value))

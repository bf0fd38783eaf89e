"""Common middleware implementations."""
import logging

from ..config import Command, RunStatus, RunSummary
from ..errors import ConfigError, DomainError, InsufficientSignalError
from ..events.dispatcher import Experiment
from ..export import write_summary
from ..registry import FamilyRegistry, default_registry
from .base import HandlerFunc, Middleware

logger = logging.getLogger(__name__)

# Commands bound to one family regardless of the configured one.
FIXED_FAMILIES = {
    Command.TAIL: "intermittent_circle",
    Command.MARKOV: "intermittent_circle",
    Command.CONE: "solenoid",
}


class LoggingMiddleware(Middleware):
    async def process(self, experiment: Experiment, next_handler: HandlerFunc) -> RunSummary:
        config = experiment.config
        logger.info(f"Running {config.command.value} on {config.family} (seed={config.seed}, law={config.law.describe()})")
        try:
            summary = await next_handler(experiment)
            logger.info(f"Finished {config.command.value}: status {summary.status.value}")
            return summary
        except Exception as e:
            logger.error(f"Error running {config.command.value}: {e}")
            raise


class ValidationMiddleware(Middleware):
    """Cross-field checks the config model cannot make on its own."""

    def __init__(self, registry: FamilyRegistry | None = None):
        self.registry = registry or default_registry()

    async def process(self, experiment: Experiment, next_handler: HandlerFunc) -> RunSummary:
        config = experiment.config
        name = FIXED_FAMILIES.get(config.command, config.family)
        family = self.registry.lookup(name)
        if family is None:
            raise ConfigError("family", f"no family registered as '{name}'")
        if config.command is not Command.COUPLE:
            try:
                family.check_law(config.law)
            except DomainError as e:
                raise ConfigError("law", str(e)) from e
        if config.start is not None and config.command in (Command.PLISS,):
            try:
                family.validate_start(config.start)
            except ValueError as e:
                raise ConfigError("start", str(e)) from e
        if config.output_dir.exists() and not config.output_dir.is_dir():
            raise ConfigError("output_dir", f"{config.output_dir} exists and is not a directory")
        return await next_handler(experiment)


class SummaryMiddleware(Middleware):
    """Writes summary.json and turns an insufficient-signal run into an error afterwards."""

    async def process(self, experiment: Experiment, next_handler: HandlerFunc) -> RunSummary:
        summary = await next_handler(experiment)
        summary = summary.model_copy(update={"artifacts": sorted({*summary.artifacts, "summary.json"})})
        write_summary(experiment.config.output_dir, summary)
        if summary.status is RunStatus.INSUFFICIENT_SIGNAL:
            raise InsufficientSignalError(
                summary.message or "insufficient signal",
                signal_horizon=int(summary.metrics.get("signal_horizon") or 0),
            )
        return summary

"""CLI for the quenched mixing lab."""
import asyncio
import functools
import json
import logging
from pathlib import Path
from typing import Any, Optional

import click
import yaml
from pydantic import ValidationError

from qmlab.config import Command, ExperimentConfig, RunSummary, load_config_file, sample_manifest
from qmlab.errors import ConfigError, InsufficientSignalError
from qmlab.events.dispatcher import Experiment, ExperimentDispatcher
from qmlab.export import summary_schema
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
from qmlab.middleware.common import LoggingMiddleware, SummaryMiddleware, ValidationMiddleware
from qmlab.parallel import THREADS_ENV, make_executor
from qmlab.registry import FamilyRegistry, default_registry

logger = logging.getLogger(__name__)

EXIT_INVALID = 2
EXIT_INSUFFICIENT_SIGNAL = 3

HANDLERS = {
    Command.TAIL: TailHandler,
    Command.MARKOV: MarkovHandler,
    Command.CORRELATE: CorrelateHandler,
    Command.COUPLE: CoupleHandler,
    Command.CONE: ConeHandler,
    Command.PLISS: PlissHandler,
    Command.EXPANSION: ExpansionHandler,
}


def build_dispatcher(registry: FamilyRegistry, executor=None) -> ExperimentDispatcher:
    dispatcher = ExperimentDispatcher()
    for command, handler in HANDLERS.items():
        dispatcher.register_handler(command, handler(registry, executor))
    return dispatcher


async def execute(config: ExperimentConfig, threads: Optional[int] = None) -> RunSummary:
    """Run one experiment through the middleware chain on a fresh worker pool."""
    registry = default_registry()
    executor = make_executor(threads)
    try:
        dispatcher = build_dispatcher(registry, executor)
        middleware = MiddlewareChain([
            LoggingMiddleware(),
            ValidationMiddleware(registry),
            SummaryMiddleware(),
        ])
        return await middleware.execute(Experiment(config=config), dispatcher.dispatch)
    finally:
        if executor is not None:
            executor.shutdown()


def _describe_validation(e: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()]


def _fail(ctx: click.Context, lines: list[str], code: int):
    click.echo("Configuration validation failed:" if code == EXIT_INVALID else "Run incomplete:", err=True)
    for line in lines:
        click.echo(f"  - {line}", err=True)
    ctx.exit(code)


def _build_config(ctx: click.Context, raw: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        _fail(ctx, _describe_validation(e), EXIT_INVALID)


def _run(ctx: click.Context, config: ExperimentConfig, threads: Optional[int]):
    try:
        summary = asyncio.run(execute(config, threads))
    except InsufficientSignalError as e:
        _fail(ctx, [str(e), f"partial results in {config.output_dir}"], EXIT_INSUFFICIENT_SIGNAL)
    except ValueError as e:
        _fail(ctx, [str(e)], EXIT_INVALID)
    click.echo(summary.model_dump_json(indent=2))


def experiment_command(command: Command):
    """Wrap a command body: merge manifest and flags, validate, run."""

    def decorator(fn):
        @click.option('--config', '-c', 'config_path', type=click.Path(exists=True, dir_okay=False),
                      help='YAML/JSON manifest; flags override its values')
        @click.option('--seed', type=int, help='Environment seed')
        @click.option('--law', help='Parameter law, e.g. dirac:0.5 or uniform:0.4,0.6')
        @click.option('--family', help='Map family name')
        @click.option('--output-dir', '-o', type=click.Path(file_okay=False), help='Directory for artifacts')
        @click.option('--threads', type=int, envvar=THREADS_ENV, help='Worker processes')
        @click.pass_context
        @functools.wraps(fn)
        def wrapper(ctx: click.Context, config_path: Optional[str], threads: Optional[int], **options):
            try:
                raw = load_config_file(config_path) if config_path else {}
            except ConfigError as e:
                _fail(ctx, [str(e)], EXIT_INVALID)
            overrides = {k: v for k, v in options.items() if v is not None and v != ()}
            config = _build_config(ctx, {**raw, **overrides, "command": command.value})
            _run(ctx, config, threads)

        return wrapper

    return decorator


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose logging')
def cli(verbose: bool):
    """Quenched mixing lab: numerical experiments on random dynamical systems."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


@cli.command()
@click.option('--max-n', type=int, help='Partition depth')
@click.option('--annealed-seeds', type=int, help='Seeds in the averaged tail (0 disables)')
@click.option('--tail-window', nargs=2, type=int, help='Fit window LO HI')
@click.option('--tail-constant', type=float, help='Constant C of the tail envelope')
@experiment_command(Command.TAIL)
def tail(**options):
    """Return-time tail of the inducing partition."""


@cli.command()
@click.option('--markov-n', type=int, help='Largest cell index checked')
@click.option('--markov-seeds', type=int, help='Number of consecutive seeds')
@click.option('--distortion-samples', type=int, help='Sampled same-cell pairs')
@experiment_command(Command.MARKOV)
def markov(**options):
    """Markov property, mass conservation and distortion of the partition."""


@cli.command()
@click.option('--phi', help='Observable evaluated at time n')
@click.option('--psi', help='Observable evaluated at time 0')
@click.option('--n-max', type=int, help='Largest lag')
@click.option('--burnin', '-m', type=int, help='Pullback depth of the attractor sample')
@click.option('--samples', '-N', type=int, help='Sample count')
@click.option('--fit-model', type=click.Choice(['polynomial', 'exponential', 'stretched']))
@click.option('--fit-window', nargs=2, type=int, help='Fit window LO HI')
@click.option('--eta', type=float, help='Hölder exponent used for the theory exponent')
@experiment_command(Command.CORRELATE)
def correlate(**options):
    """Quenched correlation decay on the pullback attractor."""


@cli.command()
@click.option('--tail-law', help='Return law: polynomial:A, exponential:C, stretched:C,THETA, fixed:R')
@click.option('--pairs', type=int, help='Independent orbit pairs')
@click.option('--horizon', type=int, help='Last simulated time')
@click.option('--ell0', type=int, help='Minimal gap between stopping times')
@click.option('--eps1', type=float, help='Mass fraction matched per coupling')
@experiment_command(Command.COUPLE)
def couple(**options):
    """Stopping-time coupling on abstract towers."""


@cli.command()
@click.option('--cone-orbits', type=int, help='Random solenoid orbits')
@click.option('--cone-steps', type=int, help='Pushes per orbit')
@experiment_command(Command.CONE)
def cone(**options):
    """Center-unstable cone contraction along the solenoid."""


@cli.command()
@click.option('--horizon', type=int, help='Orbit length')
@click.option('--log-alpha', type=float, help='Log hyperbolicity rate (negative)')
@click.option('--expansion-constant', 'c', type=float, help='Expansion constant')
@click.option('--start', multiple=True, type=float, help='Start coordinate (repeat per coordinate)')
@experiment_command(Command.PLISS)
def pliss(**options):
    """Hyperbolic times along one orbit."""


@cli.command()
@click.option('--horizon', type=int, help='Orbit length')
@click.option('--expansion-constant', 'c', type=float, help='Expansion constant')
@click.option('--grid', type=int, help='Start grid size')
@experiment_command(Command.EXPANSION)
def expansion(**options):
    """Tail of the expansion time over a grid of starts."""


@cli.command()
@click.option('--config', '-c', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Manifest whose command field selects the experiment')
@click.option('--threads', type=int, envvar=THREADS_ENV, help='Worker processes')
@click.pass_context
def run(ctx: click.Context, config: str, threads: Optional[int]):
    """Run a manifest."""
    try:
        raw = load_config_file(config)
        raw["command"] = ExperimentDispatcher.identify_command(raw).value
    except (ConfigError, ValueError) as e:
        _fail(ctx, [str(e)], EXIT_INVALID)
    _run(ctx, _build_config(ctx, raw), threads)


@cli.command()
@click.option('--config', '-c', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Path to manifest')
@click.pass_context
def validate(ctx: click.Context, config: str):
    """Validate a manifest without running it."""
    try:
        raw = load_config_file(config)
        raw["command"] = ExperimentDispatcher.identify_command(raw).value
    except ValueError as e:
        _fail(ctx, [str(e)], EXIT_INVALID)
    cfg = _build_config(ctx, raw)
    click.echo("Configuration is valid")
    click.echo(f"  command: {cfg.command.value}")
    click.echo(f"  family:  {cfg.family}")
    click.echo(f"  law:     {cfg.law.describe()} (seed {cfg.seed})")
    click.echo(f"  output:  {cfg.output_dir}")


@cli.command()
@click.argument('output', type=click.Path())
def init(output: str):
    """Generate a sample manifest."""
    output_path = Path(output)
    if output_path.exists():
        if not click.confirm(f'{output} already exists. Overwrite?'):
            return

    with open(output_path, 'w') as f:
        yaml.dump(sample_manifest(), f, default_flow_style=False, sort_keys=False)

    click.echo(f"Created sample manifest at {output}")
    click.echo("\nNext steps:")
    click.echo(f"  1. Edit {output} to choose the experiment")
    click.echo(f"  2. Validate: qmlab validate -c {output}")
    click.echo(f"  3. Run: qmlab run -c {output}")


@cli.command()
def schema():
    """Print the JSON schema of summary.json."""
    click.echo(json.dumps(summary_schema(), indent=2))


if __name__ == '__main__':
    cli()

"""Experiment handlers, one per command. summary.json is written by SummaryMiddleware."""
import asyncio
import logging
from abc import ABC, abstractmethod
from concurrent.futures import Executor
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig, FitSummary, RunStatus, RunSummary
from .coupling import run_coupling, tail_fit, uncoupled_mass_curve
from .environment import Environment, ParameterLaw, Stream
from .errors import ArgumentError, InsufficientSignalError
from .events.dispatcher import Experiment
from .export import write_csv, write_dat, write_plot_script
from .hyperbolic_times import hyperbolic_time_report
from .inducing import (
    DISTORTION_DEPTH,
    TailFit,
    annealed_tail,
    build_partition,
    distortion_report,
    markov_check,
    tail_curve,
    tail_slope,
    tail_threshold,
)
from .maps import CONE_ABSORBING, CONE_START, circle_values, push_slope_boxes
from .orbits import OrbitRequest, cocycle_trace
from .registry import FamilyRegistry, MapFamily, default_registry
from .statistics import (
    FitModel,
    ObservableKind,
    RateFit,
    bound_ratio,
    expansion_tail,
    fit_curve,
    fit_rate,
    quenched_correlation,
    signal_horizon,
    theory_exponent,
)

logger = logging.getLogger(__name__)

TOLERANCE = 1e-10
_GOLDEN_CONJUGATE = (np.sqrt(5.0) - 1.0) / 2.0
DEFAULT_STARTS = {"intermittent_circle": (0.3,), "solenoid": (0.3, 0.0, 0.0), "perturbed_cat": (0.3, 0.7)}


def _rate_summary(fit: RateFit) -> FitSummary:
    return FitSummary(model=fit.model.value, exponent=fit.exponent, prefactor=fit.prefactor,
                      r2=fit.r_squared, window=fit.window, theta=fit.theta)


def _tail_summary(fit: TailFit) -> FitSummary:
    return FitSummary(model=FitModel.POLYNOMIAL.value, exponent=fit.slope, prefactor=float(np.exp(fit.intercept)),
                      r2=fit.r_squared, window=fit.window)


class ExperimentRunner(ABC):
    """Base for the command handlers; subclasses implement run."""

    def __init__(self, registry: FamilyRegistry | None = None, executor: Optional[Executor] = None):
        self.registry = registry or default_registry()
        self.executor = executor

    async def handle(self, experiment: Experiment) -> RunSummary:
        return await asyncio.to_thread(self.run, experiment.config)

    @abstractmethod
    def run(self, config: ExperimentConfig) -> RunSummary:
        pass

    def family(self, config: ExperimentConfig) -> MapFamily:
        return self.registry.require(config.family)

    @staticmethod
    def output(config: ExperimentConfig) -> Path:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        return config.output_dir


class TailHandler(ExperimentRunner):
    def run(self, config: ExperimentConfig) -> RunSummary:
        out = self.output(config)
        p = build_partition(config.env, config.max_n)
        tail = tail_curve(p)
        m = np.arange(2, config.max_n + 2)
        write_csv(out / "tail.csv", ("m", "tail"), zip(m.tolist(), tail[1:].tolist()))
        write_csv(
            out / "partition.csv",
            ("n", "side", "lo", "hi", "return_time"),
            ((c.n, c.side.value, c.lo, c.hi, c.return_time) for c in p.cells()),
        )
        write_dat(out / "tail.dat", m, tail[1:])
        series = [("tail.dat", f"Leb(R > m), {config.law.describe()}")]
        artifacts = ["tail.csv", "partition.csv", "tail.dat"]

        hi = min(config.tail_window[1], config.max_n + 1)
        lo = max(1, min(config.tail_window[0], hi - 1))
        fit = tail_slope(p, lo, hi)
        mass = abs(2.0 * float(p.cell_lengths().sum()) + float(tail[-1]) - 1.0)
        alpha0, alpha1 = config.law.support_bounds
        checks = {
            "mass_conservation": mass <= TOLERANCE,
            "tail_monotone": bool(np.all(np.diff(tail) <= 0.0)),
        }
        metrics: dict[str, Optional[float]] = {
            "mass_defect": mass,
            "tail_at_max": float(tail[-1]),
            "n1": tail_threshold(p, config.tail_constant, alpha1),
        }

        if not config.law.is_deterministic:
            below = tail_curve(build_partition(Environment(seed=config.seed, law=ParameterLaw.dirac(alpha0)), config.max_n))
            above = tail_curve(build_partition(Environment(seed=config.seed, law=ParameterLaw.dirac(alpha1)), config.max_n))
            checks["sandwich"] = bool(np.all(below <= tail) and np.all(tail <= above))
        if config.annealed_seeds:
            seeds = [(config.seed + i) % 2**64 for i in range(config.annealed_seeds)]
            annealed = annealed_tail(config.law, seeds, config.max_n)
            write_csv(out / "annealed_tail.csv", ("m", "tail"), zip(m.tolist(), annealed[1:].tolist()))
            write_dat(out / "annealed_tail.dat", m, annealed[1:])
            series.append(("annealed_tail.dat", "seed average"))
            artifacts += ["annealed_tail.csv", "annealed_tail.dat"]

        write_plot_script(out / "plot.gp", series)
        return RunSummary.for_config(
            config,
            fits={"tail": _tail_summary(fit)},
            checks=checks,
            metrics=metrics,
            artifacts=[*artifacts, "plot.gp"],
        )


class MarkovHandler(ExperimentRunner):
    def run(self, config: ExperimentConfig) -> RunSummary:
        out = self.output(config)
        depth = max(config.markov_n + 1, DISTORTION_DEPTH)
        rows, worst_defect, worst_mass = [], 0.0, 0.0
        for i in range(config.markov_seeds):
            env = Environment(seed=(config.seed + i) % 2**64, law=config.law)
            p = build_partition(env, depth)
            for n in range(1, config.markov_n + 1):
                defect = markov_check(p, n)
                worst_defect = max(worst_defect, defect)
                rows.append((env.seed, n, defect))
            mass = abs(2.0 * float(p.cell_lengths().sum()) + float(tail_curve(p)[-1]) - 1.0)
            worst_mass = max(worst_mass, mass)
        write_csv(out / "markov.csv", ("seed", "n", "defect"), rows)

        report = distortion_report(build_partition(config.env, depth), config.distortion_samples)
        separations = sorted(report.separation_maxima)
        maxima = [report.separation_maxima[s] for s in separations]
        write_csv(out / "distortion.csv", ("separation", "max_log_distortion"), zip(separations, maxima))
        write_dat(out / "distortion.dat", separations, maxima)
        write_plot_script(out / "plot.gp", [("distortion.dat", "max log distortion")], logx=False)
        logger.info(f"Markov defect {worst_defect:.3g} and mass defect {worst_mass:.3g} over {config.markov_seeds} seeds")
        return RunSummary.for_config(
            config,
            checks={
                "markov": worst_defect <= TOLERANCE,
                "mass_conservation": worst_mass <= TOLERANCE,
                "distortion_contracts": report.beta_hat < 1.0,
            },
            metrics={
                "max_defect": worst_defect,
                "max_mass_defect": worst_mass,
                "c_hat": report.c_hat,
                "beta_hat": report.beta_hat,
            },
            artifacts=["markov.csv", "distortion.csv", "distortion.dat", "plot.gp"],
        )


class CorrelateHandler(ExperimentRunner):
    def run(self, config: ExperimentConfig) -> RunSummary:
        out = self.output(config)
        family = self.family(config)
        series = quenched_correlation(
            config.env, family, config.phi, config.psi, config.n_max,
            m=config.burnin, N=config.samples, executor=self.executor,
        )
        lags = series.lags.tolist()
        write_csv(out / "correlations.csv", ("n", "C_hat", "stderr"),
                  zip(lags, series.values.tolist(), series.stderr.tolist()))
        write_dat(out / "correlations.dat", lags[1:], np.abs(series.values[1:]))
        write_dat(out / "stderr.dat", lags[1:], series.stderr[1:])
        write_plot_script(out / "plot.gp", [("correlations.dat", "|C_n|"), ("stderr.dat", "stderr")])
        artifacts = ["correlations.csv", "correlations.dat", "stderr.dat", "plot.gp"]

        constant = ObservableKind.CONSTANT in (config.phi.kind, config.psi.kind)
        checks = {"bounded": bool(np.all(np.abs(series.values) <= 2.0))}
        if constant:
            checks["constant_null"] = bool(np.all(series.values == 0.0))
        metrics: dict[str, Optional[float]] = {
            "signal_horizon": signal_horizon(series),
            "max_abs_correlation": float(np.max(np.abs(series.values))),
        }
        if family.name != "perturbed_cat":
            alpha0 = config.law.support_bounds[0]
            metrics["theory_exponent"] = theory_exponent(alpha0, config.eta)
            if config.n_max >= 4 and not constant:
                metrics["bound_ratio"] = bound_ratio(series, config.env, alpha0, config.eta)

        try:
            fit = fit_rate(series, config.fit_model, config.fit_window)
        except InsufficientSignalError as e:
            logger.warning(f"Correlation fit skipped: {e}")
            return RunSummary.for_config(
                config, status=RunStatus.INSUFFICIENT_SIGNAL, message=str(e),
                checks=checks, metrics=metrics, artifacts=artifacts,
            )
        return RunSummary.for_config(
            config, fits={"correlation": _rate_summary(fit)}, checks=checks, metrics=metrics, artifacts=artifacts
        )


class CoupleHandler(ExperimentRunner):
    def run(self, config: ExperimentConfig) -> RunSummary:
        out = self.output(config)
        law = config.coupling_law()
        result = run_coupling(
            config.env, law, config.pairs, config.horizon, ell0=config.ell0, executor=self.executor, eps1=config.eps1,
        )
        write_csv(
            out / "tau.csv",
            ("pair_id", "tau_index", "tau_value"),
            ((pair, i, tau) for pair, taus in sorted(result.tau_records.items()) for i, tau in enumerate(taus, 1)),
        )
        n = np.arange(result.horizon + 1)
        mass = uncoupled_mass_curve(result)
        write_csv(out / "uncoupled.csv", ("n", "uncoupled_mass"), zip(n.tolist(), mass.tolist()))
        tails = result.Ti_tail()
        write_csv(
            out / "coupling_tail.csv",
            ("n", *(f"T{i}_survival" for i in tails)),
            zip(n.tolist(), *(curve.tolist() for curve in tails.values())),
        )
        write_dat(out / "coupling_tail.dat", n[1:], tails[1][1:])
        write_dat(out / "uncoupled.dat", n[1:], mass[1:])
        write_plot_script(
            out / "plot.gp", [("coupling_tail.dat", "P(T > n)"), ("uncoupled.dat", "uncoupled mass")]
        )
        artifacts = ["tau.csv", "uncoupled.csv", "coupling_tail.csv", "coupling_tail.dat", "uncoupled.dat", "plot.gp"]

        ell0 = config.ell0
        checks = {
            "tau_gaps": all(
                taus[0] >= ell0 and all(b - a >= ell0 for a, b in zip(taus, taus[1:]))
                for taus in result.tau_records.values() if taus
            ),
            "coupling_gaps": all(
                all(b - a >= ell0 for a, b in zip(ts, ts[1:])) for ts in result.coupling_records.values()
            ),
            "epochs_ordered": all(np.all(tails[i] <= tails[i + 1]) for i in list(tails)[:-1]),
        }
        coupled = result.first_coupling[result.first_coupling >= 0]
        metrics: dict[str, Optional[float]] = {
            "censored": result.censored,
            "mean_first_coupling": float(coupled.mean()) if coupled.size else None,
            "return_mean": law.mean,
        }
        try:
            fit = tail_fit(result)
        except ArgumentError as e:
            logger.warning(f"Coupling tail fit skipped: {e}")
            return RunSummary.for_config(
                config, status=RunStatus.INSUFFICIENT_SIGNAL, message=str(e),
                checks=checks, metrics=metrics, artifacts=artifacts,
            )
        return RunSummary.for_config(
            config, fits={"coupling_tail": _rate_summary(fit)}, checks=checks, metrics=metrics, artifacts=artifacts
        )


def cone_widths(env: Environment, orbits: int, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Largest slope-box width and |slope| after each push, over random solenoid orbits.

    Both arrays have steps+1 entries; entry 0 is the starting cone.
    """
    x = env.uniforms(Stream.ATTRACTOR, np.arange(orbits), 0)
    boxes = np.tile([-CONE_START, CONE_START, -CONE_START, CONE_START], (orbits, 1))
    params = env.param_window(0, steps)[:, 0]
    widths, extents = [2.0 * CONE_START], [CONE_START]
    for alpha in params:
        boxes = push_slope_boxes(alpha, x, boxes)
        x = circle_values(alpha, x)
        widths.append(float(np.max(np.maximum(boxes[:, 1] - boxes[:, 0], boxes[:, 3] - boxes[:, 2]))))
        extents.append(float(np.max(np.abs(boxes))))
    return np.array(widths), np.array(extents)


class ConeHandler(ExperimentRunner):
    def run(self, config: ExperimentConfig) -> RunSummary:
        out = self.output(config)
        widths, extents = cone_widths(config.env, config.cone_orbits, config.cone_steps)
        n = np.arange(config.cone_steps + 1)
        bound = widths[0] * 10.0 ** (-n.astype(np.float64))
        write_csv(out / "cone.csv", ("n", "max_width", "bound", "max_abs_slope"),
                  zip(n.tolist(), widths.tolist(), bound.tolist(), extents.tolist()))
        write_dat(out / "cone.dat", n, widths)
        write_dat(out / "cone_bound.dat", n, bound)
        write_plot_script(out / "plot.gp", [("cone.dat", "max width"), ("cone_bound.dat", "10^-n")], logx=False)
        return RunSummary.for_config(
            config,
            checks={
                "contraction": bool(np.all(widths <= bound * (1.0 + 1e-9))),
                "absorbed": bool(np.all(extents <= CONE_ABSORBING)),
            },
            metrics={"max_ratio": float(np.max(widths[1:] / bound[1:])), "final_width": float(widths[-1])},
            artifacts=["cone.csv", "cone.dat", "cone_bound.dat", "plot.gp"],
        )


class PlissHandler(ExperimentRunner):
    def run(self, config: ExperimentConfig) -> RunSummary:
        out = self.output(config)
        family = self.family(config)
        start = config.start or DEFAULT_STARTS[family.name]
        trace = cocycle_trace(OrbitRequest(env=config.env, family=family.name, start=tuple(start), length=config.horizon))
        report = hyperbolic_time_report(trace.log_inverse_expansion, config.log_alpha, config.c)
        n = np.arange(1, config.horizon + 1)
        hyperbolic = np.zeros(config.horizon, dtype=np.int64)
        hyperbolic[np.asarray(report.times, dtype=np.int64) - 1] = 1
        density = np.cumsum(hyperbolic) / n
        write_csv(out / "pliss.csv", ("n", "log_inverse_expansion", "hyperbolic"),
                  zip(n.tolist(), trace.log_inverse_expansion.tolist(), hyperbolic.tolist()))
        write_dat(out / "density.dat", n, density)
        write_plot_script(out / "plot.gp", [("density.dat", "hyperbolic-time density")], logy=False)
        checks = {}
        if report.pliss_bound is not None:
            checks["pliss_bound"] = report.density_lower_bound >= report.pliss_bound
        return RunSummary.for_config(
            config,
            checks=checks,
            metrics={
                "density": report.density_lower_bound,
                "pliss_bound": report.pliss_bound,
                "nue_constant": report.nue_constant,
                "expansion_time": report.expansion_time,
                "hyperbolic_times": len(report.times),
            },
            artifacts=["pliss.csv", "density.dat", "plot.gp"],
        )


def start_grid(family: MapFamily, size: int) -> np.ndarray:
    """Midpoint grid on the base circle; extra torus coordinates follow a golden-ratio lattice."""
    i = np.arange(size, dtype=np.float64)
    x = (i + 0.5) / size
    if family.name == "perturbed_cat":
        return np.stack([x, np.mod((i + 0.5) * _GOLDEN_CONJUGATE, 1.0)], axis=1)
    states = np.zeros((size, family.dim))
    states[:, 0] = x
    return states


class ExpansionHandler(ExperimentRunner):
    def run(self, config: ExperimentConfig) -> RunSummary:
        out = self.output(config)
        family = self.family(config)
        tail = expansion_tail(config.env, family, start_grid(family, config.grid), config.horizon, config.c)
        n = np.array([k for k, _ in tail])
        fraction = np.array([f for _, f in tail])
        write_csv(out / "expansion.csv", ("n", "fraction"), zip(n.tolist(), fraction.tolist()))
        write_dat(out / "expansion.dat", n, fraction)
        write_plot_script(out / "plot.gp", [("expansion.dat", "Leb(E > n)")], logx=False)
        artifacts = ["expansion.csv", "expansion.dat", "plot.gp"]
        checks = {"monotone": bool(np.all(np.diff(fraction) <= 0.0))}
        metrics: dict[str, Optional[float]] = {"never_expanding": float(fraction[-1])}
        use = (fraction > 0.0) & (fraction < 1.0)
        if use.sum() < 3:
            message = f"only {int(use.sum())} informative points in the expansion tail"
            logger.warning(message)
            return RunSummary.for_config(
                config, status=RunStatus.INSUFFICIENT_SIGNAL, message=message,
                checks=checks, metrics=metrics, artifacts=artifacts,
            )
        fit = fit_curve(n[use], fraction[use], FitModel.STRETCHED)
        return RunSummary.for_config(
            config, fits={"expansion_tail": _rate_summary(fit)}, checks=checks, metrics=metrics, artifacts=artifacts
        )

"""Experiment registry and the runner that executes arms and writes outputs.

An experiment is a list of independent arms (one per kernel, or per scene and kernel)
plus a reduction over their results. Arms run concurrently on the default executor
and come back in configured order, so every reduction is deterministic.
"""

import asyncio
import os
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Any, Callable

import numpy as np
from loguru import logger
from scipy import stats

from l0s import __version__
from l0s.core import ConfigError, KernelKind, SampleMode
from l0s.experiments.config import ExperimentConfig, ExperimentName
from l0s.experiments.report import ExperimentReport, Table, write_csv, write_json
from l0s.metrics import (KernelCurve, bias_curve, classical_hvs, concentration,
                         default_a_grid, integral_curve, paired_sign_test,
                         render_error, trial_seeds)
from l0s.pdf import RayWeights, build_pdf, draw_uniforms, maxblur, sample

KS_THRESHOLD = 0.002
HVS_TOLERANCE = 1e-12

# Slack for floating point noise when checking curve monotonicity
_MONOTONE_SLACK = 1e-12


@dataclass
class Outcome:
    row: dict
    data: Any = None


@dataclass
class Arm:
    name: str
    fn: Callable[[], Outcome]


@dataclass
class ArmResult:
    name: str
    outcome: Outcome
    seconds: float


@dataclass
class Experiment:
    arms: list[Arm]
    reduce: Callable[[list[ArmResult]], tuple[dict, dict[str, Table]]]


def _timed(arm: Arm) -> ArmResult:
    start = time.perf_counter()
    outcome = arm.fn()
    seconds = time.perf_counter() - start
    logger.debug(f"Arm {arm.name} done in {seconds:.3f}s")
    return ArmResult(arm.name, outcome, seconds)


async def run_arms(arms: list[Arm]) -> list[ArmResult]:
    """Run every arm on the default executor; results keep the order of `arms`."""

    loop = asyncio.get_running_loop()
    return list(await asyncio.gather(*[loop.run_in_executor(None, _timed, arm) for arm in arms]))


def _curve_arm(kind: KernelKind, grid: np.ndarray, quantity: str) -> Outcome:
    curve = bias_curve(kind, grid) if quantity == "bias" else integral_curve(kind, grid)
    steps = np.diff(curve.values)
    # Bias falls as a grows towards b, the integral rises
    monotone = np.all(steps <= _MONOTONE_SLACK) if quantity == "bias" else np.all(steps >= -_MONOTONE_SLACK)
    row = {
        "arm": kind.value,
        "kernel": kind.value,
        "at_grid_min": curve.values[0],
        "at_one": curve.values[-1],
        "monotone": bool(monotone),
    }
    return Outcome(row, curve)


def _curve_experiment(config: ExperimentConfig, quantity: str) -> Experiment:
    grid = default_a_grid(config.grid_points, config.grid_min)
    arms = [Arm(kind.value, partial(_curve_arm, kind, grid, quantity)) for kind in config.kinds]

    def reduce(results: list[ArmResult]):
        curves: dict[KernelKind, KernelCurve] = {KernelKind(r.name): r.outcome.data for r in results}
        header = ["a", *(kind.value for kind in curves)]
        rows = [[a, *(curve.values[i] for curve in curves.values())] for i, a in enumerate(grid)]

        summary: dict = {"b": 1.0, "grid_points": len(grid)}
        exp, inv, lin = (curves.get(k) for k in (KernelKind.Exponential, KernelKind.Inverse, KernelKind.Linear))
        if exp is not None and inv is not None:
            summary["max_exponential_inverse_gap"] = float(np.max(np.abs(exp.values - inv.values)))
        if quantity == "integral" and exp is not None and inv is not None and lin is not None:
            summary["ordered_inverse_exponential_linear"] = bool(
                np.all(inv.values <= exp.values) and np.all(exp.values <= lin.values)
            )
        return summary, {quantity: Table(header, rows)}

    return Experiment(arms, reduce)


def bias_curves(config: ExperimentConfig) -> Experiment:
    """Barycenter of each kernel against a, with b = 1."""
    return _curve_experiment(config, "bias")


def integral_curves(config: ExperimentConfig) -> Experiment:
    """Unit-interval integral of each kernel against a, with b = 1."""
    return _curve_experiment(config, "integral")


def _paired_arms(config: ExperimentConfig, fn: Callable) -> list[Arm]:
    return [
        Arm(f"{name}/{kind.value}", partial(fn, name, scene, kind))
        for name, scene in config.resolved_scenes()
        for kind in config.kinds
    ]


def _sign_tests(results: list[ArmResult], config: ExperimentConfig, attribute: str) -> dict:
    """One-sided p-values that each kernel beats the constant kernel, per scene."""

    if KernelKind.Constant not in config.kinds:
        return {}

    by_name = {r.name: r.outcome.data for r in results}
    out = {}
    for name, _ in config.resolved_scenes():
        baseline = getattr(by_name[f"{name}/constant"], attribute)
        out[name] = {
            kind.value: paired_sign_test(getattr(by_name[f"{name}/{kind.value}"], attribute), baseline)
            for kind in config.kinds
            if kind is not KernelKind.Constant
        }
    return out


def concentration_experiment(config: ExperimentConfig) -> Experiment:
    """Mean sample-to-surface distance and interval hit frequencies per scene and kernel."""

    settings = config.settings

    def arm(name, scene, kind):
        report = concentration(scene, kind, settings)
        row = {
            "arm": f"{name}/{kind.value}",
            "scene": name,
            "kernel": kind.value,
            "mean_distance": report.mean_distance,
            "n_samples": report.n_samples,
            "fallback": report.fallback,
        }
        return Outcome(row, report)

    def reduce(results):
        header = ["interval", *(r.name for r in results)]
        rows = [
            [i, *(r.outcome.data.frequencies[i] for r in results)]
            for i in range(config.n_coarse - 1)
        ]
        summary = {"sign_tests_vs_constant": _sign_tests(results, config, "trial_distances")}
        return summary, {"frequencies": Table(header, rows)}

    return Experiment(_paired_arms(config, arm), reduce)


def ablation(config: ExperimentConfig) -> Experiment:
    """Mean render error against the reference color per scene and kernel."""

    settings = config.settings

    def arm(name, scene, kind):
        report = render_error(scene, kind, settings)
        row = {
            "arm": f"{name}/{kind.value}",
            "scene": name,
            "kernel": kind.value,
            "reference": report.reference,
            "mean_error": report.mean_error,
            "std_error": report.std_error,
            "fallback": report.fallback,
        }
        return Outcome(row, report)

    def reduce(results):
        header = ["scene", "kernel", "mean_error", "std_error", "reference"]
        rows = [
            [r.outcome.row["scene"], r.outcome.row["kernel"], r.outcome.data.mean_error,
             r.outcome.data.std_error, r.outcome.data.reference]
            for r in results
        ]

        ranking = {}
        for name, _ in config.resolved_scenes():
            scene_rows = [r.outcome.row for r in results if r.outcome.row["scene"] == name]
            ranking[name] = [row["kernel"] for row in sorted(scene_rows, key=lambda row: row["mean_error"])]

        summary = {
            "ranking": ranking,
            "sign_tests_vs_constant": _sign_tests(results, config, "trial_errors"),
        }
        return summary, {"errors": Table(header, rows)}

    return Experiment(_paired_arms(config, arm), reduce)


def audit_weights(n_intervals: int, seed: int) -> RayWeights:
    """Random knots and weights for the distribution audit, shared by every kernel."""

    rng = np.random.default_rng(seed)
    t = np.concatenate(([0.0], np.cumsum(rng.uniform(0.5, 1.5, n_intervals))))
    w = rng.random(n_intervals + 1)
    return RayWeights(t, w)


def _audit_arm(kind: KernelKind, config: ExperimentConfig) -> Outcome:
    weights = audit_weights(config.audit_intervals, config.seed)
    pdf = build_pdf(weights, kind)
    _, fine_seed = trial_seeds(config.seed, 0)
    batch = sample(pdf, config.audit_samples, SampleMode.Independent, fine_seed)

    ks = stats.kstest(batch.positions, pdf.cdf)

    n = len(batch)
    idx = np.clip(np.searchsorted(pdf.t, batch.positions, side="right") - 1, 0, len(pdf.interval_mass) - 1)
    observed = np.bincount(idx, minlength=len(pdf.interval_mass)) / n
    expected = pdf.fractions
    sigma = np.sqrt(expected * (1.0 - expected) / n)
    spread = np.where(sigma > 0.0, np.abs(observed - expected) / np.where(sigma > 0.0, sigma, 1.0), 0.0)

    row = {
        "arm": kind.value,
        "kernel": kind.value,
        "n_samples": n,
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "max_frequency_z": float(np.max(spread)),
        "passed": bool(ks.statistic < KS_THRESHOLD),
    }
    return Outcome(row, (expected, observed))


def distribution_audit(config: ExperimentConfig) -> Experiment:
    """KS test and interval frequencies of samples drawn from a random piecewise PDF."""

    arms = [Arm(kind.value, partial(_audit_arm, kind, config)) for kind in config.kinds]

    def reduce(results):
        header = ["interval"]
        for r in results:
            header += [f"{r.name}.expected", f"{r.name}.observed"]
        rows = []
        for i in range(config.audit_intervals):
            row = [i]
            for r in results:
                expected, observed = r.outcome.data
                row += [expected[i], observed[i]]
            rows.append(row)

        summary = {"ks_threshold": KS_THRESHOLD, "all_passed": all(r.outcome.row["passed"] for r in results)}
        return summary, {"frequencies": Table(header, rows)}

    return Experiment(arms, reduce)


def _hvs_arm(name: str, scene, kind: KernelKind, config: ExperimentConfig) -> Outcome:
    settings = config.settings
    max_diff = 0.0

    for trial in range(settings.n_trials):
        coarse_seed, fine_seed = trial_seeds(settings.seed, trial)
        weights = scene.coarse_stage(settings.n_coarse, settings.jitter, np.random.default_rng(coarse_seed))
        if settings.maxblur:
            weights = maxblur(weights, floor=settings.blur_floor)

        u = draw_uniforms(settings.n_fine, settings.mode, np.random.default_rng(fine_seed))
        ours = build_pdf(weights, kind).quantile(u)
        oracle = classical_hvs(weights.t, weights.w, u)
        max_diff = max(max_diff, float(np.max(np.abs(ours - oracle))))

    row = {
        "arm": f"{name}/{kind.value}",
        "scene": name,
        "kernel": kind.value,
        "max_abs_diff": max_diff,
        "matches_classical": max_diff <= HVS_TOLERANCE,
    }
    return Outcome(row)


def hvs_regression(config: ExperimentConfig) -> Experiment:
    """Largest gap between sampled positions and the classical piecewise-uniform sampler."""

    arms = _paired_arms(config, partial(_hvs_arm, config=config))

    def reduce(results):
        summary = {"tolerance": HVS_TOLERANCE}
        constant = [r.outcome.row for r in results if r.outcome.row["kernel"] == KernelKind.Constant.value]
        if constant:
            summary["constant_matches_classical"] = all(row["matches_classical"] for row in constant)
        return summary, {}

    return Experiment(arms, reduce)


REGISTRY: dict[ExperimentName, Callable[[ExperimentConfig], Experiment]] = {
    ExperimentName.BiasCurves: bias_curves,
    ExperimentName.IntegralCurves: integral_curves,
    ExperimentName.Concentration: concentration_experiment,
    ExperimentName.Ablation: ablation,
    ExperimentName.DistributionAudit: distribution_audit,
    ExperimentName.HvsRegression: hvs_regression,
}


def describe() -> dict[str, str]:
    """Experiment names with their one-line descriptions."""
    return {name.value: fn.__doc__.strip().splitlines()[0] for name, fn in REGISTRY.items()}


def prepare_output(output: str) -> Path:
    path = Path(output)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError.single("output", f"cannot create {path}: {err.strerror}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError.single("output", f"{path} is not writable")
    return path


async def run_async(config: ExperimentConfig) -> ExperimentReport:
    out = prepare_output(config.output)
    experiment = REGISTRY[config.name](config)

    logger.info(f"Running {config.experiment} with {len(experiment.arms)} arms (seed {config.seed})")
    results = await run_arms(experiment.arms)
    summary, tables = experiment.reduce(results)

    report = ExperimentReport(
        experiment=config.experiment,
        version=__version__,
        config=config.to_dict(),
        arms=[r.outcome.row for r in results],
        summary=summary,
        timing={r.name: r.seconds for r in results} if config.record_timing else None,
        tables=tables,
    )

    for curve, table in tables.items():
        filename = f"{config.experiment}.{curve}.csv"
        write_csv(table, out / filename)
        report.files.append(filename)

    report_path = out / f"{config.experiment}.report.json"
    write_json(report, report_path)

    for filename in report.files:
        logger.info(f"Wrote {out / filename}")
    logger.info(f"Wrote {report_path}")
    return report


def run(config: ExperimentConfig) -> ExperimentReport:
    """Execute the configured experiment and write its report and curve files."""
    return asyncio.run(run_async(config))

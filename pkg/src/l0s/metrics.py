"""Diagnostics comparing kernels: barycenter and integral curves, sample concentration
around surfaces and rendering error against the analytic reference.

Every trial draws its coarse and fine randomness from seeds derived from the master seed
and the trial index only, so runs of different kernels with the same seed are paired.
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike
from scipy import stats

from l0s.core import BLUR_FLOOR, WEIGHT_FLOOR, DomainError, KernelKind, SampleMode
from l0s.kernels import get_kernel
from l0s.pdf import importance_sample
from l0s.scenes import DensityScene


def default_a_grid(num: int = 200, lowest: float = 1e-3) -> np.ndarray:
    return np.geomspace(lowest, 1.0, num)


@dataclass(frozen=True)
class KernelCurve:
    """A per-kernel quantity as a function of `a` with `b` fixed."""

    kind: KernelKind
    quantity: str
    a_grid: np.ndarray
    values: np.ndarray
    b: float = 1.0


def _curve(kind: KernelKind, a_grid: ArrayLike, quantity: str) -> KernelCurve:
    a_grid = np.asarray(a_grid, dtype=np.float64)
    if a_grid.ndim != 1 or np.any(a_grid <= 0.0) or np.any(a_grid > 1.0):
        raise DomainError("a-grid values must lie in (0, 1]")
    if np.any(np.diff(a_grid) <= 0.0):
        raise DomainError("a-grid must be strictly ascending")

    kernel = get_kernel(kind)
    ones = np.ones_like(a_grid)
    values = kernel.bias(a_grid, ones) if quantity == "bias" else kernel.integral(a_grid, ones)
    return KernelCurve(kind, quantity, a_grid, np.asarray(values, dtype=np.float64))


def bias_curve(kind: KernelKind, a_grid: ArrayLike) -> KernelCurve:
    return _curve(kind, a_grid, "bias")


def integral_curve(kind: KernelKind, a_grid: ArrayLike) -> KernelCurve:
    return _curve(kind, a_grid, "integral")


def trial_seeds(seed: int, trial: int) -> tuple[int, int]:
    """Independent (coarse, fine) seeds for one trial, shared by every kernel."""
    coarse, fine = np.random.SeedSequence([seed, trial]).generate_state(2)
    return int(coarse), int(fine)


@dataclass(frozen=True)
class TrialSettings:
    n_coarse: int = 64
    n_fine: int = 128
    n_trials: int = 1000
    seed: int = 0
    maxblur: bool = True
    blur_floor: float = BLUR_FLOOR
    jitter: bool = False
    mode: SampleMode = SampleMode.Stratified

    def __post_init__(self):
        if self.n_coarse < 2:
            raise DomainError("n_coarse must be at least 2")
        if self.n_fine < 1 or self.n_trials < 1:
            raise DomainError("n_fine and n_trials must be positive")


def _fine_stage(scene: DensityScene, kind: KernelKind, settings: TrialSettings, trial: int):
    coarse_seed, fine_seed = trial_seeds(settings.seed, trial)
    weights = scene.coarse_stage(settings.n_coarse, settings.jitter, np.random.default_rng(coarse_seed))
    batch = importance_sample(
        weights, kind, settings.n_fine, settings.mode, fine_seed,
        blur=settings.maxblur, blur_floor=settings.blur_floor,
    )
    return weights, batch


@dataclass(frozen=True)
class ConcentrationReport:
    kind: KernelKind
    n_samples: int
    mean_distance: float
    frequencies: np.ndarray
    seed: int
    fallback: bool
    trial_distances: np.ndarray


def concentration(scene: DensityScene, kind: KernelKind, settings: TrialSettings = TrialSettings()) -> ConcentrationReport:
    """Mean sample-to-surface distance and per-interval hit frequencies over trials."""

    n_intervals = settings.n_coarse - 1
    counts = np.zeros(n_intervals, dtype=np.int64)
    distances = np.empty(settings.n_trials)
    fallback = False

    for trial in range(settings.n_trials):
        weights, batch = _fine_stage(scene, kind, settings, trial)
        fallback |= batch.fallback

        distances[trial] = np.mean(scene.nearest_surface_distance(batch.positions))
        hit = np.clip(np.searchsorted(weights.t, batch.positions, side="right") - 1, 0, n_intervals - 1)
        counts += np.bincount(hit, minlength=n_intervals)

    if fallback:
        logger.warning(f"{kind.value}: some trials fell back to uniform sampling")

    logger.debug(f"{kind.value}: mean distance {distances.mean():.6g} over {settings.n_trials} trials")
    return ConcentrationReport(
        kind=kind,
        n_samples=int(counts.sum()),
        mean_distance=float(distances.mean()),
        frequencies=counts / counts.sum(),
        seed=settings.seed,
        fallback=bool(fallback),
        trial_distances=distances,
    )


@dataclass(frozen=True)
class RenderErrorReport:
    kind: KernelKind
    reference: float
    mean_error: float
    std_error: float
    fallback: bool
    trial_errors: np.ndarray


def render_error(scene: DensityScene, kind: KernelKind, settings: TrialSettings = TrialSettings(), reference: float | None = None) -> RenderErrorReport:
    """Absolute error of the fine-sample color estimate against the reference, per trial."""

    if settings.n_fine < 2:
        raise DomainError("rendering needs n_fine of at least 2")

    reference = scene.render_reference() if reference is None else reference
    errors = np.empty(settings.n_trials)
    fallback = False

    for trial in range(settings.n_trials):
        _, batch = _fine_stage(scene, kind, settings, trial)
        fallback |= batch.fallback
        errors[trial] = abs(scene.render_with_samples(batch) - reference)

    logger.debug(f"{kind.value}: mean render error {errors.mean():.6g}")
    return RenderErrorReport(
        kind=kind,
        reference=reference,
        mean_error=float(errors.mean()),
        std_error=float(errors.std(ddof=1)) if len(errors) > 1 else 0.0,
        fallback=bool(fallback),
        trial_errors=errors,
    )


def paired_sign_test(x: ArrayLike, y: ArrayLike) -> float:
    """One-sided p-value for x < y in paired observations; ties are dropped."""

    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DomainError("paired samples must have the same shape")

    wins = int(np.sum(x < y))
    n = int(np.sum(x != y))
    if n == 0:
        return 1.0
    return float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue)


def classical_hvs(t: ArrayLike, w: ArrayLike, u: ArrayLike) -> np.ndarray:
    """Piecewise-uniform inversion of the classical hierarchical sampler.

    Interval probabilities are the mean of the (clamped) endpoint weights times the
    interval length, so this matches the constant kernel exactly.
    """

    t = np.asarray(t, dtype=np.float64)
    w = np.maximum(np.asarray(w, dtype=np.float64), WEIGHT_FLOOR)
    u = np.asarray(u, dtype=np.float64)

    p = np.diff(t) * (w[:-1] + w[1:]) / 2.0
    cdf = np.concatenate(([0.0], np.cumsum(p / p.sum())))

    inds = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(p) - 1)
    denom = cdf[inds + 1] - cdf[inds]
    frac = np.clip((u - cdf[inds]) / denom, 0.0, 1.0)
    return t[inds] + frac * (t[inds + 1] - t[inds])

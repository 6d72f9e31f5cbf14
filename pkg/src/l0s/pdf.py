"""Piecewise densities along a ray and inverse transform sampling from them."""

from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike

from l0s.core import BLUR_FLOOR, LAST_DELTA, DomainError, KernelKind, SampleMode
from l0s.kernels import clamp_weights, get_kernel


@dataclass(frozen=True)
class RayWeights:
    """Knot positions along a ray with their non-negative weights."""

    t: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        w = np.asarray(self.w, dtype=np.float64)

        if t.ndim != 1 or t.shape != w.shape:
            raise DomainError("knots and weights must be 1D arrays of equal length")
        if len(t) < 2:
            raise DomainError("a ray needs at least two knots")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0.0):
            raise DomainError("knot positions must be finite and strictly increasing")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise DomainError("weights must be finite and non-negative")

        object.__setattr__(self, "t", t)
        object.__setattr__(self, "w", w)

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def is_empty(self) -> bool:
        return not np.any(self.w > 0.0)


def compute_weights(sigma: ArrayLike, t: ArrayLike) -> RayWeights:
    """Weights w_i = alpha_i prod_{j<i} (1 - alpha_j) from per-knot densities.

    The last knot gets the `LAST_DELTA` interval so a positive density there absorbs all
    remaining transmittance.
    """

    sigma = np.asarray(sigma, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)

    if sigma.shape != t.shape:
        raise DomainError("one density value is needed per knot")
    if not np.all(np.isfinite(sigma)) or np.any(sigma < 0.0):
        raise DomainError("densities must be finite and non-negative")
    if len(t) < 2 or np.any(np.diff(t) <= 0.0):
        raise DomainError("knot positions must be strictly increasing, at least two")

    delta = np.append(np.diff(t), LAST_DELTA)
    tau = sigma * delta
    alpha = -np.expm1(-tau)
    # Transmittance in log space: exp(-sum of previous optical depths)
    trans = np.exp(-np.concatenate(([0.0], np.cumsum(tau[:-1]))))

    return RayWeights(t, alpha * trans)


def maxblur(weights: RayWeights, floor: float = BLUR_FLOOR) -> RayWeights:
    """w'_i = (max(w_{i-1}, w_i) + max(w_i, w_{i+1})) / 2 + floor, zero padded."""

    padded = np.concatenate(([0.0], weights.w, [0.0]))
    pair_max = np.maximum(padded[:-1], padded[1:])
    blurred = 0.5 * (pair_max[:-1] + pair_max[1:]) + floor

    return RayWeights(weights.t, blurred)


@dataclass(frozen=True)
class RayPdf:
    """Assembled piecewise density along one ray.

    `a` and `b` are the clamped endpoint weights of each interval, `interval_mass` already
    carries the interval length factor.
    """

    kind: KernelKind
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    interval_mass: np.ndarray
    cum_mass: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.cum_mass[-1])

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def fractions(self) -> np.ndarray:
        return self.interval_mass / self.total_mass

    def cdf(self, positions: ArrayLike) -> np.ndarray:
        """Normalized CDF at `positions`, clipped to the ray extent."""

        x = np.clip(np.asarray(positions, dtype=np.float64), self.t[0], self.t[-1])
        idx = np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, len(self.t) - 2)
        delta = self.deltas[idx]
        s = np.clip((x - self.t[idx]) / delta, 0.0, 1.0)

        if self.kind.has_density:
            inner = delta * get_kernel(self.kind).partial_integral(self.a[idx], self.b[idx], s)
        else:
            inner = self.interval_mass[idx] * s

        return np.clip((self.cum_mass[idx] + inner) / self.total_mass, 0.0, 1.0)

    def quantile(self, u: ArrayLike) -> np.ndarray:
        """Positions whose CDF equals `u`, for u in [0, 1]."""

        u = np.asarray(u, dtype=np.float64)
        r = u * self.total_mass

        # First interval whose upper cumulative mass exceeds r; zero-mass ones never match
        idx = np.searchsorted(self.cum_mass[1:], r, side="right")
        last = np.flatnonzero(self.interval_mass > 0.0)[-1]
        idx = np.minimum(idx, last)

        mass = self.interval_mass[idx]
        residual = np.clip(r - self.cum_mass[idx], 0.0, mass)
        delta = self.deltas[idx]

        if self.kind.has_density:
            x = get_kernel(self.kind).icdf(self.a[idx], self.b[idx], residual / delta)
        else:
            x = residual / mass

        return np.clip(self.t[idx] + x * delta, self.t[0], self.t[-1])


def build_pdf(weights: RayWeights, kind: KernelKind) -> RayPdf:
    """Interval masses (t_{i+1} - t_i) * integral(kernel(w_i, w_{i+1})) and their prefix sums."""

    t = weights.t
    delta = np.diff(t)
    if not np.any(delta > 0.0):
        raise DomainError("degenerate ray: every interval has zero length")

    w = clamp_weights(weights.w)
    a, b = w[:-1], w[1:]

    if kind.has_density:
        mass = delta * get_kernel(kind).integral(a, b)
    else:
        # Lowest index wins ties; the interval to its right unless it is the last knot
        peak = int(np.argmax(weights.w))
        mass = np.zeros_like(delta)
        mass[min(peak, len(delta) - 1)] = 1.0

    cum = np.concatenate(([0.0], np.cumsum(mass)))
    return RayPdf(kind, t, a, b, mass, cum)


@dataclass(frozen=True)
class SampleBatch:
    """Sorted fine-sample positions with the record needed to reproduce them.

    `fallback` is set when the source density carried no mass and the positions are
    uniform over the ray extent instead.
    """

    positions: np.ndarray
    mode: SampleMode
    seed: int | None
    fallback: bool = field(default=False)

    def __len__(self) -> int:
        return len(self.positions)


def draw_uniforms(count: int, mode: SampleMode, rng: np.random.Generator) -> np.ndarray:
    match mode:
        case SampleMode.Stratified:
            return (np.arange(count) + rng.random(count)) / count
        case SampleMode.Independent:
            return rng.random(count)
        case SampleMode.Deterministic:
            return np.linspace(0.0, 1.0, count)
        case _:
            raise DomainError(f"unknown sample mode {mode}")


def uniform_batch(t_near: float, t_far: float, count: int, mode: SampleMode, seed: int | None) -> SampleBatch:
    rng = np.random.default_rng(seed)
    u = draw_uniforms(count, mode, rng)
    return SampleBatch(np.sort(t_near + u * (t_far - t_near)), mode, seed, fallback=True)


def sample(pdf: RayPdf, count: int, mode: SampleMode = SampleMode.Stratified, seed: int | None = 0) -> SampleBatch:
    """Draw `count` fine samples from `pdf` by inverse transform sampling."""

    if count < 1:
        raise DomainError("sample count must be at least 1")

    if not (np.isfinite(pdf.total_mass) and pdf.total_mass > 0.0):
        logger.warning("Ray carries no mass, sampling uniformly over its extent")
        return uniform_batch(pdf.t[0], pdf.t[-1], count, mode, seed)

    rng = np.random.default_rng(seed)
    u = draw_uniforms(count, mode, rng)

    return SampleBatch(np.sort(pdf.quantile(u)), mode, seed)


def importance_sample(
        weights: RayWeights,
        kind: KernelKind,
        count: int,
        mode: SampleMode = SampleMode.Stratified,
        seed: int | None = 0,
        blur: bool = True,
        blur_floor: float = BLUR_FLOOR,
) -> SampleBatch:
    """Full fine stage: optional maxblur of the coarse weights, then build and sample."""

    if weights.is_empty:
        logger.debug("All coarse weights are zero, falling back to uniform samples")
        return uniform_batch(weights.t[0], weights.t[-1], count, mode, seed)

    if blur:
        weights = maxblur(weights, floor=blur_floor)

    return sample(build_pdf(weights, kind), count, mode, seed)

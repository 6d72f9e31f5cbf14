"""Analytic 1D density fields standing in for a trained density network.

A scene is one ray: a density profile over `[t_near, t_far]` plus a scalar color that
ramps linearly between the two ends. Transmittance is closed form for every profile
(boxes directly, Gaussian bumps through `erf`), and the reference color is either closed
form (boxes) or adaptive quadrature.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate, optimize, special

from l0s.core import DomainError
from l0s.pdf import RayWeights, SampleBatch, compute_weights

QUAD_TOLERANCE = 1e-10

# Positions may overshoot the extent by rounding only
_EXTENT_SLACK = 1e-12


class Profile(ABC):
    """Density profile along the ray."""

    @abstractmethod
    def density(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    @abstractmethod
    def optical_depth(self, t0: float, t: np.ndarray) -> np.ndarray:
        """Integral of the density over [t0, t]."""
        raise NotImplementedError()

    @property
    @abstractmethod
    def surfaces(self) -> tuple[float, ...]:
        raise NotImplementedError()

    def breakpoints(self) -> tuple[float, ...]:
        """Positions quadrature should split at."""
        return self.surfaces


@dataclass(frozen=True)
class GaussianBump(Profile):
    center: float
    width: float
    peak: float

    def __post_init__(self):
        if not self.width > 0.0:
            raise DomainError("bump width must be positive")
        if not self.peak >= 0.0:
            raise DomainError("bump peak must be non-negative")

    def density(self, t):
        z = (np.asarray(t, dtype=np.float64) - self.center) / self.width
        return self.peak * np.exp(-0.5 * z * z)

    def optical_depth(self, t0, t):
        scale = self.width * math.sqrt(2.0)
        lo = special.erf((t0 - self.center) / scale)
        hi = special.erf((np.asarray(t, dtype=np.float64) - self.center) / scale)
        return self.peak * self.width * math.sqrt(math.pi / 2.0) * (hi - lo)

    @property
    def surfaces(self):
        return (self.center,) if self.peak > 0.0 else ()

    @property
    def total_depth(self) -> float:
        return self.peak * self.width * math.sqrt(2.0 * math.pi)

    def weight_peak(self) -> float:
        """Location of the maximum of sigma * T for this bump alone.

        It solves sigma' = sigma^2, which puts it in front of the center by x with
        x = peak * width^2 * exp(-x^2 / (2 width^2)).
        """

        if self.peak == 0.0:
            return self.center

        def gap(x):
            return x - self.peak * self.width ** 2 * math.exp(-0.5 * (x / self.width) ** 2)

        upper = self.peak * self.width ** 2
        if upper == 0.0:
            return self.center
        return self.center - optimize.brentq(gap, 0.0, upper, xtol=1e-14)


@dataclass(frozen=True)
class Box(Profile):
    """Constant density `level` on [entry, exit], zero elsewhere."""

    entry: float
    exit: float
    level: float

    def __post_init__(self):
        if not self.entry < self.exit:
            raise DomainError("box entry must precede its exit")
        if not self.level >= 0.0:
            raise DomainError("box level must be non-negative")

    def density(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where((t >= self.entry) & (t <= self.exit), self.level, 0.0)

    def _covered(self, t):
        return np.clip(t, self.entry, self.exit) - self.entry

    def optical_depth(self, t0, t):
        t = np.asarray(t, dtype=np.float64)
        return self.level * (self._covered(t) - self._covered(t0))

    @property
    def surfaces(self):
        return (self.entry,) if self.level > 0.0 else ()

    def breakpoints(self):
        return (self.entry, self.exit)


@dataclass(frozen=True)
class MultiSurface(Profile):
    bumps: tuple[GaussianBump, ...]

    def __post_init__(self):
        if not self.bumps:
            raise DomainError("a multi-surface profile needs at least one bump")

    def density(self, t):
        return sum(bump.density(t) for bump in self.bumps)

    def optical_depth(self, t0, t):
        return sum(bump.optical_depth(t0, t) for bump in self.bumps)

    @property
    def surfaces(self):
        return tuple(sorted(s for bump in self.bumps for s in bump.surfaces))


@dataclass(frozen=True)
class DensityScene:
    profile: Profile
    t_near: float = 0.0
    t_far: float = 4.0
    color_near: float = 1.0
    color_far: float = 1.0

    def __post_init__(self):
        if not self.t_near < self.t_far:
            raise DomainError("ray extent must satisfy t_near < t_far")
        for c in (self.color_near, self.color_far):
            if not 0.0 <= c <= 1.0:
                raise DomainError("colors must lie in [0, 1]")
        for s in self.profile.breakpoints():
            if not self.t_near < s < self.t_far:
                raise DomainError(f"surface at {s} lies outside the ray extent")

    @property
    def surfaces(self) -> tuple[float, ...]:
        return self.profile.surfaces

    @property
    def length(self) -> float:
        return self.t_far - self.t_near

    def _check(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        lo, hi = self.t_near - _EXTENT_SLACK, self.t_far + _EXTENT_SLACK
        if not np.all(np.isfinite(t)) or np.any(t < lo) or np.any(t > hi):
            raise DomainError(f"position outside the ray extent [{self.t_near}, {self.t_far}]")
        return t

    def color(self, t: ArrayLike) -> np.ndarray:
        frac = (np.asarray(t, dtype=np.float64) - self.t_near) / self.length
        return self.color_near + (self.color_far - self.color_near) * frac

    def density(self, t: ArrayLike):
        out = self.profile.density(self._check(t))
        return float(out) if np.ndim(out) == 0 else out

    def transmittance(self, t: ArrayLike):
        depth = self.profile.optical_depth(self.t_near, self._check(t))
        out = np.exp(-np.maximum(depth, 0.0))
        return float(out) if np.ndim(out) == 0 else out

    def weight(self, t: ArrayLike):
        """Continuous weight function sigma(t) T(t)."""
        t = self._check(t)
        out = self.profile.density(t) * np.exp(-np.maximum(self.profile.optical_depth(self.t_near, t), 0.0))
        return float(out) if np.ndim(out) == 0 else out

    def nearest_surface_distance(self, positions: ArrayLike) -> np.ndarray:
        """Distance to the closest surface, or to the extent midpoint for empty scenes."""
        positions = np.asarray(positions, dtype=np.float64)
        targets = np.asarray(self.surfaces or ((self.t_near + self.t_far) / 2.0,))
        return np.min(np.abs(positions[:, None] - targets[None, :]), axis=1)

    def render_reference(self) -> float:
        """Ground-truth color: integral of sigma T c over the extent."""

        if isinstance(self.profile, Box):
            return self._render_box(self.profile)

        value, _ = integrate.quad(
            lambda t: float(self.weight(t) * self.color(t)),
            self.t_near,
            self.t_far,
            points=self.profile.breakpoints(),
            epsabs=QUAD_TOLERANCE,
            epsrel=QUAD_TOLERANCE,
            limit=500,
        )
        return value

    def _render_box(self, box: Box) -> float:
        rho = box.level
        if rho == 0.0:
            return 0.0

        length = box.exit - box.entry
        absorbed = -math.expm1(-rho * length)
        slope = (self.color_far - self.color_near) / self.length
        # integral of rho e^{-rho u} (c(entry) + slope u) over [0, length]
        tail = (absorbed - rho * length * math.exp(-rho * length)) / rho
        return float(self.color(box.entry)) * absorbed + slope * tail

    def render_with_samples(self, samples: SampleBatch | ArrayLike) -> float:
        """Discrete color estimate from sorted fine samples.

        The last spacing is closed at `t_far` so the estimate covers the same range as
        the reference integral.
        """

        positions = samples.positions if isinstance(samples, SampleBatch) else samples
        positions = self._check(positions)
        if len(positions) < 2:
            raise DomainError("rendering needs at least two samples")

        knots = np.unique(np.append(positions, self.t_far))
        sigma = self.profile.density(knots)
        sigma[-1] = 0.0

        weights = compute_weights(sigma, knots)
        return float(np.sum(weights.w * self.color(knots)))

    def coarse_stage(self, n_coarse: int, jitter: bool = False, rng: np.random.Generator | None = None) -> RayWeights:
        """Uniform knots (optionally jittered within their strata) and exact-density weights."""

        if n_coarse < 2:
            raise DomainError("the coarse stage needs at least two knots")

        t = np.linspace(self.t_near, self.t_far, n_coarse)
        if jitter:
            rng = rng if rng is not None else np.random.default_rng()
            mids = 0.5 * (t[1:] + t[:-1])
            upper = np.concatenate((mids, t[-1:]))
            lower = np.concatenate((t[:1], mids))
            t = lower + (upper - lower) * rng.random(n_coarse)

        return compute_weights(self.profile.density(t), t)


CATALOG: dict[str, DensityScene] = {
    "sharp-bump": DensityScene(GaussianBump(center=2.0, width=0.02, peak=100.0), color_near=0.2, color_far=0.9),
    "wide-bump": DensityScene(GaussianBump(center=2.0, width=0.3, peak=2.0), color_near=0.2, color_far=0.9),
    "two-surface": DensityScene(
        MultiSurface((GaussianBump(center=1.2, width=0.03, peak=15.0), GaussianBump(center=2.8, width=0.03, peak=60.0))),
        color_near=0.2,
        color_far=0.9,
    ),
    "box": DensityScene(Box(entry=1.0, exit=2.0, level=5.0)),
    "empty": DensityScene(Box(entry=1.0, exit=2.0, level=0.0)),
}


def get_scene(name: str) -> DensityScene:
    try:
        return CATALOG[name]
    except KeyError:
        raise DomainError(f"unknown scene '{name}' (expected one of: {', '.join(CATALOG)})") from None

"""Per-interval interpolation kernels on the unit interval.

A kernel interpolates the endpoint weights `a = w(0)` and `b = w(1)` of one coarse
interval. Every method broadcasts over numpy arrays so a whole ray, or a whole batch of
samples, goes through a single call. Closed forms are evaluated in their cancellation
free shapes (`exprel`, `log1p`, short series near `a = b`).
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import exprel

from l0s.core import DEGENERACY_THRESHOLD, WEIGHT_FLOOR, DomainError, KernelKind

# Allowed relative excess of a residual over the interval mass before icdf rejects it
RESIDUAL_TOLERANCE = 1e-9

_SERIES_CUTOFF = 1e-3


def clamp_weights(w: ArrayLike) -> np.ndarray:
    return np.maximum(np.asarray(w, dtype=np.float64), WEIGHT_FLOOR)


def log_ratio(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    return np.log(b) - np.log(a)


def _degenerate(a, b) -> np.ndarray:
    return np.abs(log_ratio(a, b)) < DEGENERACY_THRESHOLD


def _log1p_ratio(y) -> np.ndarray:
    """log1p(y) / y, continuous through y = 0."""
    y = np.asarray(y, dtype=np.float64)
    small = np.abs(y) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, y)
    series = 1.0 - y / 2.0 + y * y / 3.0 - y ** 3 / 4.0
    return np.where(small, series, np.log1p(safe) / safe)


def _exp_barycenter(c) -> np.ndarray:
    """Barycenter of exp(c s) on [0, 1]: 1 / (1 - exp(-c)) - 1 / c."""
    c = np.asarray(c, dtype=np.float64)
    small = np.abs(c) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, c)
    series = 0.5 + c / 12.0 - c ** 3 / 720.0
    return np.where(small, series, -1.0 / np.expm1(-safe) - 1.0 / safe)


def _check_endpoints(a: ArrayLike, b: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("kernel endpoint weights must be finite")
    if np.any(a < 0.0) or np.any(b < 0.0):
        raise DomainError("kernel endpoint weights must be non-negative")
    return a, b


def _check_fraction(s: ArrayLike) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        raise DomainError("position inside the unit interval must lie in [0, 1]")
    return s


def _check_residual(r: ArrayLike, total: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    slack = RESIDUAL_TOLERANCE * total
    if not np.all(np.isfinite(r)) or np.any(r < -slack) or np.any(r > total + slack):
        raise DomainError("residual mass must lie in [0, integral]")
    return np.clip(r, 0.0, total)


def _unwrap(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


class Kernel(ABC):
    """Interpolation family on [0, 1] with endpoint weights `a` and `b`.

    Arguments `a` and `b` are expected clamped (strictly positive, finite). Public methods
    validate positions and residuals and delegate to the underscore closed forms.
    """

    kind: KernelKind

    @abstractmethod
    def _eval(self, a, b, s) -> np.ndarray:
        raise NotImplementedError()

    @abstractmethod
    def _integral(self, a, b) -> np.ndarray:
        raise NotImplementedError()

    @abstractmethod
    def _partial(self, a, b, x) -> np.ndarray:
        raise NotImplementedError()

    @abstractmethod
    def _icdf(self, a, b, r) -> np.ndarray:
        raise NotImplementedError()

    @abstractmethod
    def _bias(self, a, b) -> np.ndarray:
        raise NotImplementedError()

    def eval(self, a, b, s) -> np.ndarray:
        a, b = _check_endpoints(a, b)
        return self._eval(a, b, _check_fraction(s))

    def integral(self, a, b) -> np.ndarray:
        return self._integral(*_check_endpoints(a, b))

    def partial_integral(self, a, b, x) -> np.ndarray:
        """Mass on [0, x]; the unnormalized CDF of the kernel."""
        a, b = _check_endpoints(a, b)
        return self._partial(a, b, _check_fraction(x))

    def icdf(self, a, b, r) -> np.ndarray:
        """Fraction x in [0, 1] holding mass `r` to its left."""
        a, b = _check_endpoints(a, b)
        r = _check_residual(r, self._integral(a, b))
        return np.clip(self._icdf(a, b, r), 0.0, 1.0)

    def bias(self, a, b) -> np.ndarray:
        """Barycenter of the area under the kernel."""
        return self._bias(*_check_endpoints(a, b))


class ConstantKernel(Kernel):
    """Flat level (a + b) / 2, the classical hierarchical sampler."""

    kind = KernelKind.Constant

    def _eval(self, a, b, s):
        return (a + b) / 2.0 + np.zeros_like(s)

    def _integral(self, a, b):
        return (a + b) / 2.0

    def _partial(self, a, b, x):
        return (a + b) / 2.0 * x

    def _icdf(self, a, b, r):
        return r / ((a + b) / 2.0)

    def _bias(self, a, b):
        return np.full(np.broadcast(a, b).shape, 0.5)


class LinearKernel(Kernel):
    kind = KernelKind.Linear

    def _eval(self, a, b, s):
        return (1.0 - s) * a + s * b

    def _integral(self, a, b):
        return (a + b) / 2.0

    def _partial(self, a, b, x):
        return a * x + (b - a) * x * x / 2.0

    def _icdf(self, a, b, r):
        # Root of (b - a) x^2 / 2 + a x - r in the form that avoids cancellation
        disc = np.maximum(a * a + 2.0 * (b - a) * r, 0.0)
        return 2.0 * r / (a + np.sqrt(disc))

    def _bias(self, a, b):
        return (a + 2.0 * b) / (3.0 * (a + b))


class ExponentialKernel(Kernel):
    """a (b / a)^s; its integral is the logarithmic mean of a and b."""

    kind = KernelKind.Exponential

    def _eval(self, a, b, s):
        return a ** (1.0 - s) * b ** s

    def _integral(self, a, b):
        d = log_ratio(a, b)
        return np.where(_degenerate(a, b), a, a * exprel(d))

    def _partial(self, a, b, x):
        d = log_ratio(a, b)
        return np.where(_degenerate(a, b), a * x, a * x * exprel(d * x))

    def _icdf(self, a, b, r):
        d = log_ratio(a, b)
        return np.where(_degenerate(a, b), r / a, r / a * _log1p_ratio(r * d / a))

    def _bias(self, a, b):
        return np.where(_degenerate(a, b), 0.5, _exp_barycenter(log_ratio(a, b)))


class InverseKernel(Kernel):
    """ab / ((1 - s) b + s a), a shifted and scaled 1 / s."""

    kind = KernelKind.Inverse

    def _eval(self, a, b, s):
        return a * b / ((1.0 - s) * b + s * a)

    def _integral(self, a, b):
        d = log_ratio(a, b)
        return np.where(_degenerate(a, b), a, b / exprel(d))

    def _partial(self, a, b, x):
        k = (a - b) / b
        return np.where(_degenerate(a, b), a * x, a * x * _log1p_ratio(k * x))

    def _icdf(self, a, b, r):
        q = r * (a - b) / (a * b)
        return np.where(_degenerate(a, b), r / a, r / a * exprel(q))

    def _bias(self, a, b):
        k = np.asarray((a - b) / b, dtype=np.float64)
        small = np.abs(k) < _SERIES_CUTOFF
        safe = np.where(small, 1.0, k)
        series = 0.5 - k / 12.0 + k * k / 24.0 - 19.0 * k ** 3 / 720.0
        exact = 1.0 / np.log1p(safe) - 1.0 / safe
        return np.where(_degenerate(a, b), 0.5, np.where(small, series, exact))


KERNELS: dict[KernelKind, Kernel] = {
    kernel.kind: kernel
    for kernel in (ConstantKernel(), LinearKernel(), ExponentialKernel(), InverseKernel())
}


def get_kernel(kind: KernelKind) -> Kernel:
    if not kind.has_density:
        raise DomainError(f"{kind.value} has no per-interval density")
    return KERNELS[kind]


@dataclass(frozen=True)
class UnitKernel:
    """One kernel with its (clamped) endpoint weights. Build with `make_kernel`."""

    kind: KernelKind
    a: float | np.ndarray
    b: float | np.ndarray

    def __post_init__(self):
        get_kernel(self.kind)
        _check_endpoints(self.a, self.b)

    @property
    def impl(self) -> Kernel:
        return get_kernel(self.kind)

    def eval(self, s: ArrayLike):
        return _unwrap(self.impl.eval(self.a, self.b, s))

    def integral(self):
        return _unwrap(self.impl.integral(self.a, self.b))

    def partial_integral(self, x: ArrayLike):
        return _unwrap(self.impl.partial_integral(self.a, self.b, x))

    def icdf(self, r: ArrayLike):
        return _unwrap(self.impl.icdf(self.a, self.b, r))

    def bias(self):
        return _unwrap(self.impl.bias(self.a, self.b))


def make_kernel(kind: KernelKind, a: ArrayLike, b: ArrayLike) -> UnitKernel:
    """Validate and clamp endpoint weights, then bind them to a kernel family."""

    a, b = _check_endpoints(a, b)
    return UnitKernel(kind, _unwrap(clamp_weights(a)), _unwrap(clamp_weights(b)))

"""Experiment configuration: JSON text in, validated `ExperimentConfig` out."""

import json
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any

from l0s.core import BLUR_FLOOR, ConfigError, DomainError, KernelKind, SampleMode
from l0s.metrics import TrialSettings
from l0s.scenes import CATALOG, Box, DensityScene, GaussianBump, MultiSurface, Profile


class ExperimentName(Enum):
    BiasCurves = "bias-curves"
    IntegralCurves = "integral-curves"
    Concentration = "concentration"
    Ablation = "ablation"
    DistributionAudit = "distribution-audit"
    HvsRegression = "hvs-regression"

    @property
    def is_curve(self) -> bool:
        return self in (ExperimentName.BiasCurves, ExperimentName.IntegralCurves)

    @property
    def renders(self) -> bool:
        return self is ExperimentName.Ablation


DEFAULT_SCENES = ["sharp-bump", "wide-bump", "two-surface"]
DEFAULT_KERNELS = ["constant", "linear", "exponential", "inverse"]


@dataclass
class ExperimentConfig:
    experiment: str = ExperimentName.BiasCurves.value
    scenes: list = field(default_factory=lambda: list(DEFAULT_SCENES))
    kernels: list[str] = field(default_factory=lambda: list(DEFAULT_KERNELS))
    n_coarse: int = 64
    n_fine: int = 128
    n_trials: int = 1000
    seed: int = 0
    maxblur: bool = True
    blur_floor: float = BLUR_FLOOR
    jitter: bool = False
    sample_mode: str = SampleMode.Stratified.value
    grid_points: int = 200
    grid_min: float = 1e-3
    audit_samples: int = 1_000_000
    audit_intervals: int = 16
    output: str = "results"
    record_timing: bool = False

    @property
    def name(self) -> ExperimentName:
        return ExperimentName(self.experiment)

    @property
    def kinds(self) -> list[KernelKind]:
        return [KernelKind.parse(k) for k in self.kernels]

    @property
    def settings(self) -> TrialSettings:
        return TrialSettings(
            n_coarse=self.n_coarse,
            n_fine=self.n_fine,
            n_trials=self.n_trials,
            seed=self.seed,
            maxblur=self.maxblur,
            blur_floor=self.blur_floor,
            jitter=self.jitter,
            mode=SampleMode(self.sample_mode),
        )

    def resolved_scenes(self) -> list[tuple[str, DensityScene]]:
        return [parse_scene(spec, f"scenes[{i}]") for i, spec in enumerate(self.scenes)]

    def to_dict(self) -> dict:
        return asdict(self)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return (isinstance(value, (int, float))) and not isinstance(value, bool)


def _number(spec: dict, key: str, path: str, positive: bool = False) -> float:
    if key not in spec:
        raise ConfigError.single(f"{path}.{key}", "missing")
    value = spec[key]
    if not _is_number(value):
        raise ConfigError.single(f"{path}.{key}", "must be a number")
    if positive and not value > 0:
        raise ConfigError.single(f"{path}.{key}", "must be > 0")
    return float(value)


def _bump(spec: Any, path: str) -> GaussianBump:
    if not isinstance(spec, dict):
        raise ConfigError.single(path, "must be an object")
    unknown = set(spec) - {"center", "width", "peak"}
    if unknown:
        raise ConfigError.single(path, f"unknown keys {sorted(unknown)}")
    peak = _number(spec, "peak", path)
    if peak < 0:
        raise ConfigError.single(f"{path}.peak", "must be >= 0")
    return GaussianBump(_number(spec, "center", path), _number(spec, "width", path, positive=True), peak)


def _profile(spec: dict, path: str) -> Profile:
    match spec.get("profile"):
        case "gaussian":
            return _bump({k: spec[k] for k in ("center", "width", "peak") if k in spec}, path)
        case "box":
            level = _number(spec, "level", path)
            if level < 0:
                raise ConfigError.single(f"{path}.level", "must be >= 0")
            entry, exit_ = _number(spec, "entry", path), _number(spec, "exit", path)
            if not entry < exit_:
                raise ConfigError.single(f"{path}.exit", "must be greater than entry")
            return Box(entry, exit_, level)
        case "multi":
            bumps = spec.get("bumps")
            if not isinstance(bumps, list) or not bumps:
                raise ConfigError.single(f"{path}.bumps", "must be a non-empty list")
            return MultiSurface(tuple(_bump(b, f"{path}.bumps[{i}]") for i, b in enumerate(bumps)))
        case None:
            raise ConfigError.single(f"{path}.profile", "missing")
        case other:
            raise ConfigError.single(f"{path}.profile", f"unknown profile '{other}' (expected gaussian, box or multi)")


_PROFILE_KEYS = {
    "gaussian": {"center", "width", "peak"},
    "box": {"entry", "exit", "level"},
    "multi": {"bumps"},
}


def parse_scene(spec: Any, path: str) -> tuple[str, DensityScene]:
    """Catalog name or scene object to a named scene."""

    if isinstance(spec, str):
        if spec not in CATALOG:
            raise ConfigError.single(path, f"unknown scene '{spec}' (expected one of: {', '.join(CATALOG)})")
        return spec, CATALOG[spec]

    if not isinstance(spec, dict):
        raise ConfigError.single(path, "must be a catalog name or a scene object")

    profile = _profile(spec, path)
    allowed = {"profile", "name", "extent", "color"} | _PROFILE_KEYS[spec["profile"]]
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError.single(path, f"unknown keys {sorted(unknown)}")

    extent = spec.get("extent", [0.0, 4.0])
    if not (isinstance(extent, list) and len(extent) == 2 and all(_is_number(v) for v in extent)):
        raise ConfigError.single(f"{path}.extent", "must be a pair of numbers [t_near, t_far]")

    color = spec.get("color", 1.0)
    colors = [color, color] if _is_number(color) else color
    if not (isinstance(colors, list) and len(colors) == 2 and all(_is_number(v) and 0 <= v <= 1 for v in colors)):
        raise ConfigError.single(f"{path}.color", "must be a number in [0, 1] or a pair of them")

    name = spec.get("name", path)
    if not isinstance(name, str):
        raise ConfigError.single(f"{path}.name", "must be a string")

    try:
        scene = DensityScene(profile, float(extent[0]), float(extent[1]), float(colors[0]), float(colors[1]))
    except DomainError as err:
        raise ConfigError.single(path, str(err)) from None

    return name, scene


def _check_fields(data: dict) -> list[tuple[str, str]]:
    issues = []

    def positive_int(key: str, minimum: int = 1):
        value = data[key]
        if not _is_int(value) or value < minimum:
            issues.append((key, f"must be an integer >= {minimum}"))

    for key in ("n_fine", "n_trials", "grid_points", "audit_samples", "audit_intervals"):
        positive_int(key)
    positive_int("n_coarse", 2)

    if not _is_int(data["seed"]) or data["seed"] < 0:
        issues.append(("seed", "must be a non-negative integer"))

    for key in ("maxblur", "jitter", "record_timing"):
        if not isinstance(data[key], bool):
            issues.append((key, "must be true or false"))

    if not _is_number(data["blur_floor"]) or data["blur_floor"] < 0:
        issues.append(("blur_floor", "must be a number >= 0"))
    if not _is_number(data["grid_min"]) or not 0 < data["grid_min"] < 1:
        issues.append(("grid_min", "must be a number in (0, 1)"))

    if data["sample_mode"] not in {m.value for m in SampleMode}:
        issues.append(("sample_mode", f"must be one of: {', '.join(m.value for m in SampleMode)}"))

    if not isinstance(data["output"], str) or not data["output"]:
        issues.append(("output", "must be a non-empty path"))

    try:
        experiment = ExperimentName(data["experiment"])
    except ValueError:
        experiment = None
        names = ", ".join(e.value for e in ExperimentName)
        issues.append(("experiment", f"unknown experiment '{data['experiment']}' (expected one of: {names})"))

    if experiment is not None and experiment.renders and _is_int(data["n_fine"]) and data["n_fine"] == 1:
        issues.append(("n_fine", "rendering needs at least 2 fine samples per ray"))

    kernels = data["kernels"]
    if not isinstance(kernels, list) or not kernels:
        issues.append(("kernels", "must be a non-empty list"))
    else:
        for i, name in enumerate(kernels):
            try:
                kind = KernelKind.parse(name)
            except DomainError as err:
                issues.append((f"kernels[{i}]", str(err)))
                continue
            if experiment is not None and experiment.is_curve and not kind.has_density:
                issues.append((f"kernels[{i}]", f"{name} has no per-interval density to draw a curve of"))
        if len(set(map(str, kernels))) != len(kernels):
            issues.append(("kernels", "must not repeat a kernel"))

    scenes = data["scenes"]
    if not isinstance(scenes, list) or not scenes:
        issues.append(("scenes", "must be a non-empty list"))
    else:
        names = []
        for i, spec in enumerate(scenes):
            try:
                names.append(parse_scene(spec, f"scenes[{i}]")[0])
            except ConfigError as err:
                issues.extend(err.issues)
        if len(set(names)) != len(names):
            issues.append(("scenes", "scene names must be unique"))

    return issues


def validate(config_text: str) -> ExperimentConfig:
    """Parse, default and range-check an experiment configuration."""

    try:
        data = json.loads(config_text)
    except json.JSONDecodeError as err:
        raise ConfigError.single("$", f"invalid JSON: {err}") from None

    if not isinstance(data, dict):
        raise ConfigError.single("$", "configuration must be a JSON object")

    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError([(key, "unknown key") for key in unknown])

    merged = ExperimentConfig().to_dict() | data
    issues = _check_fields(merged)
    if issues:
        raise ConfigError(issues)

    return ExperimentConfig(**merged)

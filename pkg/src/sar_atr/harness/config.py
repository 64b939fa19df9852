"""Experiment configuration and its flat ``key = value`` text format.

Keys carry a section prefix (``data.``, ``radar.``, ``imaging.``,
``train.``); a few experiment-wide keys have none.  ``#`` starts a comment.
Example::

    folds = 4
    schemes = BASIC, ADV
    data.num_targets = 40
    data.snr_db = 20
    train.epochs = 12
    imaging.N = 160
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..imaging import ImagingConfig
from ..rfsim import ConfigError, RadarConfig, default_aperture_arc

DEFAULT_ANGLE_BINS = (0.0, 36.0, 72.0, 108.0, 144.0, 180.0)
BIN_NAMES = ("front", "front/side", "broadside", "rear/side", "rear")


@dataclass(frozen=True)
class DataSpec:
    num_targets: int = 40
    images_per_target: int = 25
    snr_db: float = 20.0
    seed: int = 0
    altitude_min: float = 500.0
    altitude_max: float = 2000.0
    orbit_radius_min: float = 1000.0
    orbit_radius_max: float = 5000.0
    n_pulses: int = 64
    # degrees; 0 selects the arc matched to one-pixel cross-range resolution
    aperture_arc_deg: float = 0.0

    def __post_init__(self):
        if self.num_targets < 1 or self.images_per_target < 1:
            raise ConfigError("num_targets and images_per_target must be >= 1")
        if not (0 < self.altitude_min <= self.altitude_max):
            raise ConfigError("altitude range must be positive and ordered")
        if not (0 < self.orbit_radius_min <= self.orbit_radius_max):
            raise ConfigError("orbit radius range must be positive and ordered")

    def aperture_arc(self, radar: RadarConfig) -> float:
        if self.aperture_arc_deg > 0:
            return math.radians(self.aperture_arc_deg)
        return default_aperture_arc(radar)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 12
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    lambda_pose: float = 1.0
    lambda_sim: float = 1.0
    lambda_adv: float = 1.0
    # FGSM step as a fraction of the median per-component signal magnitude
    epsilon_frac: float = 0.05
    size_tol: float = 0.5
    pose_tol_deg: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if min(self.lambda_pose, self.lambda_sim, self.lambda_adv, self.epsilon_frac) < 0:
            raise ConfigError("loss weights and epsilon must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    radar: RadarConfig = field(default_factory=RadarConfig)
    imaging: ImagingConfig = field(default_factory=ImagingConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    schemes: tuple[str, ...] = ("BASIC",)
    folds: int = 4
    angle_bins: tuple[float, ...] = DEFAULT_ANGLE_BINS
    deepfool_max_iter: int = 50
    deepfool_overshoot: float = 0.02
    # cap on held-out images attacked per fold (0 = all)
    eval_limit: int = 0

    def __post_init__(self):
        from ..training import SCHEMES
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown schemes {bad}; choose from {', '.join(SCHEMES)}")
        edges = self.angle_bins
        if (len(edges) != 6 or edges[0] != 0.0 or edges[-1] != 180.0
                or any(b <= a for a, b in zip(edges, edges[1:]))):
            raise ConfigError("angle_bins must be 6 increasing edges from 0 to 180")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(
            self,
            data=dataclasses.replace(self.data, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
        )

    def to_text(self) -> str:
        lines = []
        for key, value in _flatten(self):
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"


_SECTIONS = {"data": DataSpec, "radar": RadarConfig, "imaging": ImagingConfig,
             "train": TrainSettings}


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _flatten(cfg: ExperimentConfig):
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for sub in dataclasses.fields(value):
                yield f"{f.name}.{sub.name}", getattr(value, sub.name)
        else:
            yield f.name, value


def _convert(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(s) for s in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    top: dict = {}
    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        prefix, _, name = key.partition(".")
        if name:
            if prefix not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section {prefix!r}")
            current = getattr(base, prefix)
            if name not in {f.name for f in dataclasses.fields(current)}:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            sections[prefix][name] = _convert(raw, getattr(current, name), key)
        else:
            if key in _SECTIONS or key not in {f.name for f in dataclasses.fields(base)}:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            top[key] = _convert(raw, getattr(base, key), key)
    if "schemes" in top:
        top["schemes"] = tuple(s.upper() for s in top["schemes"])
    for name, values in sections.items():
        if values:
            top[name] = dataclasses.replace(getattr(base, name), **values)
    return dataclasses.replace(base, **top)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text())

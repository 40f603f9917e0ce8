"""Run configuration: one nested structure, layered from YAML/JSON files and ``--set`` overrides."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..localizer import LocalizerConfig
from ..maintainer import MaintainerConfig
from ..placerec import ENCODERS
from ..scanmatch import DETECTORS, MatcherConfig, ProjectionConfig
from .sensors import NOISE_LEVELS, NoiseModel, SensorConfig
from .synth import SynthParams

EXTERNAL = "external"


@dataclass(frozen=True)
class LocalizerSection:
    k: int = 5
    detector: str = "orb"
    stride: int = 1
    workers: int = 1
    # "lazy": localise only when a frame reaches the loop-closure case; "eager": every stride frames
    mode: str = "lazy"


@dataclass(frozen=True)
class MaintainerSection:
    location_radius: float = 6.0
    stay_threshold: float = 0.2
    loop_threshold: float = 0.2
    overlap_tolerance: int = 2
    max_step: float = 2.0
    edge_detector: str = "harris"
    max_staleness: int = 1


@dataclass(frozen=True)
class EvalSection:
    n_pairs: int = 100
    min_separation: float = 5.0
    footprint_radius: float = 18.0


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    step_log: bool = True
    localizer_debug: bool = False
    figures: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # "polar-hist", "external", or "external+polar-hist" (external part first)
    encoder: str = "polar-hist"
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    localizer: LocalizerSection = field(default_factory=LocalizerSection)
    maintainer: MaintainerSection = field(default_factory=MaintainerSection)
    noise: NoiseModel = field(default_factory=NoiseModel)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    synth: SynthParams = field(default_factory=SynthParams)
    evaluation: EvalSection = field(default_factory=EvalSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "RunConfig":
        parts = self.encoder.split("+")
        if parts[-1] == EXTERNAL and len(parts) == 1:
            pass
        elif len(parts) > 2 or parts[-1] not in ENCODERS or (len(parts) == 2 and parts[0] != EXTERNAL):
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        for tag in (self.localizer.detector, self.maintainer.edge_detector):
            if tag not in DETECTORS:
                raise ConfigError(f"unknown detector {tag!r}")
        if self.localizer.mode not in ("lazy", "eager"):
            raise ConfigError(f"unknown localizer mode {self.localizer.mode!r}")
        try:
            self.localizer_config()
            self.maintainer_config()
            self.synth.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def localizer_config(self) -> LocalizerConfig:
        s = self.localizer
        return LocalizerConfig(s.k, s.detector, s.stride, s.workers, self.matcher)

    def maintainer_config(self) -> MaintainerConfig:
        return MaintainerConfig(**dataclasses.asdict(self.maintainer), matcher=self.matcher,
                                projection=self.projection)

    def with_seed(self, seed: int) -> "RunConfig":
        """Same configuration with every random stream keyed to ``seed``."""
        return replace(self, seed=seed, noise=replace(self.noise, seed=seed), sensor=replace(self.sensor, seed=seed))

    def with_noise_level(self, level: str) -> "RunConfig":
        if level not in NOISE_LEVELS:
            raise ConfigError(f"unknown noise level {level!r}; choose from {sorted(NOISE_LEVELS)}")
        base = NOISE_LEVELS[level]
        return replace(self, noise=replace(base, seed=self.noise.seed, cadence=self.noise.cadence))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return _build(tp, value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        args = typing.get_args(tp)
        inner = args[0] if args else float
        return tuple(_coerce(inner, v, where) for v in value)
    if tp is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{where}: expected a boolean, got {value!r}")
    if tp is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: expected an integer, got {value!r}") from exc
    if tp is float:
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: expected a number, got {value!r}") from exc
    if tp is str:
        return str(value)
    return value


def _build(cls, data: dict, where: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where or 'config'}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(hints[f.name], data[f.name], f"{where}.{f.name}".lstrip("."))
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _read(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def parse_override(text: str) -> dict:
    """``a.b.c=value`` to a nested dict; the value is parsed as YAML (numbers, booleans, lists)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r}: {exc}") from exc
    out: dict = {}
    node = out
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def load_config(paths=(), overrides=(), base: dict | None = None) -> RunConfig:
    """Defaults, then each file in order, then each ``key=value`` override."""
    data = dict(base or {})
    for p in paths:
        data = _merge(data, _read(p))
    for o in overrides:
        data = _merge(data, parse_override(o))
    return _build(RunConfig, data).validate()


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(json.loads(json.dumps(cfg.to_dict())), sort_keys=True)

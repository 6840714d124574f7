"""One run configuration shared by every CLI subcommand.

Documents are YAML (JSON is accepted as a subset).  Every section maps onto
a frozen dataclass; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

import numpy as np
import yaml

from .cascade import CascadeModel, ExcitationConfig
from .correlate import BinningSpec
from .detectors import DetectorChannel, default_channels
from .errors import ConfigError
from .levels import FineStructureParams


@dataclass(frozen=True)
class AnalysisConfig:
    binning: BinningSpec = field(default_factory=BinningSpec)
    # tau2 axis of g3; the tau1 axis reuses ``binning``
    g3_binning: BinningSpec = field(default_factory=BinningSpec)
    count_window_ps: int = 10_000
    channels: tuple = (0, 1, 2)
    threads: int = 1


@dataclass(frozen=True)
class SimulationConfig:
    method: str = "sampled"
    min_detections: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.method not in ("sampled", "full"):
            raise ConfigError("simulation.method must be 'sampled' or 'full'")
        if self.method == "full" and self.min_detections != 1:
            raise ConfigError("min_detections applies to the sampled method only")


@dataclass(frozen=True)
class SpectrumConfig:
    broadening_ueV: float = 15.0
    e_min_meV: float = 1345.7
    e_max_meV: float = 1346.9
    n_points: int = 2401
    profile: str = "lorentzian"
    include_direct: bool = False


@dataclass(frozen=True)
class RabiConfig:
    powers_uW: tuple = tuple(float(p) for p in np.round(np.linspace(0.0, 90.0, 46), 6))
    cycles_per_point: int = 10_000
    accepted_lines: tuple = ("XXX_i",)


@dataclass(frozen=True)
class RunConfig:
    levels: FineStructureParams = field(default_factory=FineStructureParams)
    model: CascadeModel = field(default_factory=CascadeModel)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    channels: tuple = field(default_factory=lambda: tuple(default_channels()))
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    rabi: RabiConfig = field(default_factory=RabiConfig)
    output_dir: str = "out"
    seed: int = 0


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        path = f"{where}.{name}"
        if dataclasses.is_dataclass(hint):
            value = _build(hint, value, path)
        elif name == "channels" and cls is RunConfig:
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list of detector channels")
            value = tuple(_build(DetectorChannel, v, f"{path}[{i}]") for i, v in enumerate(value))
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(data):
    return _build(RunConfig, data or {}, "config")


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    return value


def to_dict(config):
    return _plain(config)


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return from_dict(data)


def dump_config(config, path):
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(config), fh, sort_keys=False)

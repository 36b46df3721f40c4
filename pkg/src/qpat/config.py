"""Experiment configuration tree with JSON round-tripping.

One ``ExperimentConfig`` describes a full study: domain and grids, acoustic
stepping, the random medium and phantom generators, sensing layout, and the
per-method solver settings.  Field names match the JSON keys one-to-one, and
unknown keys are rejected so typos fail loudly instead of silently running
defaults.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .solvers import AdmmConfig, LdConfig, PcgConfig, PdipmConfig

__all__ = [
    "DomainConfig",
    "AcousticConfig",
    "MediumConfig",
    "PhantomConfig",
    "SensingConfig",
    "ExperimentConfig",
    "load_config",
    "save_config",
]


@dataclass
class DomainConfig:
    """Box size and the two node lattices (data generation vs reconstruction)."""

    size_mm: tuple[float, ...] = (10.0, 10.0)
    generation_shape: tuple[int, ...] = (64, 64)
    reconstruction_shape: tuple[int, ...] = (48, 48)


@dataclass
class AcousticConfig:
    dt: float = 2.3e-8
    num_steps: int = 460
    pml_points_generation: int = 8
    pml_points_reconstruction: int = 6
    pml_alpha: float = 2.0
    alpha0_db: float = 0.75       # dB MHz^-y cm^-1
    power_law_y: float = 1.5
    smooth_source: bool = True
    real_fft: bool = True


@dataclass
class MediumConfig:
    """Smooth random acoustic maps: base level plus Gaussian bumps.

    ``snr_db`` is the noise level applied to the maps handed to the
    reconstruction (the generation side always uses the clean maps);
    ``None`` disables it.
    """

    sound_speed_base: float = 1500.0
    sound_speed_spread: float = 150.0
    density_base: float = 1000.0
    density_spread: float = 100.0
    num_bumps: int = 5
    bump_width_mm: tuple[float, float] = (1.5, 3.5)
    snr_db: float | None = 30.0


@dataclass
class PhantomConfig:
    """Piecewise-constant disk phantom on the element mesh."""

    mu_background: float = 0.075
    mu_low: float = 0.025
    mu_high: float = 0.325
    kappa_background: float = 0.3
    kappa_low: float = 0.2
    kappa_high: float = 0.4
    num_mu_disks: int = 6
    num_kappa_disks: int = 3
    radius_range_mm: tuple[float, float] = (0.9, 2.2)


@dataclass
class SensingConfig:
    """Detector layout, illumination pattern and data noise."""

    detector_sides: tuple[str, ...] = ("left", "top")
    detectors_per_side: int = 30
    inset_mm: float = 1.5
    illuminations: tuple[tuple[str, ...], ...] = (
        ("left",), ("right",), ("bottom",), ("top",))
    snr_db: float | None = 30.0


@dataclass
class ExperimentConfig:
    name: str = "desk2d"
    domain: DomainConfig = field(default_factory=DomainConfig)
    acoustic: AcousticConfig = field(default_factory=AcousticConfig)
    medium: MediumConfig = field(default_factory=MediumConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    ld: LdConfig = field(default_factory=LdConfig)
    pdipm: PdipmConfig = field(default_factory=PdipmConfig)
    methods: tuple[str, ...] = ("admm", "ld", "pdipm")
    threads: int = 1
    allow_inverse_crime: bool = False
    seed_phantom: int = 11
    seed_medium: int = 23
    seed_data: int = 47
    initial_scale: float = 1.2

    def validate(self) -> None:
        d = len(self.domain.size_mm)
        if d not in (2, 3):
            raise ConfigError(f"domain must be 2D or 3D, got {d} sizes")
        for shp in (self.domain.generation_shape, self.domain.reconstruction_shape):
            if len(shp) != d:
                raise ConfigError("grid shapes must match the domain dimension")
            if any(n < 4 for n in shp):
                raise ConfigError("grids need at least 4 nodes per coordinate")
        for m in self.methods:
            if m not in ("admm", "ld", "pdipm"):
                raise ConfigError(f"unknown method {m!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not self.allow_inverse_crime and (
                tuple(self.domain.generation_shape) == tuple(self.domain.reconstruction_shape)):
            raise ConfigError(
                "generation and reconstruction grids coincide; pass "
                "allow_inverse_crime to run on matching lattices")


# ---------------------------------------------------------------------------
# JSON round-trip helpers


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _from_dict(cls, data: dict, context: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{context}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        kwargs[f.name] = _convert(hints[f.name], value, f"{context}.{f.name}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _convert(hint, value, context: str):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        # Optional[...]: None passes, otherwise convert against the inner type
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _convert(args[0], value, context)
    if dataclasses.is_dataclass(hint):
        return _from_dict(hint, value, context)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{context}: expected a list")
        args = typing.get_args(hint)
        inner = args[0] if args else None
        if inner is not None and inner is not Ellipsis:
            return tuple(_convert(inner, v, context) for v in value)
        return tuple(value)
    return value


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _to_jsonable(cfg)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Structural parse only; call ``cfg.validate()`` once overrides (CLI
    seeds, method, threads) have been applied."""
    return _from_dict(ExperimentConfig, data, "config")


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)

"""Experiment configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .curie_weiss import RhoMeasure
from .monomer_dimer import critical_constants

MODELS = ("cw", "md")
METHODS = ("exact", "glauber")
RHO_PRESETS = {"rademacher": RhoMeasure.rademacher, "three-point": RhoMeasure.three_point}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    burn_in_sweeps: int = 1000
    samples: int = 100_000
    thin: int = 1


@dataclass(frozen=True)
class ScalingConfig:
    normalized: bool = False
    slope_min: float | None = None
    slope_max: float | None = None
    min_r2: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    n_list: tuple[int, ...]
    method: str = "exact"
    rho_preset: str | None = None
    rho_points: tuple[float, ...] | None = None
    rho_weights: tuple[float, ...] | None = None
    rho_lattice_step: float | None = None
    J: float | None = None
    h: float | None = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    z_grid_size: int = 50
    output_dir: str = "mdlab-out"
    workers: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.n_list:
            raise ConfigError("n_list is empty")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError("n_list must be strictly increasing")
        if self.n_list[0] < 2:
            raise ConfigError("every n must be >= 2")
        if self.z_grid_size < 20:
            raise ConfigError("z_grid_size must be >= 20")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.model == "cw":
            if self.rho_preset is None and self.rho_points is None:
                raise ConfigError("cw model needs [rho] preset or points/weights")
            if self.rho_preset is not None and self.rho_preset not in RHO_PRESETS:
                raise ConfigError(f"unknown rho preset {self.rho_preset!r}")
            if self.method == "exact" and not self.rho().is_lattice:
                raise ConfigError("exact method needs a lattice-valued rho")
        else:
            if self.J is None or self.h is None:
                raise ConfigError("md model needs J and h")
            if self.J < 0:
                raise ConfigError("J must be >= 0")
            if self.method != "exact":
                raise ConfigError("md model supports only the exact method")

    def rho(self) -> RhoMeasure:
        if self.rho_preset is not None:
            return RHO_PRESETS[self.rho_preset]()
        return RhoMeasure(points=list(self.rho_points), weights=list(self.rho_weights),
                          lattice_step=self.rho_lattice_step)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Apply non-``None`` overrides; sampler keys are routed to the sampler table."""
        top = {f.name for f in fields(self)}
        samp = {f.name for f in fields(SamplerConfig)}
        new_top, new_samp = {}, {}
        for key, val in kw.items():
            if val is None:
                continue
            if key in samp:
                new_samp[key] = val
            elif key in top:
                new_top[key] = tuple(val) if key == "n_list" else val
            else:
                raise ConfigError(f"unknown override {key!r}")
        if new_samp:
            new_top["sampler"] = replace(self.sampler, **new_samp)
        try:
            return replace(self, **new_top)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _parse(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    kw: dict = {}
    try:
        kw["model"] = raw.pop("model")
        kw["n_list"] = tuple(int(n) for n in raw.pop("n_list"))
    except KeyError as exc:
        raise ConfigError(f"missing required key {exc.args[0]!r}") from None
    for key in ("method", "z_grid_size", "output_dir", "workers"):
        if key in raw:
            kw[key] = raw.pop(key)
    rho = raw.pop("rho", None)
    if rho is not None:
        rho = dict(rho)
        kw["rho_preset"] = rho.pop("preset", None)
        if "points" in rho:
            kw["rho_points"] = tuple(float(x) for x in rho.pop("points"))
            kw["rho_weights"] = tuple(float(x) for x in rho.pop("weights"))
        if "lattice_step" in rho:
            kw["rho_lattice_step"] = float(rho.pop("lattice_step"))
        if rho:
            raise ConfigError(f"unknown [rho] keys {sorted(rho)}")
    mdt = raw.pop("md", None)
    if mdt is not None:
        mdt = dict(mdt)
        if mdt.pop("critical", False):
            J_c, h_c, _ = critical_constants()
            kw["J"], kw["h"] = J_c, h_c
        if "J" in mdt:
            kw["J"] = float(mdt.pop("J"))
        if "h" in mdt:
            kw["h"] = float(mdt.pop("h"))
        if mdt:
            raise ConfigError(f"unknown [md] keys {sorted(mdt)}")
    for name, cls in (("sampler", SamplerConfig), ("scaling", ScalingConfig)):
        table = raw.pop(name, None)
        if table is not None:
            try:
                kw[name] = cls(**table)
            except TypeError as exc:
                raise ConfigError(f"[{name}]: {exc}") from None
    if raw:
        raise ConfigError(f"unknown keys {sorted(raw)}")
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return _parse(raw)


def loads_config(text: str) -> ExperimentConfig:
    return _parse(tomllib.loads(text))


def output_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir)

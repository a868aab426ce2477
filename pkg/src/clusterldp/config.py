"""TOML experiment configuration: ``seed`` plus [model], [experiment] and
[output] sections. Unknown keys are rejected, and model invariants are
checked by building the spec on load."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .distributions import DEFAULT_SIZE_CAP, DomainError, TablePmf
from .simulate import Exponential, TablePdf, TemporalSpec, UniformOn
from .spatial import Gaussian, SpatialSpec, UniformBall


class ConfigError(ValueError):
    pass


_TEMPORAL_KERNELS = {"exponential": ("beta",), "uniform": ("b",), "table": ("edges", "density")}
_SPATIAL_KERNELS = {"gaussian": ("sigma",), "uniform_ball": ("rho",)}
_MODEL_COMMON = {"kind", "nu", "mu", "kernel", "size_pmf", "size_cap", "d"}

EXPERIMENT_KEYS = {
    "simulate": {"horizon", "radius", "margin"},
    "ratefn": {"x_min", "x_max", "n_points", "theta_min", "theta_max", "n_theta"},
    "scalar": {"threshold", "side", "scales", "n_reps", "margin"},
    "path": {"times", "lower", "upper", "scales", "n_reps", "margin"},
    "spatial": {"threshold", "side", "scales", "n_reps", "margin"},
    "void": {"radii", "n_reps", "margin"},
    "oracle": {"threshold", "scales", "n_reps"},
}
_ALL_EXPERIMENT_KEYS = set().union(*EXPERIMENT_KEYS.values())
_OUTPUT_KEYS = {"dir"}


@dataclass
class Config:
    seed: int
    model: dict
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2**64)")
        for name, allowed in (("experiment", _ALL_EXPERIMENT_KEYS), ("output", _OUTPUT_KEYS)):
            unknown = set(getattr(self, name)) - allowed
            if unknown:
                raise ConfigError(f"unknown [{name}] keys: {sorted(unknown)}")
        self.spec  # validates the model section

    @property
    def kind(self) -> str:
        return self.model.get("kind", "temporal")

    @property
    def size_cap(self) -> int:
        return int(self.model.get("size_cap", DEFAULT_SIZE_CAP))

    @property
    def spec(self) -> TemporalSpec | SpatialSpec:
        return build_spec(self.model)

    def experiment_for(self, command: str) -> dict:
        unknown = set(self.experiment) - EXPERIMENT_KEYS[command]
        if unknown:
            raise ConfigError(f"[experiment] keys {sorted(unknown)} do not apply to '{command}'")
        return dict(self.experiment)


def build_spec(model: dict) -> TemporalSpec | SpatialSpec:
    kind = model.get("kind", "temporal")
    if kind not in ("temporal", "spatial"):
        raise ConfigError("model.kind must be 'temporal' or 'spatial'")
    kernels = dict(_TEMPORAL_KERNELS)
    if kind == "spatial":
        kernels.update(_SPATIAL_KERNELS)
    name = model.get("kernel")
    if name not in kernels:
        raise ConfigError(f"model.kernel must be one of {sorted(kernels)}")
    allowed = _MODEL_COMMON | set(kernels[name])
    unknown = set(model) - allowed
    if unknown:
        raise ConfigError(f"unknown [model] keys for kernel '{name}': {sorted(unknown)}")
    if kind == "temporal" and "d" in model:
        raise ConfigError("model.d only applies to spatial models")
    missing = [k for k in ("nu", "mu", *kernels[name]) if k not in model]
    if kind == "spatial" and "d" not in model:
        missing.append("d")
    if missing:
        raise ConfigError(f"missing [model] keys: {missing}")
    try:
        if name == "exponential":
            kernel = Exponential(float(model["beta"]))
        elif name == "uniform":
            kernel = UniformOn(float(model["b"]))
        elif name == "table":
            kernel = TablePdf(tuple(model["edges"]), tuple(model["density"]))
        elif name == "gaussian":
            kernel = Gaussian(float(model["sigma"]))
        else:
            kernel = UniformBall(float(model["rho"]))
        law = TablePmf(tuple(model["size_pmf"])) if "size_pmf" in model else None
        if kind == "temporal":
            return TemporalSpec(float(model["nu"]), float(model["mu"]), kernel, law)
        return SpatialSpec(int(model["d"]), float(model["nu"]), float(model["mu"]), kernel, law)
    except (DomainError, TypeError) as err:
        raise ConfigError(f"invalid model: {err}") from err


def parse_config(text: str) -> Config:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"not valid TOML: {err}") from err
    unknown = set(raw) - {"seed", "model", "experiment", "output"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "seed" not in raw or "model" not in raw:
        raise ConfigError("config needs 'seed' and a [model] section")
    return Config(raw["seed"], raw["model"], raw.get("experiment", {}), raw.get("output", {}))


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    return parse_config(text)


def _value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialise {v!r}")


def dump_config(cfg: Config) -> str:
    """TOML text that parses back to an identical Config."""
    lines = [f"seed = {cfg.seed}", ""]
    for name in ("model", "experiment", "output"):
        lines.append(f"[{name}]")
        for k, v in getattr(cfg, name).items():
            lines.append(f"{k} = {_value(v)}")
        lines.append("")
    return "\n".join(lines)

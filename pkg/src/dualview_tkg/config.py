"""Run configuration: defaults, dataset presets, key=value files and overrides."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .model.network import VARIANT_TAGS

ENV_DATA_DIR = "TKG_DATA_DIR"
ENV_SEED = "TKG_SEED"

# (cap N, mu, gamma, attention layers per view, granularity)
PRESETS = {
    "icews14s": dict(cap=10, mu=0.2, gamma=0.3, layers_inv=3, layers_dyn=3, granularity=24),
    "icews18": dict(cap=8, mu=0.01, gamma=0.03, layers_inv=2, layers_dyn=2, granularity=24),
    "icews05-15": dict(cap=10, mu=0.15, gamma=0.2, layers_inv=2, layers_dyn=2, granularity=24),
    "gdelt": dict(cap=8, mu=0.3, gamma=0.25, layers_inv=2, layers_dyn=2, granularity=15),
}


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = ""
    granularity: int = 1
    dim: int = 200
    history_len: int = 3
    gcn_layers: int = 2
    layers_inv: int = 2
    layers_dyn: int = 2
    conv_channels: int = 50
    cap: int = 10
    alpha: float = 0.7
    mu: float = 0.2
    gamma: float = 0.3
    dropout: float = 0.2
    lr: float = 1e-3
    weight_decay: float = 1e-5
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    variant: str = "full"
    num_walks: int = 200
    min_body_support: int = 2
    rules_path: str = ""

    def validate(self) -> "RunConfig":
        checks = [
            (self.granularity >= 1, "granularity must be >= 1"),
            (self.dim >= 1, "dim must be >= 1"),
            (self.history_len >= 1, "history_len must be >= 1"),
            (self.gcn_layers >= 1, "gcn_layers must be >= 1"),
            (self.layers_inv >= 1 and self.layers_dyn >= 1, "attention layer counts must be >= 1"),
            (self.conv_channels >= 1, "conv_channels must be >= 1"),
            (self.cap >= 1, "cap must be >= 1"),
            (0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]"),
            (self.mu >= 0.0, "mu must be >= 0"),
            (self.gamma > 0.0, "gamma must be > 0"),
            (0.0 <= self.dropout < 1.0, "dropout must lie in [0, 1)"),
            (self.lr > 0.0, "lr must be > 0"),
            (self.weight_decay >= 0.0, "weight_decay must be >= 0"),
            (self.max_epochs >= 1, "max_epochs must be >= 1"),
            (self.patience >= 0, "patience must be >= 0"),
            (self.num_walks >= 1, "num_walks must be >= 1"),
            (self.min_body_support >= 1, "min_body_support must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)
        for part in self.variant.split("+"):
            if part not in VARIANT_TAGS:
                raise ValueError(f"unknown variant {part!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items())

    def updated(self, **changes) -> "RunConfig":
        return replace(self, **coerce(changes)).validate()

    @classmethod
    def from_preset(cls, name: str) -> "RunConfig":
        try:
            return cls(**PRESETS[name]).validate()
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def coerce(values: dict) -> dict:
    """Convert string values to the declared field types; unknown keys are an error."""
    out = {}
    for key, value in values.items():
        if key not in _TYPES:
            raise ValueError(f"unknown config key {key!r}")
        cast = _CASTS[_TYPES[key]]
        try:
            out[key] = cast(value) if not isinstance(value, str) or cast is str else cast(value.strip())
        except ValueError:
            raise ValueError(f"config key {key!r}: cannot parse {value!r}") from None
    return out


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return coerce(values)


def load_config(path: str | Path | None = None, preset: str | None = None,
                overrides: dict | None = None, environ=None) -> RunConfig:
    """Layering, later wins: defaults, preset, file, environment, explicit overrides."""
    environ = os.environ if environ is None else environ
    config = RunConfig.from_preset(preset) if preset else RunConfig()
    layers = []
    if path:
        layers.append(parse_config_text(Path(path).read_text(encoding="utf-8")))
    env = {}
    if environ.get(ENV_DATA_DIR):
        env["data_dir"] = environ[ENV_DATA_DIR]
    if environ.get(ENV_SEED):
        env["seed"] = environ[ENV_SEED]
    layers.append(coerce(env))
    layers.append(coerce({k: v for k, v in (overrides or {}).items() if v is not None}))
    for layer in layers:
        config = replace(config, **layer)
    return config.validate()

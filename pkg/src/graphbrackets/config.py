"""Experiment configuration, loadable from TOML or JSON."""
from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .attention import PreAttentionConfig
from .pendulum import PendulumParams

MODEL_KINDS = ("hamiltonian", "gradient", "double_bracket", "metriplectic", "node", "node_ae")

# learning rates used when the config leaves ``lr`` unset
DEFAULT_LR = {"node": 1e-4}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GraphSpec:
    """Planted-partition graph for node classification."""

    n_nodes: int = 60
    n_classes: int = 2
    n_features: int = 8
    p_in: float = 0.3
    p_out: float = 0.02
    feature_noise: float = 1.0
    separable: bool = False
    train_fraction: float = 0.5

    def __post_init__(self):
        if self.n_nodes < 1 or self.n_features < 1 or self.n_classes < 1:
            raise ConfigError("graph sizes must be positive")
        if self.n_classes > self.n_nodes:
            raise ConfigError(f"{self.n_classes} classes cannot fit on {self.n_nodes} nodes")
        for name in ("p_in", "p_out", "train_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.feature_noise < 0:
            raise ConfigError("feature_noise must be non-negative")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "hamiltonian"
    latent_dim: int = 32
    hidden: int = 64
    lr: float | None = None
    epochs: int = 10_000
    scheme: str = "euler"
    classify_scheme: str = "rk4"
    substeps: int = 1  # latent integrator steps per snapshot interval
    horizon: float = 1.0  # classification only: integrate to this time
    n_steps: int = 4  # classification only: steps to reach ``horizon``
    seed: int = 0
    rhs_scale: bool = False
    activation: str = "tanh"
    net_hidden: int | None = None  # metriplectic energy/entropy nets
    node_width: int = 128
    node_ae_width: int = 192
    log_every: int = 0
    attention: PreAttentionConfig = field(default_factory=PreAttentionConfig)
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    graph: GraphSpec = field(default_factory=GraphSpec)

    def __post_init__(self):
        model = self.model.replace("-", "_").replace("+", "_").lower()
        if model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODEL_KINDS}")
        object.__setattr__(self, "model", model)
        for name in ("latent_dim", "hidden", "substeps", "n_steps", "node_width", "node_ae_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.lr is not None and not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        for name in ("scheme", "classify_scheme"):
            if getattr(self, name) not in ("euler", "rk4"):
                raise ConfigError(f"{name} must be euler or rk4, got {getattr(self, name)!r}")

    @property
    def learning_rate(self) -> float:
        return self.lr if self.lr is not None else DEFAULT_LR.get(self.model, 1e-3)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        nested = {"attention": PreAttentionConfig, "pendulum": PendulumParams, "graph": GraphSpec}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, typ in nested.items():
                if key in raw:
                    sub = raw[key]
                    allowed = {f.name for f in dataclasses.fields(typ)}
                    bad = set(sub) - allowed
                    if bad:
                        raise ConfigError(f"unknown keys in [{key}]: {sorted(bad)}")
                    if "theta0" in sub:
                        sub = {**sub, "theta0": tuple(sub["theta0"])}
                    raw[key] = typ(**sub)
            return cls(**raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        raw = json.loads(text)
    else:
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)

"""Flat ``key = value`` run configuration shared by every command.

One file (plus command-line overrides) resolves into a RunConfig, which
hands typed sub-configs to the graph, model, training and evaluation
layers.  Unknown keys are rejected by name so typos cannot silently fall
back to defaults.  The full resolved mapping is echoed into every report
a command writes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .evaluate import EvalConfig
from .graph import GraphConfig
from .model import ModelConfig
from .train import TrainConfig, TrainError


class ConfigError(ValueError):
    """Bad key, bad value, or an unreadable config file."""


_BOOL_WORDS = {
    "true": True,
    "false": False,
    "yes": True,
    "no": False,
    "1": True,
    "0": False,
}


@dataclass(frozen=True)
class RunConfig:
    # data paths
    interactions: str = ""
    attributes: str = ""
    # session graphs
    max_history: int = 8
    session_len: int = 2
    sample_neighbors: int = 2
    num_layers: int = 2
    max_sessions: int = 3
    # model
    embed_dim: int = 16
    leaky_slope: float = 0.01
    sim_eps: float = 1e-8
    no_historical: bool = False
    no_relation: bool = False
    no_attention: bool = False
    single_attention: bool = False
    mean_instead_of_lstm: bool = False
    # training
    lr: float = 0.001
    batch_size: int = 64
    relation_reg: float = 0.8
    l2_reg: float = 0.005
    epochs: int = 5
    negatives_per_positive: int = 1
    # evaluation protocol
    train_rate: float = 0.8
    holdout_fraction: float = 0.5
    candidates_per_user: int = 100
    ks: tuple[int, ...] = (5, 10)
    t0: int = 0
    # run plumbing
    seed: int = 7
    threads: int = 1

    def graph_config(self) -> GraphConfig:
        return GraphConfig(
            max_history=self.max_history,
            session_len=self.session_len,
            sample_neighbors=self.sample_neighbors,
            num_layers=self.num_layers,
            max_sessions=self.max_sessions,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            num_layers=self.num_layers,
            leaky_slope=self.leaky_slope,
            sim_eps=self.sim_eps,
            no_historical=self.no_historical,
            no_relation=self.no_relation,
            no_attention=self.no_attention,
            single_attention=self.single_attention,
            mean_instead_of_lstm=self.mean_instead_of_lstm,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            relation_reg=self.relation_reg,
            l2_reg=self.l2_reg,
            epochs=self.epochs,
            negatives_per_positive=self.negatives_per_positive,
            seed=self.seed,
        )

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            holdout_fraction=self.holdout_fraction,
            candidates_per_user=self.candidates_per_user,
            ks=self.ks,
            t0=self.t0,
            seed=self.seed,
        )

    def validate(self) -> None:
        try:
            self.graph_config().validate()
            self.model_config().validate()
            self.train_config().validate()
            self.eval_config().validate()
        except (ValueError, TrainError) as exc:
            raise ConfigError(str(exc)) from exc
        if not 0.0 < self.train_rate < 1.0:
            raise ConfigError("train_rate must lie strictly between 0 and 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            word = raw.lower()
            if word not in _BOOL_WORDS:
                raise ValueError
            return _BOOL_WORDS[word]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple[int, ...]":
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if not parts:
                raise ValueError
            return tuple(int(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(
            f"config key {key!r} cannot take the value {raw!r}"
        ) from None


def parse_config_text(text: str, source: str = "config") -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments are skipped."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def resolve(
    path: str | None = None, overrides: dict[str, str] | None = None
) -> RunConfig:
    """Defaults, then the config file, then explicit overrides; validated."""
    pairs: dict[str, str] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
        pairs.update(parse_config_text(text, source=path))
    pairs.update(overrides or {})
    cfg = RunConfig()
    for key, raw in pairs.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        cfg = replace(cfg, **{key: _coerce(key, raw)})
    cfg.validate()
    return cfg

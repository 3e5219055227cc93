"""Single-file run configuration with dotted command-line overrides.

One YAML file drives every command. Any leaf is overridable on the
command line by its dotted path, e.g. ``--synth.n_candidates 500`` or
``--align.epsilon 0.2``. Section seeds default to the global seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import TrainConfig
from .policy import AlignConfig
from .synth import SynthConfig

_TUPLE_FIELDS = {
    "kcore_pattern", "level_probs", "hours_choices", "hours_probs", "ks", "epsilons",
}


@dataclass
class EvalSettings:
    ks: tuple[int, ...] = (1, 3, 5)
    split: str = "test"
    scorer: str = "auto"
    bootstrap_resamples: int = 1000
    bootstrap_seed: int = 0

    def validate(self) -> None:
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError(f"eval ks must be positive: {self.ks}")
        if self.split not in ("train", "validation", "test"):
            raise ConfigError(f"unknown eval split {self.split!r}")
        if self.scorer not in ("auto", "pref", "qual", "final", "oracle"):
            raise ConfigError(f"unknown scorer {self.scorer!r}")


@dataclass
class SweepSettings:
    epsilons: tuple[float, ...] = (0.01, 0.05, 0.2)
    mode: str = "realign"

    def validate(self) -> None:
        if not self.epsilons:
            raise ConfigError("sweep needs at least one epsilon")
        if any(not 0.0 <= e <= 1.0 for e in self.epsilons):
            raise ConfigError(f"sweep epsilons must lie in [0, 1]: {self.epsilons}")
        if self.mode not in ("realign", "rescore"):
            raise ConfigError(f"sweep mode must be realign|rescore: {self.mode}")


@dataclass
class CompareSettings:
    ks: tuple[int, ...] = (1, 2, 3, 5, 10, 20)
    scorer_a: str = "pref"
    scorer_b: str = "pref"

    def validate(self) -> None:
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError(f"compare ks must be positive: {self.ks}")
        for s in (self.scorer_a, self.scorer_b):
            if s not in ("pref", "final"):
                raise ConfigError(f"compare scorer must be pref|final: {s}")


@dataclass
class RunConfig:
    seed: int = 7
    output_dir: str = "runs/default"
    strict: bool = True
    plots: bool = True
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    compare: CompareSettings = field(default_factory=CompareSettings)

    def validate(self) -> None:
        self.synth.validate()
        self.train.validate()
        self.align.validate()
        self.eval.validate()
        self.sweep.validate()
        self.compare.validate()

    def out(self) -> Path:
        return Path(self.output_dir)


_SECTIONS = {
    "synth": SynthConfig,
    "train": TrainConfig,
    "align": AlignConfig,
    "eval": EvalSettings,
    "sweep": SweepSettings,
    "compare": CompareSettings,
}
_TOP_LEVEL = {"seed", "output_dir", "strict", "plots"}


def _build_section(cls, data: dict, global_seed: int):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    if "seed" in allowed and "seed" not in kwargs:
        kwargs["seed"] = global_seed
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    unknown = set(data) - _TOP_LEVEL - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    seed = int(data.get("seed", 7))
    cfg = RunConfig(
        seed=seed,
        output_dir=str(data.get("output_dir", "runs/default")),
        strict=bool(data.get("strict", True)),
        plots=bool(data.get("plots", True)),
    )
    for name, cls in _SECTIONS.items():
        section = data.get(name, {}) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        setattr(cfg, name, _build_section(cls, section, seed))
    cfg.validate()
    return cfg


def apply_overrides(data: dict, overrides: list[tuple[str, str]]) -> dict:
    """Set dotted-path keys; values parse like YAML scalars ('0.2', 'true')."""
    for path, raw in overrides:
        value = yaml.safe_load(raw)
        parts = path.split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {path}: {part} is not a section")
        node[parts[-1]] = value
    return data


def load_config(path: str | None, overrides: list[tuple[str, str]] | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        data = loaded
    apply_overrides(data, overrides or [])
    return config_from_dict(data)

"""Experiment configuration files.

Flat ``key = value`` pairs under section headers, read with configparser::

    [data]
    train = data/train.txt
    val = data/dev.txt

    [model]
    layers = 4
    d = 256

    [train]
    steps = 16768
    peak_lr = 0.0005

Unknown sections or keys are rejected, and every path in ``[data]`` must
exist when the file is loaded.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .corpus import CleaningRules
from .mslm import ModelConfig
from .train import SweepGrid, TrainConfig


class ConfigError(ValueError):
    pass


DATA_KEYS = {"train", "val", "gold_val", "target_train", "target_gold", "heldout"}
MODEL_KEYS = {"layers", "d", "ff", "heads", "k", "max_len", "ctx_dropout"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
SWEEP_KEYS = {"learning_rates", "encoder_dropouts", "jobs"}
EMBED_KEYS = {"enabled", "dim", "window", "epochs"}
RUN_KEYS = {"seed", "output_dir"}

SECTIONS = {
    "data": DATA_KEYS,
    "model": MODEL_KEYS,
    "train": TRAIN_KEYS,
    "sweep": SWEEP_KEYS,
    "embed": EMBED_KEYS,
    "run": RUN_KEYS,
}


@dataclass
class EmbedSettings:
    enabled: bool = True
    window: int = 5
    epochs: int = 32


@dataclass
class ExperimentConfig:
    data: dict[str, Path] = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepGrid | None = None
    jobs: int = 1
    embed: EmbedSettings = field(default_factory=EmbedSettings)
    seed: int | None = None
    output_dir: Path | None = None


def _coerce(value: str, like):
    if isinstance(like, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def _floats(value: str) -> list[float]:
    return [float(x) for x in value.replace(",", " ").split()]


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        unknown = set(parser[section]) - SECTIONS[section]
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")

    cfg = ExperimentConfig()
    base = path.parent
    if parser.has_section("data"):
        for key, value in parser["data"].items():
            p = Path(value)
            p = p if p.is_absolute() else base / p
            if not p.exists():
                raise ConfigError(f"{path}: [data] {key} = {value}: no such file")
            cfg.data[key] = p
    try:
        if parser.has_section("model"):
            defaults = ModelConfig()
            kw = {k: _coerce(v, getattr(defaults, k)) for k, v in parser["model"].items()}
            cfg.model = ModelConfig(**{**defaults.to_dict(), **kw})
        if parser.has_section("train"):
            defaults = TrainConfig()
            kw = {k: _coerce(v, getattr(defaults, k)) for k, v in parser["train"].items()}
            cfg.train = TrainConfig(**{**{f.name: getattr(defaults, f.name) for f in fields(TrainConfig)}, **kw})
        if parser.has_section("sweep"):
            sec = parser["sweep"]
            cfg.sweep = SweepGrid(_floats(sec.get("learning_rates", "")), _floats(sec.get("encoder_dropouts", "")))
            cfg.jobs = int(sec.get("jobs", "1"))
        if parser.has_section("embed"):
            defaults = EmbedSettings()
            sec = parser["embed"]
            cfg.embed = EmbedSettings(
                enabled=_coerce(sec.get("enabled", "true"), True),
                window=int(sec.get("window", defaults.window)),
                epochs=int(sec.get("epochs", defaults.epochs)),
            )
            if "dim" in sec and int(sec["dim"]) != cfg.model.d:
                raise ConfigError(f"{path}: [embed] dim must equal the model hidden size {cfg.model.d}")
        if parser.has_section("run"):
            sec = parser["run"]
            if "seed" in sec:
                cfg.seed = int(sec["seed"])
            if "output_dir" in sec:
                out = Path(sec["output_dir"])
                cfg.output_dir = out if out.is_absolute() else base / out
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


RULE_KEYS = {"drop_urls", "drop_no_alpha", "min_alpha_fraction", "blocklist", "max_chars", "dedupe"}


def load_rules(path: str | Path) -> CleaningRules:
    """Cleaning rules from a ``[rules]`` section; ``blocklist`` is one substring per line."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if parser.sections() != ["rules"]:
        raise ConfigError(f"{path}: expected exactly one [rules] section, found {parser.sections()}")
    sec = parser["rules"]
    unknown = set(sec) - RULE_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) in [rules]: {', '.join(sorted(unknown))}")
    d = CleaningRules()
    try:
        frac = sec.get("min_alpha_fraction")
        return CleaningRules(
            drop_urls=_coerce(sec.get("drop_urls", str(d.drop_urls)), True),
            drop_no_alpha=_coerce(sec.get("drop_no_alpha", str(d.drop_no_alpha)), True),
            min_alpha_fraction=None if frac in (None, "", "none") else float(frac),
            blocklist=tuple(s.strip() for s in sec.get("blocklist", "").splitlines() if s.strip()),
            max_chars=int(sec.get("max_chars", d.max_chars)),
            dedupe=_coerce(sec.get("dedupe", str(d.dedupe)), True),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None

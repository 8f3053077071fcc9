"""Declarative experiment configuration with a key = value file format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

VALID_TASKS = ("classification", "translation")
VALID_FUSIONS = ("concat", "auto", "gan")
MODALITY_ALIASES = {"v": "video", "s": "speech", "t": "text",
                    "video": "video", "speech": "speech", "text": "text"}


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    task: str = "classification"
    modalities: tuple[str, ...] = ("video", "speech", "text")
    fusion: str = "auto"

    # encoder dims
    text_embed: int = 16
    text_hidden: int = 64
    speech_latent: int = 32
    video_latent: int = 32

    # fusion dims
    d_fuse: int = 32
    d_noise: int = 8
    noise_sigma: float = 1.0
    disc_hidden: int = 32

    # heads
    head_hidden: int = 64
    dec_embed: int = 24
    dec_hidden: int = 64
    max_decode_len: int = 16
    classification_loss: str = "cross_entropy"
    condition_every_step: bool = False

    # objective / optimization
    lambda1: float = 1.0
    lambda2: float = 1.0
    lr: float = 1e-3
    disc_lr: float | None = None
    saturating_gan: bool = False
    dropout_p: float = 0.0
    epochs: int = 20
    batch_size: int = 32
    patience: int = 10
    seed: int = 0

    # data / evaluation
    train_path: str = ""
    val_path: str = ""
    test_path: str = ""
    word_drop_p: float = 0.0
    out_dir: str = ""

    def __post_init__(self):
        self.modalities = tuple(dict.fromkeys(
            MODALITY_ALIASES.get(m, m) for m in self.modalities))

    @property
    def effective_disc_lr(self) -> float:
        return self.lr / 2.0 if self.disc_lr is None else self.disc_lr

    @property
    def output_root(self) -> str:
        return self.out_dir or os.environ.get("FUSELAB_OUT", ".")

    def validate(self) -> None:
        if self.task not in VALID_TASKS:
            raise ConfigError(f"task must be one of {VALID_TASKS}, got {self.task!r}")
        if self.fusion not in VALID_FUSIONS:
            raise ConfigError(f"fusion must be one of {VALID_FUSIONS}, got {self.fusion!r}")
        bad = [m for m in self.modalities if m not in ("video", "speech", "text")]
        if bad or not self.modalities:
            raise ConfigError(f"modalities must be a non-empty subset of v/s/t, got {self.modalities}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if self.fusion == "gan" and len(self.modalities) < 2:
            raise ConfigError("fusion=gan requires at least 2 modalities")
        if self.task == "translation" and "text" not in self.modalities:
            raise ConfigError("translation requires the text modality")
        if not 0.0 <= self.word_drop_p <= 1.0:
            raise ConfigError("word_drop_p must lie in [0, 1]")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.classification_loss not in ("cross_entropy", "hinge"):
            raise ConfigError(f"unknown classification_loss {self.classification_loss!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(v)
    return str(v)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}"
             for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    types = {f.name: f for f in fields(ExperimentConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    default = getattr(ExperimentConfig, "__dataclass_fields__")[name].default
    if name == "modalities":
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if name == "disc_lr":
        return None if raw.lower() == "none" else float(raw)
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false"):
            raise ConfigError(f"{name}: expected true/false, got {raw!r}")
        return raw.lower() == "true"
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        setattr(cfg, key, _parse_value(key, raw))
    cfg.__post_init__()
    return cfg


def load_config_file(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base)

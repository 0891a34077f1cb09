"""Experiment configuration: dataclasses plus an INI-style file format.

Example file::

    [data]
    dim = 8
    n_labeled_classes = 3
    p_u = 1/3, 1/3, 1/3
    separation = 8

    [train]
    epochs = 200
    batch_unlabeled = 64

Every key is optional; missing keys take the dataclass defaults below.
Probabilities accept fractions (``1/8``).
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from ncdlab.losses import LossWeights
from ncdlab.model import PRESETS, ModelConfig
from ncdlab.multinoulli import SUM_TOL, MultinoulliSpec
from ncdlab.synthgen import AugmentationPolicy


class ConfigError(ValueError):
    def __init__(self, fieldname: str, message: str):
        super().__init__(f"{fieldname}: {message}")
        self.field = fieldname


@dataclass(frozen=True)
class DataConfig:
    dim: int = 8
    n_labeled_classes: int = 3
    p_u: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    n_labeled: int = 900
    n_unlabeled: int = 900
    n_test_labeled: int = 600
    n_test_unlabeled: int = 600
    separation: float = 8.0
    scale: float = 1.0

    @property
    def n_novel_classes(self) -> int:
        return len(self.p_u)

    @property
    def n_classes(self) -> int:
        return self.n_labeled_classes + self.n_novel_classes

    def prior(self) -> MultinoulliSpec:
        return MultinoulliSpec(self.n_labeled_classes, self.p_u)


@dataclass(frozen=True)
class NetConfig:
    hidden: tuple[int, ...] = (64, 64)
    embedding_dim: int = 16


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    steps_per_epoch: int = 10
    batch_labeled: int = 64
    batch_unlabeled: int = 64
    lr: float = 0.1
    lr_decay_every: int = 50
    lr_decay_factor: float = 0.5
    clip_norm: float = 10.0
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    augment: AugmentationPolicy = field(default_factory=AugmentationPolicy.strong)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    # carried for completeness, not used by any loss
    tau: float = 0.05
    sharpen: float = 0.1

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.data.dim, self.net.hidden, self.net.embedding_dim, self.data.n_classes)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return dataclasses.replace(self, train=dataclasses.replace(self.train, seed=seed))

    def validate(self) -> ExperimentConfig:
        d, t = self.data, self.train
        p = d.p_u
        if not p:
            raise ConfigError("data.p_u", "needs at least one novel class")
        if any(x <= 0 for x in p):
            raise ConfigError("data.p_u", f"entries must be strictly positive, got {list(p)}")
        if abs(sum(p) - 1.0) > SUM_TOL:
            raise ConfigError("data.p_u", f"must sum to 1, sums to {sum(p):.12g}")
        if d.n_labeled_classes < 1:
            raise ConfigError("data.n_labeled_classes", "must be >= 1")
        if t.batch_unlabeled < 10 * d.n_novel_classes:
            raise ConfigError(
                "train.batch_unlabeled",
                f"{t.batch_unlabeled} is below the minimum of 10 x U = {10 * d.n_novel_classes} "
                "instances needed for stable batch statistics",
            )
        if t.batch_unlabeled > d.n_unlabeled:
            raise ConfigError("train.batch_unlabeled", "exceeds the unlabeled pool size")
        if t.batch_labeled < 1 or t.batch_labeled > d.n_labeled:
            raise ConfigError("train.batch_labeled", "must be between 1 and the labeled pool size")
        for name in ("dim", "n_labeled", "n_unlabeled", "n_test_labeled", "n_test_unlabeled"):
            if getattr(d, name) < 1:
                raise ConfigError(f"data.{name}", "must be >= 1")
        if d.separation <= 0:
            raise ConfigError("data.separation", "must be positive")
        if t.epochs < 0 or t.steps_per_epoch < 1:
            raise ConfigError("train.epochs", "epochs must be >= 0 and steps_per_epoch >= 1")
        if t.lr < 0 or t.lr_decay_every < 1:
            raise ConfigError("train.lr", "lr must be >= 0 and lr_decay_every >= 1")
        return self

    def to_text(self) -> str:
        """Canonical INI rendering; parsing it back gives an equal config."""
        sections = {
            "data": self.data,
            "augment": self.augment,
            "net": self.net,
            "train": self.train,
            "loss": self.loss,
        }
        lines = []
        for name, obj in sections.items():
            lines.append(f"[{name}]")
            for f in fields(obj):
                v = getattr(obj, f.name)
                if isinstance(v, tuple):
                    v = ", ".join(repr(x) for x in v)
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{f.name} = {v}")
            lines.append("")
        lines += ["[extra]", f"tau = {self.tau!r}", f"sharpen = {self.sharpen!r}", ""]
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _number(text: str) -> float:
    return float(Fraction(text.strip())) if "/" in text else float(text)


def _convert(section: str, f: dataclasses.Field, raw: str):
    name = f"{section}.{f.name}"
    try:
        if f.name == "hidden":
            if raw.strip() in PRESETS:
                return PRESETS[raw.strip()]
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if f.name == "p_u":
            return tuple(_number(x) for x in raw.split(",") if x.strip())
        if f.type in ("int", int):
            return int(raw)
        if f.type in ("float", float):
            return _number(raw)
        return raw.strip()
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(name, f"cannot parse {raw!r}: {exc}") from None


def _build(cls, section: str, items: dict, **extra):
    known = {f.name: f for f in fields(cls)}
    kwargs = dict(extra)
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}", "unknown key")
        kwargs[key] = _convert(section, known[key], raw)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(section, str(exc)) from None


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    known = {"data", "augment", "net", "train", "loss", "extra"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(s, "unknown section")
    get = lambda s: dict(cp[s]) if cp.has_section(s) else {}  # noqa: E731

    aug_items = get("augment")
    kind = aug_items.pop("kind", "strong").strip()
    if kind not in ("weak", "strong"):
        raise ConfigError("augment.kind", f"must be weak or strong, got {kind!r}")
    base_aug = AugmentationPolicy.strong() if kind == "strong" else AugmentationPolicy.weak()
    aug = _build(AugmentationPolicy, "augment", aug_items, **dataclasses.asdict(base_aug))

    extra = get("extra")
    cfg = ExperimentConfig(
        data=_build(DataConfig, "data", get("data")),
        augment=aug,
        net=_build(NetConfig, "net", get("net")),
        train=_build(TrainConfig, "train", get("train")),
        loss=_build(LossWeights, "loss", get("loss")),
        tau=_number(extra.get("tau", "0.05")),
        sharpen=_number(extra.get("sharpen", "0.1")),
    )
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("file", str(exc)) from None
    return parse_config(text)

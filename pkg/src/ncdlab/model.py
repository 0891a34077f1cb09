"""MLP encoder -> linear embedding -> K-way column softmax head."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ncdlab import autodiff as ad

PRESETS = {"shallow": (32,), "deep": (128, 64, 32)}

CHECKPOINT_MAGIC = "ncdlab-checkpoint 1"


class NonFiniteGradient(ArithmeticError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden: tuple[int, ...] = (64, 64)
    embedding_dim: int = 16
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        widths = (self.input_dim, *self.hidden, self.embedding_dim, self.n_classes)
        if any(w <= 0 for w in widths):
            raise ValueError(f"all layer widths must be positive, got {widths}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        widths = (self.input_dim, *self.hidden, self.embedding_dim, self.n_classes)
        return [(o, i) for i, o in zip(widths[:-1], widths[1:])]


@dataclass
class MlpModel:
    """Weights ``W`` are (out, in) and act on column batches; biases are (out, 1).

    Layers ``0..len(hidden)-1`` are ReLU encoder layers, the next one is the
    linear embedding and the last one feeds the softmax head.
    """

    config: ModelConfig
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def attach(self, tape: ad.Tape) -> list[ad.Var]:
        """Register every parameter as a leaf on ``tape`` (declaration order)."""
        return [tape.leaf(p) for p in self.parameters]

    def copy(self) -> MlpModel:
        return MlpModel(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def predict_proba(self, inputs) -> np.ndarray:
        P, _ = forward(self, inputs)
        return P.value.copy()

    def embed(self, inputs) -> np.ndarray:
        _, Z = forward(self, inputs)
        return Z.value.copy()


def init(config: ModelConfig, seed: int | np.random.Generator) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    model = MlpModel(config)
    for fan_out, fan_in in config.layer_shapes():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        model.weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        model.biases.append(np.zeros((fan_out, 1)))
    return model


def forward(model: MlpModel, inputs, params: Sequence[ad.Var] | None = None):
    """Return ``(P, Z)``: the K x B probability matrix and e x B embeddings.

    ``inputs`` may be an array (d x B) or a Var on the same tape as ``params``.
    Without ``params`` a fresh tape is created.
    """
    if params is None:
        tape = inputs.tape if isinstance(inputs, ad.Var) else ad.Tape()
        params = model.attach(tape)
    tape = params[0].tape
    x = ad.as_var(inputs, tape)
    if x.shape[0] != model.config.input_dim:
        raise ad.ShapeError(
            f"model expects inputs with {model.config.input_dim} rows, got shape {x.shape}"
        )
    b = x.shape[1]
    n_layers = len(model.weights)
    h = x
    Z = None
    for layer in range(n_layers):
        W, bias = params[2 * layer], params[2 * layer + 1]
        h = (W @ h) + ad.broadcast_column(bias, b)
        if layer < n_layers - 2:
            h = ad.relu(h)
        elif layer == n_layers - 2:
            Z = h
    return ad.softmax_columns(h), Z


def sgd_step(model: MlpModel, gradients: Sequence[np.ndarray], lr: float) -> None:
    """In-place ``theta -= lr * grad``; refuses non-finite gradients."""
    params = model.parameters
    if len(gradients) != len(params):
        raise ValueError(f"expected {len(params)} gradients, got {len(gradients)}")
    for i, (p, g) in enumerate(zip(params, gradients)):
        if g.shape != p.shape:
            raise ad.ShapeError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {i}; step rejected")
    for p, g in zip(params, gradients):
        p -= lr * g


def save_checkpoint(model: MlpModel, path) -> None:
    Path(path).write_text(checkpoint_text(model))


def checkpoint_text(model: MlpModel) -> str:
    cfg = model.config
    lines = [
        CHECKPOINT_MAGIC,
        f"input_dim {cfg.input_dim}",
        "hidden " + " ".join(str(h) for h in cfg.hidden),
        f"embedding_dim {cfg.embedding_dim}",
        f"n_classes {cfg.n_classes}",
    ]
    for i, p in enumerate(model.parameters):
        kind = "W" if i % 2 == 0 else "b"
        lines.append(f"{kind}{i // 2} {p.shape[0]} {p.shape[1]}")
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in p)
    return "\n".join(lines) + "\n"


def load_checkpoint(path) -> MlpModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an ncdlab checkpoint")

    def field_(line, name):
        key, _, rest = line.partition(" ")
        if key != name:
            raise ValueError(f"{path}: expected {name!r}, found {key!r}")
        return rest

    cfg = ModelConfig(
        input_dim=int(field_(lines[1], "input_dim")),
        hidden=tuple(int(h) for h in field_(lines[2], "hidden").split()),
        embedding_dim=int(field_(lines[3], "embedding_dim")),
        n_classes=int(field_(lines[4], "n_classes")),
    )
    model = MlpModel(cfg)
    pos = 5
    for i, (o, n_in) in enumerate(cfg.layer_shapes()):
        for shape, dest in (((o, n_in), model.weights), ((o, 1), model.biases)):
            _, r, c = lines[pos].split()
            if (int(r), int(c)) != shape:
                raise ValueError(f"{path}: layer {i} has shape {(r, c)}, expected {shape}")
            rows = lines[pos + 1 : pos + 1 + shape[0]]
            dest.append(np.array([[float(v) for v in row.split()] for row in rows]).reshape(shape))
            pos += 1 + shape[0]
    return model

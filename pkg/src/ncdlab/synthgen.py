"""Gaussian-mixture stand-in for labeled / novel datasets, augmentations and batch samplers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ncdlab.multinoulli import MultinoulliSpec, sample_categories

MAX_PLACEMENT_TRIES = 10_000


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class AugmentationPolicy:
    kind: Literal["weak", "strong"] = "strong"
    noise: float = 0.1
    rotation: float = 0.0
    dropout: float = 0.0
    jitter: float = 0.0

    @classmethod
    def weak(cls, noise: float = 0.1) -> AugmentationPolicy:
        return cls("weak", noise=noise)

    @classmethod
    def strong(cls, noise: float = 0.1, rotation: float = 0.1, dropout: float = 0.001, jitter: float = 0.05):
        return cls("strong", noise=noise, rotation=rotation, dropout=dropout, jitter=jitter)

    @classmethod
    def identity(cls) -> AugmentationPolicy:
        return cls("strong", noise=0.0)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Two pools of row-major feature vectors (N x d).

    ``_hidden`` holds the novel class ids of the unlabeled pool.  Training code
    never touches it; only :meth:`hidden_labels` exposes it, for evaluation.
    """

    spec: MultinoulliSpec
    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    _hidden: np.ndarray
    class_means: np.ndarray
    scale: float

    @property
    def dim(self) -> int:
        return self.labeled_x.shape[1] if self.labeled_x.size else self.unlabeled_x.shape[1]

    def hidden_labels(self, indices=None) -> np.ndarray:
        return self._hidden.copy() if indices is None else self._hidden[np.asarray(indices)]

    def __len__(self):
        return len(self.labeled_x) + len(self.unlabeled_x)


@dataclass(frozen=True)
class LabeledBatch:
    views: tuple[np.ndarray, np.ndarray]  # each d x B, column-aligned
    targets: np.ndarray  # one-hot K x B


@dataclass(frozen=True)
class UnlabeledBatch:
    views: tuple[np.ndarray, np.ndarray]
    indices: np.ndarray  # rows of the unlabeled pool, no class ids


def place_means(k: int, d: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """K points on the sphere of radius ``separation``, pairwise >= ``separation`` apart."""
    means = []
    for _ in range(MAX_PLACEMENT_TRIES):
        if len(means) == k:
            break
        v = rng.standard_normal(d)
        v *= separation / np.linalg.norm(v)
        if all(np.linalg.norm(v - m) >= separation for m in means):
            means.append(v)
    if len(means) < k:
        raise PlacementError(
            f"placed only {len(means)} of {k} class means {separation} apart in {d} dimensions; "
            "use a larger dimension or a smaller separation"
        )
    return np.array(means)


def _draw(means, ids, scale, rng):
    return means[ids] + scale * rng.standard_normal((len(ids), means.shape[1]))


def generate(
    dim: int,
    spec: MultinoulliSpec,
    n_labeled: int,
    n_unlabeled: int,
    separation: float,
    scale: float = 1.0,
    seed: int = 0,
) -> SyntheticDataset:
    if separation <= 0 or scale < 0:
        raise ValueError("separation must be positive and scale non-negative")
    if n_labeled < 0 or n_unlabeled <= 0:
        raise ValueError("pool sizes must be positive")
    if spec.n_labeled == 0 and n_labeled:
        raise ValueError("labeled instances requested but there are no labeled classes")
    rng = np.random.default_rng([seed, 0])
    means = place_means(spec.n_classes, dim, separation, rng)
    return _populate(spec, means, scale, n_labeled, n_unlabeled, rng)


def _populate(spec, means, scale, n_labeled, n_unlabeled, rng):
    y_l = rng.integers(0, spec.n_labeled, size=n_labeled) if spec.n_labeled else np.zeros(0, int)
    x_l = _draw(means, y_l, scale, rng)
    hidden = sample_categories(spec, rng, n_unlabeled)
    x_u = _draw(means, hidden, scale, rng)
    return SyntheticDataset(spec, x_l, y_l, x_u, hidden, means, float(scale))


def test_split(dataset: SyntheticDataset, n_labeled: int, n_unlabeled: int, seed: int) -> SyntheticDataset:
    """Fresh draws from the same class means and class proportions."""
    rng = np.random.default_rng([seed, 99])
    return _populate(dataset.spec, dataset.class_means, dataset.scale, n_labeled, n_unlabeled, rng)


test_split.__test__ = False  # not a pytest test


def _rotate_first_two(x, angle):
    c, s = np.cos(angle), np.sin(angle)
    x0, x1 = x[0].copy(), x[1].copy()
    x[0] = c * x0 - s * x1
    x[1] = s * x0 + c * x1


def augment_columns(x: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Augment every column of a d x B matrix independently; returns a new array."""
    out = np.array(x, dtype=np.float64, copy=True)
    d, b = out.shape
    if policy.kind == "strong":
        if policy.jitter > 0:
            out *= rng.uniform(1 - policy.jitter, 1 + policy.jitter, size=(1, b))
        if policy.rotation > 0 and d >= 2:
            _rotate_first_two(out, rng.uniform(-policy.rotation, policy.rotation, size=b))
        if policy.dropout > 0:
            out *= rng.random((d, b)) >= policy.dropout
    if policy.noise > 0:
        out += policy.noise * rng.standard_normal((d, b))
    return out


def augment(x, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return augment_columns(x.reshape(-1, 1), policy, rng).reshape(x.shape)


def sample_batch(
    dataset: SyntheticDataset,
    which: Literal["labeled", "unlabeled"],
    size: int,
    policy: AugmentationPolicy,
    rng: np.random.Generator,
):
    """Draw ``size`` instances with replacement and return two augmented views."""
    if which not in ("labeled", "unlabeled"):
        raise ValueError(f"unknown pool {which!r}")
    pool = dataset.labeled_x if which == "labeled" else dataset.unlabeled_x
    if len(pool) == 0:
        raise ValueError(f"the {which} pool is empty")
    if size > len(pool):
        raise ValueError(f"batch of {size} exceeds {which} pool of {len(pool)}")
    idx = rng.integers(0, len(pool), size=size)
    raw = pool[idx].T
    views = (augment_columns(raw, policy, rng), augment_columns(raw, policy, rng))
    if which == "labeled":
        targets = np.zeros((dataset.spec.n_classes, size))
        targets[dataset.labeled_y[idx], np.arange(size)] = 1.0
        return LabeledBatch(views, targets)
    return UnlabeledBatch(views, idx)


CSV_SPLITS = ("labeled", "unlabeled")


def write_csv(dataset: SyntheticDataset, path) -> None:
    d = dataset.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split", "class_id"] + [f"x{i}" for i in range(d)])
        for split, xs, ys in (
            ("labeled", dataset.labeled_x, dataset.labeled_y),
            ("unlabeled", dataset.unlabeled_x, dataset._hidden),
        ):
            for x, y in zip(xs, ys):
                w.writerow([split, int(y)] + [f"{v:.17g}" for v in x])


def read_csv(path, spec: MultinoulliSpec) -> SyntheticDataset:
    """Load pools written by :func:`write_csv`.  Class means are not stored."""
    xs = {"labeled": [], "unlabeled": []}
    ys = {"labeled": [], "unlabeled": []}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[:2] != ["split", "class_id"]:
            raise ValueError(f"{path}: missing 'split,class_id,...' header")
        d = len(header) - 2
        for lineno, row in enumerate(r, start=2):
            if len(row) != d + 2 or row[0] not in CSV_SPLITS:
                raise ValueError(f"{path}:{lineno}: malformed row")
            xs[row[0]].append([float(v) for v in row[2:]])
            ys[row[0]].append(int(row[1]))
    return SyntheticDataset(
        spec,
        np.array(xs["labeled"]).reshape(-1, d),
        np.array(ys["labeled"], dtype=int),
        np.array(xs["unlabeled"]).reshape(-1, d),
        np.array(ys["unlabeled"], dtype=int),
        np.zeros((0, d)),
        float("nan"),
    )


def nearest_mean(x: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Index of the closest class mean for each column of ``x`` (d x B)."""
    d2 = ((means[:, :, None] - x[None, :, :]) ** 2).sum(axis=1)
    return d2.argmin(axis=0)

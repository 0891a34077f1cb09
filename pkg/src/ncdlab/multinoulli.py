"""Categorical (Multinoulli) prior over novel classes and matching batch statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ncdlab import autodiff as ad

SUM_TOL = 1e-9


@dataclass(frozen=True)
class MultinoulliSpec:
    """Known prior ``p_u`` over ``n_novel`` classes placed after ``n_labeled`` ones."""

    n_labeled: int
    p_u: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p_u)
        object.__setattr__(self, "p_u", p)
        if self.n_labeled < 0:
            raise ValueError(f"n_labeled must be >= 0, got {self.n_labeled}")
        if not p:
            raise ValueError("p_u must contain at least one novel class")
        if any(not np.isfinite(x) or x <= 0 for x in p):
            raise ValueError(f"p_u entries must be strictly positive, got {list(p)}")
        if abs(sum(p) - 1.0) > SUM_TOL:
            raise ValueError(f"p_u must sum to 1, sums to {sum(p)!r}")

    @property
    def n_novel(self) -> int:
        return len(self.p_u)

    @property
    def n_classes(self) -> int:
        return self.n_labeled + self.n_novel


def uniform(n_labeled: int, n_novel: int) -> MultinoulliSpec:
    return MultinoulliSpec(n_labeled, (1.0 / n_novel,) * n_novel)


def head_tail(head: float, n_novel: int, n_labeled: int = 0) -> MultinoulliSpec:
    """One head class with probability ``head``, the rest share the remainder."""
    tail = (1.0 - head) / (n_novel - 1)
    return MultinoulliSpec(n_labeled, (head,) + (tail,) * (n_novel - 1))


def target_mean(spec: MultinoulliSpec) -> np.ndarray:
    return np.concatenate([np.zeros(spec.n_labeled), np.array(spec.p_u)])


def target_covariance(spec: MultinoulliSpec) -> np.ndarray:
    """diag(p) - p p^T on the novel block, zero on every labeled row and column."""
    p = np.array(spec.p_u)
    sigma = np.zeros((spec.n_classes, spec.n_classes))
    sigma[spec.n_labeled :, spec.n_labeled :] = np.diag(p) - np.outer(p, p)
    return sigma


def sample_categories(spec: MultinoulliSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF draws of absolute class indices in ``[L, K)``."""
    cdf = np.cumsum(spec.p_u)
    u = rng.random(size)
    # float round-off can leave cdf[-1] a hair under 1
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), spec.n_novel - 1)
    return idx + spec.n_labeled


def sample_category(spec: MultinoulliSpec, rng: np.random.Generator) -> int:
    return int(sample_categories(spec, rng, 1)[0])


def empirical_mean(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] == 0:
        raise ValueError("empirical_mean needs a non-empty K x B matrix")
    return P.sum(axis=1) / P.shape[1]


def empirical_covariance(P) -> np.ndarray:
    """Biased (1/B) covariance of the columns of ``P``."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] < 2:
        raise ValueError(f"empirical_covariance needs at least 2 columns, got shape {P.shape}")
    centered = P - P.mean(axis=1, keepdims=True)
    return centered @ centered.T / P.shape[1]


def empirical_mean_var(P: ad.Var) -> ad.Var:
    return ad.mean_columns(P)


def empirical_covariance_var(P: ad.Var) -> ad.Var:
    k, b = P.shape
    if b < 2:
        raise ValueError(f"empirical_covariance needs at least 2 columns, got shape {P.shape}")
    centered = P - ad.broadcast_column(ad.mean_columns(P), b)
    return ad.scale(centered @ ad.transpose(centered), 1.0 / b)


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))

"""Losses over probability matrices (K x B, one column per instance).

Labeled branch: cross-entropy against one-hot targets.  Unlabeled branch:
entropy and two-view consistency per instance, plus KL between the batch-mean
prediction and the prior and a Frobenius distance between the batch covariance
and the Multinoulli covariance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields, replace
from typing import Literal

import numpy as np

from ncdlab import autodiff as ad
from ncdlab.multinoulli import (
    MultinoulliSpec,
    empirical_covariance_var,
    target_covariance,
    target_mean,
)

NORM_DELTA = 1e-8
ENTROPY_WEIGHT = 1.0


@dataclass(frozen=True)
class LossWeights:
    ce: float = 1.0
    entropy: float = 1.0
    consistency: float = 1.0
    kl: float = 1.0
    var: float = 1.0
    unlabeled: float = 1.0
    schedule: Literal["fixed", "adaptive"] = "adaptive"

    def __post_init__(self):
        for f in fields(self):
            if f.name != "schedule" and getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be non-negative")
        if self.schedule not in ("fixed", "adaptive"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def weights_at_epoch(base: LossWeights, n_ep: int) -> LossWeights:
    """Epoch-dependent weights; ``fixed`` mode returns ``base`` untouched.

    In adaptive mode kl and var ramp linearly from 0.2, ce decays from 1.5 to a
    floor of 0.5 and entropy is pinned at 1.  A base weight of exactly zero
    switches its component off for ablations.
    """
    if n_ep < 0:
        raise ValueError("epoch must be non-negative")
    if base.schedule == "fixed":
        return base
    ramp = 0.2 + 0.5 * n_ep
    return replace(
        base,
        ce=(max(0.0, 1.0 - 0.01 * n_ep) + 0.5) if base.ce > 0 else 0.0,
        entropy=ENTROPY_WEIGHT if base.entropy > 0 else 0.0,
        kl=ramp if base.kl > 0 else 0.0,
        var=ramp if base.var > 0 else 0.0,
    )


def _check_same_shape(name, a: ad.Var, b: ad.Var):
    if a.shape != b.shape:
        raise ad.ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


def loss_ce(P_l, targets) -> ad.Var:
    """-(1/B) tr(Y^T log P)."""
    P_l = ad.as_var(P_l)
    Y = ad.as_var(targets, P_l.tape)
    _check_same_shape("loss_ce", P_l, Y)
    b = P_l.shape[1]
    return ad.scale(ad.trace(ad.transpose(Y) @ ad.log(P_l)), -1.0 / b)


def loss_entropy(P_u) -> ad.Var:
    """Mean Shannon entropy of the columns, -(1/B) tr(P^T log P)."""
    P_u = ad.as_var(P_u)
    b = P_u.shape[1]
    # tr(P^T log P) == sum(P * log P) without the B x B intermediate
    return ad.scale(ad.sum_all(ad.hadamard(P_u, ad.log(P_u))), -1.0 / b)


def loss_consistency(P_u, P_u_prime, delta: float = NORM_DELTA) -> ad.Var:
    """(1/B) ||P - P'||_F on column-aligned views."""
    P_u = ad.as_var(P_u)
    P_u_prime = ad.as_var(P_u_prime, P_u.tape)
    _check_same_shape("loss_consistency", P_u, P_u_prime)
    b = P_u.shape[1]
    return ad.scale(ad.frobenius_norm(P_u - P_u_prime, delta), 1.0 / b)


def loss_kl_mean(P_u, spec: MultinoulliSpec) -> ad.Var:
    """KL(y || mean column of P); coordinates where y is zero drop out."""
    P_u = ad.as_var(P_u)
    y = target_mean(spec)
    if P_u.shape[0] != y.size:
        raise ad.ShapeError(f"loss_kl_mean: P has {P_u.shape[0]} rows, prior has {y.size}")
    support = y > 0
    const = float(np.sum(y[support] * np.log(y[support])))
    yv = P_u.tape.constant(y.reshape(1, -1))
    cross = yv @ ad.log(ad.mean_columns(P_u))
    return ad.scale(ad.add(cross, P_u.tape.constant(-const)), -1.0)


def loss_covariance(P_u, spec: MultinoulliSpec, delta: float = NORM_DELTA) -> ad.Var:
    """||cov(P) - Sigma||_F with the biased 1/B estimator."""
    P_u = ad.as_var(P_u)
    sigma = target_covariance(spec)
    if P_u.shape[0] != sigma.shape[0]:
        raise ad.ShapeError(f"loss_covariance: P has {P_u.shape[0]} rows, prior has {sigma.shape[0]}")
    diff = empirical_covariance_var(P_u) - P_u.tape.constant(sigma)
    return ad.frobenius_norm(diff, delta)


@dataclass
class LossReport:
    """Component values and weighted branch totals for one train step."""

    epoch: int = 0
    step: int = 0
    ce: float = 0.0
    H: float = 0.0
    mse: float = 0.0
    kl: float = 0.0
    var: float = 0.0
    total_labeled: float = 0.0
    total_unlabeled: float = 0.0

    @property
    def total(self) -> float:
        return self.total_labeled + self.total_unlabeled

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in asdict(self).values())

    def rows(self) -> list[list]:
        """Two CSV rows, one per optimizer sub-step."""
        return [
            [self.epoch, self.step, "labeled", self.ce, 0.0, 0.0, 0.0, 0.0, self.total_labeled],
            [self.epoch, self.step, "unlabeled", 0.0, self.H, self.mse, self.kl, self.var, self.total_unlabeled],
        ]


HISTORY_HEADER = ["epoch", "step", "branch", "ce", "H", "mse", "kl", "var", "total"]


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def history_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for r in reports:
        for row in r.rows():
            w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def loss_unlabeled(P_u, P_u_prime, spec: MultinoulliSpec, weights: LossWeights):
    """Weighted unlabeled objective.  Returns ``(scalar Var, LossReport)``.

    Entropy, mean and covariance are taken over the 2B-column concatenation
    of both views; consistency is taken pairwise on aligned columns.
    """
    P_u = ad.as_var(P_u)
    P_u_prime = ad.as_var(P_u_prime, P_u.tape)
    _check_same_shape("loss_unlabeled", P_u, P_u_prime)
    both = ad.concat_columns(P_u, P_u_prime)

    parts = {
        "H": (weights.entropy, loss_entropy(both)),
        "mse": (weights.consistency, loss_consistency(P_u, P_u_prime)),
        "kl": (weights.kl, loss_kl_mean(both, spec)),
        "var": (weights.var, loss_covariance(both, spec)),
    }
    total = None
    for w, term in parts.values():
        weighted = ad.scale(term, w)
        total = weighted if total is None else total + weighted
    total = ad.scale(total, weights.unlabeled)
    report = LossReport(
        **{k: term.item() for k, (_, term) in parts.items()}, total_unlabeled=total.item()
    )
    return total, report

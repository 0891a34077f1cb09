"""Finite-difference checks of every loss through a fresh model."""

from __future__ import annotations

import numpy as np

from ncdlab import autodiff as ad
from ncdlab import model as mdl
from ncdlab.config import ExperimentConfig
from ncdlab.losses import (
    loss_ce,
    loss_consistency,
    loss_covariance,
    loss_entropy,
    loss_kl_mean,
    loss_unlabeled,
    weights_at_epoch,
)
from ncdlab.synthgen import sample_batch
from ncdlab.trainer import STREAM_INIT, make_dataset, stream

TOLERANCE = 1e-4
COMPONENTS = ("ce", "H", "mse", "kl", "var", "L_u")


def _head_fn(model, inputs, loss_of):
    """Scalar function of the head weight matrix, everything else frozen."""
    n = len(model.weights)

    def f(head: ad.Var) -> ad.Var:
        tape = head.tape
        params = [head if i == 2 * (n - 1) else tape.constant(p) for i, p in enumerate(model.parameters)]
        probs = [mdl.forward(model, x, params)[0] for x in inputs]
        return loss_of(*probs)

    return f


def loss_functions(config: ExperimentConfig, model, labeled, unlabeled, epoch: int = 0):
    spec = config.data.prior()
    w = weights_at_epoch(config.loss, epoch)
    u = unlabeled.views
    return {
        "ce": _head_fn(model, [labeled.views[0]], lambda P: loss_ce(P, labeled.targets)),
        "H": _head_fn(model, [u[0]], loss_entropy),
        "mse": _head_fn(model, u, loss_consistency),
        "kl": _head_fn(model, [u[0]], lambda P: loss_kl_mean(P, spec)),
        "var": _head_fn(model, [u[0]], lambda P: loss_covariance(P, spec)),
        "L_u": _head_fn(model, u, lambda P, Q: loss_unlabeled(P, Q, spec, w)[0]),
    }


def run_gradchecks(config: ExperimentConfig, seed: int | None = None, step: float = ad.FD_STEP):
    """Return ``[(component, max_rel_err), ...]`` at one random frozen batch."""
    seed = config.train.seed if seed is None else seed
    dataset = make_dataset(config.with_seed(seed))
    model = mdl.init(config.model_config(), stream(seed, STREAM_INIT))
    rng = np.random.default_rng([seed, 7])
    t = config.train
    labeled = sample_batch(dataset, "labeled", t.batch_labeled, config.augment, rng)
    unlabeled = sample_batch(dataset, "unlabeled", t.batch_unlabeled, config.augment, rng)
    head = model.weights[-1]
    return [
        (name, ad.grad_check(f, head, step))
        for name, f in loss_functions(config, model, labeled, unlabeled).items()
    ]

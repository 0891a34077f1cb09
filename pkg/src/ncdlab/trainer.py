"""Alternating labeled / unlabeled SGD loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ncdlab import autodiff as ad
from ncdlab import model as mdl
from ncdlab.config import ExperimentConfig
from ncdlab.losses import LossReport, LossWeights, loss_ce, loss_unlabeled, weights_at_epoch
from ncdlab.synthgen import LabeledBatch, SyntheticDataset, UnlabeledBatch, generate, sample_batch

log = logging.getLogger(__name__)

# rng stream ids, combined with the run seed
STREAM_DATA, STREAM_INIT, STREAM_LABELED, STREAM_UNLABELED = 0, 1, 2, 3


class NonFiniteLoss(ArithmeticError):
    """Carries the offending batch so the caller can dump it."""

    def __init__(self, message: str, batch=None):
        super().__init__(message)
        self.batch = batch


def stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream_id])


@dataclass
class TrainState:
    config: ExperimentConfig
    model: mdl.MlpModel
    epoch: int = 0
    step: int = 0
    rng_labeled: np.random.Generator | None = None
    rng_unlabeled: np.random.Generator | None = None
    history: list[LossReport] = field(default_factory=list)

    @property
    def lr(self) -> float:
        t = self.config.train
        return t.lr * t.lr_decay_factor ** (self.epoch // t.lr_decay_every)

    @property
    def weights(self) -> LossWeights:
        return weights_at_epoch(self.config.loss, self.epoch)


def _clip(grads, max_norm):
    norm = ad.global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        return [g * (max_norm / norm) for g in grads]
    return grads


def _descend(state: TrainState, loss: ad.Var, params, batch) -> None:
    if not np.isfinite(loss.item()):
        raise NonFiniteLoss(f"non-finite loss at epoch {state.epoch} step {state.step}", batch)
    all_grads = loss.tape.backward(loss)
    grads = _clip([all_grads[p.index] for p in params], state.config.train.clip_norm)
    mdl.sgd_step(state.model, grads, state.lr)


def train_step(state: TrainState, labeled: LabeledBatch, unlabeled: UnlabeledBatch) -> LossReport:
    """One labeled SGD sub-step followed by one unlabeled sub-step."""
    w = state.weights
    spec = state.config.data.prior()

    tape = ad.Tape()
    params = state.model.attach(tape)
    x = np.concatenate(labeled.views, axis=1)
    P_l, _ = mdl.forward(state.model, x, params)
    ce = loss_ce(P_l, np.concatenate([labeled.targets, labeled.targets], axis=1))
    total_l = ad.scale(ce, w.ce)
    _descend(state, total_l, params, labeled)

    tape = ad.Tape()
    params = state.model.attach(tape)
    P_u, _ = mdl.forward(state.model, unlabeled.views[0], params)
    P_u2, _ = mdl.forward(state.model, unlabeled.views[1], params)
    total_u, report = loss_unlabeled(P_u, P_u2, spec, w)
    _descend(state, total_u, params, unlabeled)

    report.ce = ce.item()
    report.total_labeled = total_l.item()
    report.epoch, report.step = state.epoch, state.step
    state.history.append(report)
    state.step += 1
    return report


@dataclass
class TrainResult:
    model: mdl.MlpModel
    dataset: SyntheticDataset
    history: list[LossReport]
    epochs: list[dict]


EPOCH_HEADER = ["epoch", "lr", "lambda_ce", "lambda_kl", "lambda_var", "mean_total_loss"]


def make_dataset(config: ExperimentConfig) -> SyntheticDataset:
    d = config.data
    return generate(
        d.dim, d.prior(), d.n_labeled, d.n_unlabeled, d.separation, d.scale, seed=config.train.seed
    )


def train(
    config: ExperimentConfig,
    dataset: SyntheticDataset | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Run ``epochs x steps_per_epoch`` train steps.  Deterministic per seed."""
    config.validate()
    seed = config.train.seed
    if dataset is None:
        dataset = make_dataset(config)
    state = TrainState(
        config,
        mdl.init(config.model_config(), stream(seed, STREAM_INIT)),
        rng_labeled=stream(seed, STREAM_LABELED),
        rng_unlabeled=stream(seed, STREAM_UNLABELED),
    )
    t = config.train
    epochs = []
    for epoch in range(t.epochs):
        state.epoch = epoch
        w, lr = state.weights, state.lr
        totals = []
        for _ in range(t.steps_per_epoch):
            lb = sample_batch(dataset, "labeled", t.batch_labeled, config.augment, state.rng_labeled)
            ub = sample_batch(dataset, "unlabeled", t.batch_unlabeled, config.augment, state.rng_unlabeled)
            totals.append(train_step(state, lb, ub).total)
        row = {
            "epoch": epoch,
            "lr": lr,
            "lambda_ce": w.ce,
            "lambda_kl": w.kl,
            "lambda_var": w.var,
            "mean_total_loss": float(np.mean(totals)),
        }
        epochs.append(row)
        log.debug("epoch %d done: %s", epoch, row)
        if on_epoch:
            on_epoch(row)
    return TrainResult(state.model, dataset, state.history, epochs)

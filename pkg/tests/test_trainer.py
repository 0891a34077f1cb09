import dataclasses

import numpy as np
import pytest

from ncdlab import model as mdl
from ncdlab.config import DataConfig, ExperimentConfig, NetConfig, TrainConfig
from ncdlab.losses import NORM_DELTA, LossWeights, history_csv, weights_at_epoch
from ncdlab.synthgen import AugmentationPolicy, UnlabeledBatch, sample_batch
from ncdlab.trainer import (
    STREAM_INIT,
    NonFiniteLoss,
    TrainState,
    make_dataset,
    stream,
    train,
    train_step,
)

COMPONENTS = ("ce", "H", "mse", "kl", "var")

SMALL = ExperimentConfig(
    data=DataConfig(dim=6, n_labeled_classes=2, p_u=(0.5, 0.5), n_labeled=200, n_unlabeled=200,
                    n_test_labeled=100, n_test_unlabeled=100, separation=10.0),
    net=NetConfig(hidden=(32,), embedding_dim=8),
    train=TrainConfig(epochs=20, steps_per_epoch=10, batch_labeled=32, batch_unlabeled=32),
)


def _state(cfg, seed=0):
    return TrainState(cfg, mdl.init(cfg.model_config(), stream(seed, STREAM_INIT)),
                      rng_labeled=stream(seed, 2), rng_unlabeled=stream(seed, 3))


def _batches(cfg, ds, rng):
    t = cfg.train
    return (sample_batch(ds, "labeled", t.batch_labeled, cfg.augment, rng),
            sample_batch(ds, "unlabeled", t.batch_unlabeled, cfg.augment, rng))


def test_all_weights_zero_leaves_parameters_unchanged():
    cfg = dataclasses.replace(SMALL, loss=LossWeights(0, 0, 0, 0, 0, 0))
    state = _state(cfg)
    before = [p.copy() for p in state.model.parameters]
    train_step(state, *_batches(cfg, make_dataset(cfg), np.random.default_rng(0)))
    assert all(np.array_equal(a, b) for a, b in zip(before, state.model.parameters))
    assert state.step == 1 and len(state.history) == 1


def test_single_labeled_class_ce_decreases_on_fixed_batch():
    cfg = dataclasses.replace(
        SMALL,
        data=dataclasses.replace(SMALL.data, n_labeled_classes=1),
        loss=LossWeights(1, 0, 0, 0, 0, 0),
    )
    state = _state(cfg)
    lb, ub = _batches(cfg, make_dataset(cfg), np.random.default_rng(1))
    ce = [train_step(state, lb, ub).ce for _ in range(50)]
    assert all(b < a for a, b in zip(ce, ce[1:]))


def _epoch_means(history, epoch):
    rows = [r for r in history if r.epoch == epoch]
    return {c: np.mean([getattr(r, c) for r in rows]) for c in COMPONENTS}


@pytest.mark.slow
def test_components_decrease_over_twenty_epochs():
    drops = {c: [] for c in COMPONENTS}
    for seed in range(5):
        res = train(SMALL.with_seed(seed))
        first, last = _epoch_means(res.history, 0), _epoch_means(res.history, 19)
        for c in COMPONENTS:
            drops[c].append(first[c] - last[c])
    for c in COMPONENTS:
        assert np.median(drops[c]) > 0, (c, drops[c])


def test_zero_epochs_returns_initial_model():
    cfg = dataclasses.replace(SMALL, train=dataclasses.replace(SMALL.train, epochs=0, seed=4))
    res = train(cfg)
    init = mdl.init(cfg.model_config(), stream(4, STREAM_INIT))
    assert mdl.checkpoint_text(res.model) == mdl.checkpoint_text(init)
    assert res.history == []


def test_same_seed_bit_identical():
    cfg = dataclasses.replace(SMALL, train=dataclasses.replace(SMALL.train, epochs=3))
    a, b = train(cfg), train(cfg)
    assert mdl.checkpoint_text(a.model) == mdl.checkpoint_text(b.model)
    assert history_csv(a.history) == history_csv(b.history)
    c = train(cfg.with_seed(1))
    assert mdl.checkpoint_text(c.model) != mdl.checkpoint_text(a.model)


def test_logged_lambdas_follow_schedule():
    cfg = dataclasses.replace(SMALL, train=dataclasses.replace(SMALL.train, epochs=4, steps_per_epoch=2,
                                                               lr_decay_every=2))
    seen = []
    train(cfg, on_epoch=seen.append)
    for row in seen:
        w = weights_at_epoch(cfg.loss, row["epoch"])
        assert (row["lambda_ce"], row["lambda_kl"], row["lambda_var"]) == (w.ce, w.kl, w.var)
        assert row["lr"] == cfg.train.lr * 0.5 ** (row["epoch"] // 2)
    assert [r["lambda_kl"] for r in seen] == [0.2, 0.7, 1.2, 1.7]


def test_history_counts_and_epochs():
    cfg = dataclasses.replace(SMALL, train=dataclasses.replace(SMALL.train, epochs=3, steps_per_epoch=4))
    res = train(cfg)
    assert len(res.history) == 12
    assert [r.epoch for r in res.history] == [0] * 4 + [1] * 4 + [2] * 4
    assert [r.step for r in res.history] == list(range(12))


def test_label_firewall(monkeypatch):
    """Training must run with the hidden ids unreadable."""
    cfg = dataclasses.replace(SMALL, train=dataclasses.replace(SMALL.train, epochs=1, steps_per_epoch=2))
    ds = make_dataset(cfg)

    def boom(*_a, **_k):
        raise AssertionError("hidden labels read during training")

    monkeypatch.setattr(type(ds), "hidden_labels", boom)
    object.__setattr__(ds, "_hidden", None)
    train(cfg, dataset=ds)
    assert {f.name for f in dataclasses.fields(UnlabeledBatch)} == {"views", "indices"}


def test_non_finite_loss_aborts_with_batch():
    cfg = dataclasses.replace(SMALL, train=dataclasses.replace(SMALL.train, epochs=1))
    state = _state(cfg)
    lb, ub = _batches(cfg, make_dataset(cfg), np.random.default_rng(0))
    bad = dataclasses.replace(lb, views=(lb.views[0] * np.nan, lb.views[1]))
    with pytest.raises(NonFiniteLoss) as info:
        train_step(state, bad, ub)
    assert info.value.batch is bad


def test_augment_policy_reaches_sampler():
    cfg = dataclasses.replace(SMALL, augment=AugmentationPolicy.identity(),
                              train=dataclasses.replace(SMALL.train, epochs=1, steps_per_epoch=1))
    # identical views: only the norm smoothing floor remains
    assert train(cfg).history[0].mse == pytest.approx(NORM_DELTA / 32, rel=1e-9)

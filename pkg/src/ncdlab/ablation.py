"""One-factor-at-a-time ablation grid around a base config."""

from __future__ import annotations

import csv
import dataclasses as dc
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ncdlab.config import ExperimentConfig
from ncdlab.evaluation import evaluate, mean_sd
from ncdlab.model import PRESETS
from ncdlab.synthgen import AugmentationPolicy, test_split
from ncdlab.trainer import train

log = logging.getLogger(__name__)

AXES = ("loss-components", "distribution", "augmentation", "split", "model")
SEEDS = (0, 1, 2)

_OFF = dict(ce=0.0, entropy=0.0, consistency=0.0, kl=0.0, var=0.0)

# name -> weights switched on; everything else off
LOSS_CELLS = {
    "ce_only": ("ce",),
    "H_only": ("entropy",),
    "mse_only": ("consistency",),
    "var_only": ("var",),
    "kl_only": ("kl",),
    "kl+var": ("kl", "var"),
    "no_var": ("ce", "entropy", "consistency", "kl"),
    "no_kl": ("ce", "entropy", "consistency", "var"),
    "all": ("ce", "entropy", "consistency", "kl", "var"),
}

SKEWED_PRIORS = {
    "uniform5": (1 / 5,) * 5,
    "1/3,(1/6)x4": (1 / 3,) + (1 / 6,) * 4,
    "3/7,(1/7)x4": (3 / 7,) + (1 / 7,) * 4,
    "1/2,(1/8)x4": (1 / 2,) + (1 / 8,) * 4,
}


@dataclass(frozen=True)
class Cell:
    axis: str
    name: str
    config: ExperimentConfig


def with_losses(cfg: ExperimentConfig, active) -> ExperimentConfig:
    on = {k: getattr(cfg.loss, k) or 1.0 for k in active}
    return dc.replace(cfg, loss=dc.replace(cfg.loss, **{**_OFF, **on}))


def with_prior(cfg: ExperimentConfig, p_u, n_labeled_classes=None) -> ExperimentConfig:
    L = cfg.data.n_labeled_classes if n_labeled_classes is None else n_labeled_classes
    data = dc.replace(cfg.data, p_u=tuple(p_u), n_labeled_classes=L)
    train_ = dc.replace(cfg.train, batch_unlabeled=max(cfg.train.batch_unlabeled, 10 * len(p_u)))
    return dc.replace(cfg, data=data, train=train_)


def cells_for(base: ExperimentConfig, axes) -> list[Cell]:
    unknown = [a for a in axes if a not in AXES]
    if unknown:
        raise ValueError(f"unknown ablation axes {unknown}; choose from {list(AXES)}")
    cells = [Cell("baseline", "baseline", base)]
    L, U = base.data.n_labeled_classes, base.data.n_novel_classes
    for axis in axes:
        if axis == "loss-components":
            cells += [Cell(axis, n, with_losses(base, on)) for n, on in LOSS_CELLS.items()]
        elif axis == "distribution":
            cells += [Cell(axis, n, with_prior(base, p)) for n, p in SKEWED_PRIORS.items()]
        elif axis == "augmentation":
            cells += [
                Cell(axis, "strong", dc.replace(base, augment=AugmentationPolicy.strong())),
                Cell(axis, "weak", dc.replace(base, augment=AugmentationPolicy.weak())),
            ]
        elif axis == "split":
            for dl in (1, 0, -1):
                l, u = L + dl, U - dl
                if l >= 1 and u >= 1:
                    cells.append(Cell(axis, f"{l}/{u}", with_prior(base, (1 / u,) * u, l)))
        elif axis == "model":
            cells += [
                Cell(axis, name, dc.replace(base, net=dc.replace(base.net, hidden=widths)))
                for name, widths in PRESETS.items()
            ]
    return cells


@dataclass
class SeedResult:
    seed: int
    labeled_acc: float | None = None
    novel_acc: float | None = None
    mean_tv: float | None = None
    error: str | None = None


def run_one(config: ExperimentConfig) -> SeedResult:
    """Train and evaluate a single (config, seed); failures are captured, not raised."""
    seed = config.train.seed
    try:
        result = train(config)
        d = config.data
        report = evaluate(result.model, test_split(result.dataset, d.n_test_labeled, d.n_test_unlabeled, seed))
        return SeedResult(seed, report.labeled_acc, report.novel_acc, report.mean_tv)
    except Exception as exc:  # one bad cell must not stop the grid
        return SeedResult(seed, error=f"{type(exc).__name__}: {exc}")


@dataclass
class CellResult:
    cell: Cell
    seeds: list[SeedResult] = field(default_factory=list)

    def ok(self) -> list[SeedResult]:
        return [s for s in self.seeds if s.error is None]

    def row(self) -> list:
        ok = self.ok()
        acc_m, acc_s = mean_sd([s.labeled_acc for s in ok]) if ok else (float("nan"),) * 2
        nacc_m, nacc_s = mean_sd([s.novel_acc for s in ok]) if ok else (float("nan"),) * 2
        return [
            self.cell.axis,
            self.cell.name,
            f"{acc_m:.6f}",
            f"{acc_s:.6f}",
            f"{nacc_m:.6f}",
            f"{nacc_s:.6f}",
            ";".join(f"{s.novel_acc:.6f}" for s in ok),
            len(ok),
            "; ".join(s.error for s in self.seeds if s.error),
        ]


GRID_HEADER = [
    "axis", "cell", "labeled_acc_mean", "labeled_acc_sd", "acc_mean", "acc_sd", "acc_per_seed", "n_ok", "errors",
]


def run_grid(base: ExperimentConfig, axes=(), seeds=SEEDS, workers: int = 1) -> list[CellResult]:
    cells = cells_for(base, axes)
    jobs = [(ci, c.config.with_seed(s)) for ci, c in enumerate(cells) for s in seeds]
    results = [CellResult(c) for c in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(run_one, [cfg for _, cfg in jobs]))
    else:
        outs = [run_one(cfg) for _, cfg in jobs]
    for (ci, _), out in zip(jobs, outs):
        results[ci].seeds.append(out)
        if out.error:
            log.warning("cell %s/%s seed %d failed: %s", cells[ci].axis, cells[ci].name, out.seed, out.error)
    return results


def grid_csv(results: list[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_HEADER)
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()

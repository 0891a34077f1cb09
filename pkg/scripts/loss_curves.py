"""Train once and chart the per-epoch loss components.

    python scripts/loss_curves.py --seed 0 --out runs/curves
"""

import argparse
from pathlib import Path

import numpy as np

from ncdlab import plot
from ncdlab.config import ExperimentConfig, load_config
from ncdlab.losses import history_csv
from ncdlab.trainer import train

COMPONENTS = ("ce", "H", "mse", "kl", "var")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/curves")
    args = ap.parse_args()
    cfg = (load_config(args.config) if args.config else ExperimentConfig()).with_seed(args.seed)

    res = train(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = history_csv(res.history)
    (out / "history.csv").write_text(text)
    (out / "history.svg").write_text(plot.history_chart(text))

    epochs = sorted({r.epoch for r in res.history})
    for ep in (epochs[0], epochs[len(epochs) // 2], epochs[-1]):
        rows = [r for r in res.history if r.epoch == ep]
        means = {c: np.mean([getattr(r, c) for r in rows]) for c in COMPONENTS}
        print(f"epoch {ep:4d}: " + "  ".join(f"{c}={v:.4f}" for c, v in means.items()))


if __name__ == "__main__":
    main()

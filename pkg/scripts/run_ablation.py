"""Run ablation axes and write grid CSV plus bar chart.

    python scripts/run_ablation.py --axes loss-components distribution --out runs/ablation
"""

import argparse
from pathlib import Path

from ncdlab import ablation, plot
from ncdlab.config import ExperimentConfig, load_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--axes", nargs="*", default=["loss-components"], choices=ablation.AXES)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(ablation.SEEDS))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    base = load_config(args.config) if args.config else ExperimentConfig()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = ablation.run_grid(base, args.axes, seeds=args.seeds, workers=args.workers)
    text = ablation.grid_csv(results)
    (out / "grid.csv").write_text(text)
    (out / "grid.svg").write_text(plot.grid_chart(text))
    print(text, end="")


if __name__ == "__main__":
    main()

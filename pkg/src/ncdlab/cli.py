"""``ncdlab`` command line: generate | train | ablate | gradcheck | plot.

Exit codes: 0 success, 2 config or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ncdlab import ablation, checks, plot
from ncdlab.config import ConfigError, ExperimentConfig, load_config
from ncdlab.evaluation import dump_embeddings, evaluate
from ncdlab.losses import history_csv
from ncdlab.model import NonFiniteGradient, save_checkpoint
from ncdlab.synthgen import PlacementError, test_split, write_csv
from ncdlab.trainer import EPOCH_HEADER, NonFiniteLoss, make_dataset, train

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("ncdlab")


@dataclass
class RunManifest:
    config_hash: str
    seeds: list[int]
    files: dict[str, str] = field(default_factory=dict)  # file name -> "hash/seed"
    status: dict[str, str] = field(default_factory=dict)

    def write(self, out: Path) -> None:
        (out / "manifest.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _log_mode() -> str:
    mode = os.environ.get("NCDLAB_LOG", "info").lower()
    return mode if mode in LOG_LEVELS else "info"


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    ds = make_dataset(cfg)
    write_csv(ds, out / "dataset.csv")
    tag = f"{cfg.digest()}/{cfg.train.seed}"
    RunManifest(cfg.digest(), [cfg.train.seed], {"dataset.csv": tag}, {tag: "ok"}).write(out)
    print(f"wrote {len(ds)} instances to {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    quiet = _log_mode() == "quiet"
    if not quiet:
        print(",".join(EPOCH_HEADER))

    def progress(row):
        if not quiet:
            print(",".join(repr(v) if isinstance(v, float) else str(v) for v in row.values()), flush=True)

    tag = f"{cfg.digest()}/{cfg.train.seed}"
    manifest = RunManifest(cfg.digest(), [cfg.train.seed])
    try:
        result = train(cfg, on_epoch=progress)
    except (NonFiniteLoss, NonFiniteGradient) as exc:
        batch = getattr(exc, "batch", None)
        if batch is not None:
            np.savetxt(out / "nonfinite_batch.csv", np.concatenate(batch.views, axis=1).T, delimiter=",")
            manifest.files["nonfinite_batch.csv"] = tag
        manifest.status[tag] = f"numerical failure: {exc}"
        manifest.write(out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    d = cfg.data
    split = test_split(result.dataset, d.n_test_labeled, d.n_test_unlabeled, cfg.train.seed)
    report = evaluate(result.model, split)
    outputs = {
        "config.ini": cfg.to_text(),
        "history.csv": history_csv(result.history),
        "eval.csv": report.to_csv(),
        "eval.txt": report.text(),
        "confusion.csv": report.confusion_csv(),
        "embeddings.csv": dump_embeddings(result.model, split),
    }
    for name, text in outputs.items():
        (out / name).write_text(text)
    save_checkpoint(result.model, out / "checkpoint.txt")
    manifest.files = {name: tag for name in [*outputs, "checkpoint.txt"]}
    manifest.status[tag] = "ok"
    manifest.write(out)
    if not quiet:
        print(report.text(), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    axes = [a.strip() for a in (args.axes or "").split(",") if a.strip()]
    try:
        ablation.cells_for(cfg, axes)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    seeds = [args.seed] if args.seed is not None else list(ablation.SEEDS)
    results = ablation.run_grid(cfg, axes, seeds=seeds, workers=args.workers)
    (out / "grid.csv").write_text(ablation.grid_csv(results))
    manifest = RunManifest(cfg.digest(), seeds, {"grid.csv": cfg.digest()})
    for r in results:
        for s in r.seeds:
            key = f"{r.cell.config.digest()}/{s.seed} ({r.cell.axis}:{r.cell.name})"
            manifest.status[key] = "ok" if s.error is None else s.error
    manifest.write(out)
    if _log_mode() != "quiet":
        print(ablation.grid_csv(results), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    rows = checks.run_gradchecks(cfg)
    ok = True
    print("component,max_rel_err,status")
    for name, err in rows:
        passed = bool(np.isfinite(err) and err < checks.TOLERANCE)
        ok &= passed
        print(f"{name},{err:.3e},{'pass' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_plot(args) -> int:
    try:
        text = Path(args.csv).read_text()
        svg = plot.chart(text)
    except (OSError, plot.PlotInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    target = Path(args.out or Path(args.csv).with_suffix(".svg"))
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncdlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", help="INI experiment config (defaults to the reference config)")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, help="override train.seed")

    common(sub.add_parser("generate", help="write the synthetic dataset as CSV"))
    common(sub.add_parser("train", help="train, evaluate and write artifacts"))
    ab = sub.add_parser("ablate", help="run the ablation grid")
    common(ab)
    ab.add_argument("--axes", default="", help=f"comma list from {','.join(ablation.AXES)}")
    ab.add_argument("--workers", type=int, default=1)
    common(sub.add_parser("gradcheck", help="finite-difference check of every loss"))
    pl = sub.add_parser("plot", help="SVG chart of a history or grid CSV")
    pl.add_argument("csv")
    pl.add_argument("--out", help="output .svg path")
    return p


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVELS[_log_mode()], format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, PlacementError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

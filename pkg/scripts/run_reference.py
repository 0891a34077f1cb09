"""Train the reference config on three seeds and print test accuracies.

    python scripts/run_reference.py [--config configs/reference.ini] [--seeds 0 1 2]
"""

import argparse
import time

from ncdlab.config import ExperimentConfig, load_config
from ncdlab.evaluation import evaluate, mean_sd
from ncdlab.synthgen import test_split
from ncdlab.trainer import train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()
    base = load_config(args.config) if args.config else ExperimentConfig()

    accs, naccs = [], []
    print("seed,labeled_acc,novel_acc,leakage,mean_tv,seconds")
    for seed in args.seeds:
        cfg = base.with_seed(seed)
        t0 = time.perf_counter()
        res = train(cfg)
        d = cfg.data
        rep = evaluate(res.model, test_split(res.dataset, d.n_test_labeled, d.n_test_unlabeled, seed))
        accs.append(rep.labeled_acc)
        naccs.append(rep.novel_acc)
        print(f"{seed},{rep.labeled_acc:.4f},{rep.novel_acc:.4f},{rep.leakage_rate:.4f},"
              f"{rep.mean_tv:.4f},{time.perf_counter() - t0:.1f}")
    print("labeled acc %.4f +- %.4f, novel ACC %.4f +- %.4f" % (*mean_sd(accs), *mean_sd(naccs)))


if __name__ == "__main__":
    main()

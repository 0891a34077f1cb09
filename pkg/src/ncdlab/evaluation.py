"""Top-1 accuracy, Hungarian-matched clustering accuracy and diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ncdlab.multinoulli import empirical_mean, target_mean, total_variation


def linear_assignment(cost) -> np.ndarray:
    """Min-cost perfect matching on a square matrix; returns ``col`` for each row.

    Shortest augmenting path with row/column potentials, O(n^3).
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.ndim != 2 or cost.shape[1] != n:
        raise ValueError(f"assignment needs a square matrix, got shape {cost.shape}")
    INF = np.inf
    # 1-based arrays; index 0 is the virtual root column
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)  # match[col] = row
    way = np.zeros(n + 1, dtype=int)
    for row in range(1, n + 1):
        match[0] = row
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta, j1 = INF, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assign = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        assign[match[j] - 1] = j - 1
    return assign


@dataclass(frozen=True)
class AssignmentResult:
    """``mapping[j]`` is the class matched to neuron ``offset + j``."""

    mapping: np.ndarray
    matched: int
    total: int
    offset: int = 0

    @property
    def acc(self) -> float:
        return self.matched / self.total if self.total else 0.0

    def neuron_to_class(self) -> dict[int, int]:
        return {self.offset + j: self.offset + int(c) for j, c in enumerate(self.mapping)}


def hungarian_match(confusion, offset: int = 0, total: int | None = None) -> AssignmentResult:
    """Permutation maximizing matched counts in ``confusion[true, predicted]``.

    ``total`` defaults to the confusion sum; pass a larger value when some
    instances were discarded before building the matrix.
    """
    c = np.asarray(confusion)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {c.shape}")
    if np.any(c < 0):
        raise ValueError("confusion counts must be non-negative")
    # rows of the cost are predicted neurons, columns are true classes
    cost = (c.max() if c.size else 0) - c.T
    mapping = linear_assignment(cost)
    matched = int(sum(c[mapping[j], j] for j in range(c.shape[0])))
    n = int(c.sum()) if total is None else int(total)
    return AssignmentResult(mapping, matched, n, offset)


def cluster_acc(y_true, y_pred, n: int | None = None) -> float:
    """Best-permutation accuracy of integer predictions in ``[0, n)``."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    n = n or int(max(y_true.max(), y_pred.max()) + 1)
    conf = np.zeros((n, n), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return hungarian_match(conf).acc


@dataclass
class EvalReport:
    labeled_acc: float
    novel_acc: float
    leakage_rate: float
    confusion: np.ndarray  # K x K, true class x argmax neuron
    assignment: AssignmentResult
    novel_mean: np.ndarray
    mean_kl: float
    mean_tv: float
    n_labeled: int
    n_novel: int

    CSV_FIELDS = ("labeled_acc", "novel_acc", "leakage_rate", "mean_kl", "mean_tv", "n_labeled", "n_novel")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(self, f) for f in self.CSV_FIELDS)])
        return buf.getvalue()

    def confusion_csv(self) -> str:
        k = self.confusion.shape[0]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true_class"] + [f"n{j}" for j in range(k)])
        for i, row in enumerate(self.confusion):
            w.writerow([i] + [int(x) for x in row])
        return buf.getvalue()

    def text(self) -> str:
        mapping = ", ".join(f"n{n}->c{c}" for n, c in self.assignment.neuron_to_class().items())
        return "\n".join([
            f"labeled top-1 accuracy : {self.labeled_acc:.4f}  (n={self.n_labeled})",
            f"novel clustering ACC   : {self.novel_acc:.4f}  (n={self.n_novel})",
            f"novel->labeled leakage : {self.leakage_rate:.4f}",
            f"neuron matching        : {mapping}",
            "novel mean prediction  : " + " ".join(f"{x:.3f}" for x in self.novel_mean),
            f"KL(prior || mean)      : {self.mean_kl:.5f}",
            f"TV(prior, mean)        : {self.mean_tv:.5f}",
            "",
        ])


def _proba(model, x):
    return np.asarray(model.predict_proba(np.asarray(x).T))


def evaluate(model, split) -> EvalReport:
    """Score ``model`` (anything with ``predict_proba(d x B) -> K x B``) on a test split.

    Novel instances whose argmax lands on a labeled neuron count as errors:
    they stay in the ACC denominator but are left out of the matching.
    """
    spec = split.spec
    L, U, K = spec.n_labeled, spec.n_novel, spec.n_classes
    if len(split.unlabeled_x) == 0 or len(split.labeled_x) == 0:
        raise ValueError("evaluation needs both labeled and novel test instances")
    confusion = np.zeros((K, K), dtype=np.int64)

    P_l = _proba(model, split.labeled_x)
    pred_l = P_l.argmax(axis=0)  # argmax breaks ties by lowest index
    np.add.at(confusion, (split.labeled_y, pred_l), 1)
    labeled_acc = float(np.mean(pred_l == split.labeled_y))

    P_u = _proba(model, split.unlabeled_x)
    pred_u = P_u.argmax(axis=0)
    hidden = split.hidden_labels()
    np.add.at(confusion, (hidden, pred_u), 1)
    leak = pred_u < L
    assignment = hungarian_match(confusion[L:, L:], offset=L, total=len(hidden))

    mean = empirical_mean(P_u)
    y = target_mean(spec)
    support = y > 0
    kl = float(np.sum(y[support] * (np.log(y[support]) - np.log(np.maximum(mean[support], 1e-12)))))
    return EvalReport(
        labeled_acc=labeled_acc,
        novel_acc=assignment.acc,
        leakage_rate=float(leak.mean()),
        confusion=confusion,
        assignment=assignment,
        novel_mean=mean,
        mean_kl=kl,
        mean_tv=total_variation(mean, y),
        n_labeled=len(pred_l),
        n_novel=len(pred_u),
    )


def dump_embeddings(model, dataset) -> str:
    """CSV rows ``split,true_class,pred_neuron,z0..`` for every instance."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header_written = False
    for split, xs, ys in (
        ("labeled", dataset.labeled_x, dataset.labeled_y),
        ("unlabeled", dataset.unlabeled_x, dataset.hidden_labels()),
    ):
        if len(xs) == 0:
            continue
        Z = np.asarray(model.embed(xs.T))
        pred = _proba(model, xs).argmax(axis=0)
        if not header_written:
            w.writerow(["split", "true_class", "pred_neuron"] + [f"z{i}" for i in range(Z.shape[0])])
            header_written = True
        for i in range(len(xs)):
            w.writerow([split, int(ys[i]), int(pred[i])] + [f"{v:.17g}" for v in Z[:, i]])
    return buf.getvalue()


def mean_sd(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0

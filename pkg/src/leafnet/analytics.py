"""Evaluation artifacts: confusion matrices, penultimate features, exact t-SNE,
cluster statistics and CSV export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericError
from .model import Model, model_forward
from .rng import STREAM_TSNE, Pcg32
from .train import EpochRecord

# --------------------------------------------------------------------------- confusion matrix


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class
    class_names: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total


def confusion_matrix(predictions: Sequence[int], labels: Sequence[int], k: int,
                     class_names: Sequence[str] = ()) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1 or len(pred) == 0:
        raise ValueError("predictions and labels must be equal-length, non-empty sequences")
    for name, arr in (("prediction", pred), ("label", true)):
        if arr.min() < 0 or arr.max() >= k:
            raise ValueError(f"{name} outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts, list(class_names))


def predictions_for(model: Model, dataset, batch_size: int = 64) -> np.ndarray:
    out = []
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        out.append(np.argmax(model_forward(model, dataset.images(idx), "eval").logits, axis=1))
    return np.concatenate(out)


def extract_features(model: Model, dataset, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Penultimate activations (the input of the softmax output layer), one row per sample."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rows = []
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        rows.append(model_forward(model, dataset.images(idx), "eval").features)
    return np.concatenate(rows, axis=0), np.asarray(dataset.labels)


# --------------------------------------------------------------------------- t-SNE


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250
    init_std: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.perplexity < 2:
            raise ValueError("perplexity must be >= 2")
        if self.iterations < 250:
            raise ValueError("iterations must be >= 250")

    def effective_perplexity(self, n: int) -> float:
        return min(self.perplexity, (n - 1) / 3.0)


@dataclass
class EmbeddingProjection:
    points: np.ndarray
    labels: np.ndarray | None
    kl_trace: list[float]
    kl_iterations: list[int]


def squared_distances(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _row_entropy_bits(d: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = -d * beta[:, None]
    np.fill_diagonal(logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.sum(np.where(p > 0, p * np.log2(p), 0.0), axis=1)
    return p, h


def conditional_affinities(x: np.ndarray, perplexity: float, tol_bits: float = 1e-5,
                           max_iter: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Row-conditional p(j|i) with per-row Gaussian precision found by bisection.

    Returns ``(p_cond, beta)`` with ``beta = 1 / (2 sigma^2)``.
    """
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points")
    # n - 1 neighbours cannot reach a perplexity above n - 1; the usual (n - 1) / 3
    # cap is applied by TsneConfig.effective_perplexity
    if not 1.0 <= perplexity <= n - 1:
        raise ValueError(f"perplexity {perplexity} is outside [1, n - 1] = [1, {n - 1}]")
    d = squared_distances(x)
    if not np.any(d > 0):
        raise NumericError("all points are identical; affinities are undefined")
    target = math.log2(perplexity)
    off = d[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    scale = np.where(off.mean(axis=1) > 0, off.mean(axis=1), 1.0)
    beta = 1.0 / scale
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    for _ in range(max_iter):
        p, h = _row_entropy_bits(d, beta)
        diff = h - target
        if np.all(np.abs(diff) < tol_bits):
            break
        too_flat = diff > 0  # entropy too high: sharpen
        lo = np.where(too_flat, beta, lo)
        hi = np.where(too_flat, hi, beta)
        beta = np.where(np.isinf(hi), beta * 2.0, (lo + hi) / 2.0)
    p, _ = _row_entropy_bits(d, beta)
    return p, beta


def perplexity_affinities(x: np.ndarray, perplexity: float, tol_bits: float = 1e-5) -> np.ndarray:
    """Symmetrized joint affinities P = (P_cond + P_cond^T) / 2n."""
    p_cond, _ = conditional_affinities(x, perplexity, tol_bits)
    n = len(p_cond)
    return (p_cond + p_cond.T) / (2.0 * n)


def row_perplexities(p_cond: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.sum(np.where(p_cond > 0, p_cond * np.log2(p_cond), 0.0), axis=1)
    return 2.0 ** h


def _student_t(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-12)
    return num, q


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tsne_embed(p: np.ndarray, config: TsneConfig = TsneConfig(), labels=None) -> EmbeddingProjection:
    """Exact t-SNE on a joint affinity matrix.

    Gradient descent with momentum and per-coordinate adaptive gains; P is
    multiplied by the early-exaggeration factor for the first iterations. KL(P||Q)
    against the unexaggerated P is recorded every 50 iterations.
    """
    p = np.asarray(p, dtype=np.float64)
    n = len(p)
    rng = Pcg32(config.seed, STREAM_TSNE)
    y = rng.normal_array(n * 2).reshape(n, 2) * config.init_std
    step = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_trace, kl_iters = [], []
    for it in range(config.iterations):
        p_use = p * config.early_exaggeration if it < config.exaggeration_iters else p
        num, q = _student_t(y)
        w = (p_use - q) * num
        grad = 4.0 * (np.diag(w.sum(axis=1)) - w) @ y
        momentum = config.momentum_early if it < config.momentum_switch else config.momentum_late
        same = (grad > 0) == (step > 0)
        gains = np.maximum(np.where(same, gains * 0.8, gains + 0.2), 0.01)
        step = momentum * step - config.learning_rate * gains * grad
        y = y + step
        y -= y.mean(axis=0)
        if not np.all(np.isfinite(y)):
            raise NumericError(f"t-SNE diverged at iteration {it + 1}")
        if (it + 1) % 50 == 0:
            kl_trace.append(kl_divergence(p, _student_t(y)[1]))
            kl_iters.append(it + 1)
    lab = None if labels is None else np.asarray(labels)
    return EmbeddingProjection(y, lab, kl_trace, kl_iters)


# --------------------------------------------------------------------------- cluster statistics


@dataclass
class ClusterStats:
    classes: list[int]
    diameters: np.ndarray  # max pairwise distance within each class
    centroid_distances: np.ndarray  # K x K, symmetric, zero diagonal


def cluster_stats(points: np.ndarray, labels: Sequence[int], classes: Sequence[int] | None = None) -> ClusterStats:
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist())) if classes is None else list(classes)
    diam = np.zeros(len(classes))
    cents = np.zeros((len(classes), points.shape[1]))
    for k, c in enumerate(classes):
        pts = points[labels == c]
        if len(pts) == 0:
            raise ValueError(f"class {c} has no points")
        diam[k] = math.sqrt(squared_distances(pts).max()) if len(pts) > 1 else 0.0
        cents[k] = pts.mean(axis=0)
    cd = np.sqrt(squared_distances(cents))
    cd = (cd + cd.T) / 2
    return ClusterStats(classes, diam, cd)


def silhouette_score(points: np.ndarray, labels: Sequence[int]) -> float:
    """Mean of (b - a) / max(a, b); singleton clusters score 0."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("silhouette needs at least two clusters")
    d = np.sqrt(squared_distances(points))
    scores = np.zeros(len(points))
    for i in range(len(points)):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, labels == c].mean() for c in classes if c != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


# --------------------------------------------------------------------------- export

METRICS_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "duration_s"]


def _f6(x: float) -> str:
    return f"{x:.6f}"


def write_metrics_csv(records: Sequence[EpochRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("no epoch records to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow([r.epoch, _f6(r.train_loss), _f6(r.train_acc), _f6(r.val_loss), _f6(r.val_acc),
                        _f6(r.duration_seconds)])


def read_metrics_csv(path: str | Path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != METRICS_HEADER:
        raise ValueError(f"{path}: not a metrics CSV")
    return [EpochRecord(int(r[0]), *(float(v) for v in r[1:])) for r in rows[1:]]


def write_confusion_csv(cm: ConfusionMatrix, path: str | Path) -> None:
    k = cm.counts.shape[0]
    names = cm.class_names or [str(i) for i in range(k)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in cm.counts:
            w.writerow([int(v) for v in row])


def read_confusion_csv(path: str | Path) -> ConfusionMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return ConfusionMatrix(np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64), rows[0])


def export_metrics(records: Sequence[EpochRecord], cm: ConfusionMatrix | None,
                   metrics_path: str | Path, confusion_path: str | Path | None = None) -> None:
    write_metrics_csv(records, metrics_path)
    if cm is not None and confusion_path is not None:
        write_confusion_csv(cm, confusion_path)


def write_embeddings_csv(points: np.ndarray, labels: Sequence[int], class_names: Sequence[str],
                         path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "label", "class_name"])
        for (x, y), lab in zip(points, labels):
            w.writerow([_f6(x), _f6(y), int(lab), class_names[int(lab)]])

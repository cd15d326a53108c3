"""Loss, Adam, evaluation, the epoch loop and a finite-difference gradient checker."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import layers as L
from .errors import LabelError, NumericError
from .model import Model, model_backward, model_forward
from .rng import STREAM_AUGMENT, Pcg32, mix_seed


class TrainingDiverged(NumericError):
    pass


def _check_labels(labels, n: int, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise LabelError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise LabelError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    return labels


def sparse_ce_loss(logits: np.ndarray, labels: Sequence[int]) -> float:
    """Batch-mean negative log-likelihood of the integer labels (log-sum-exp form)."""
    n, k = logits.shape
    if n < 1:
        raise ValueError("empty batch")
    labels = _check_labels(labels, n, k)
    logp = L.log_softmax(logits.astype(np.float64))
    return float(-logp[np.arange(n), labels].mean())


def sparse_ce_grad(logits: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    n, k = logits.shape
    labels = _check_labels(labels, n, k)
    g = L.softmax(logits)
    g[np.arange(n), labels] -= 1
    return (g / n).astype(logits.dtype, copy=False)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One bias-corrected Adam update, applied to ``params`` in place.

    Returns ``(params, state)`` for convenience; both are the objects passed in.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads must align")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient passed to adam_step")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        dt = p.dtype.type
        m *= dt(b1)
        m += dt(1.0 - b1) * g
        v *= dt(b2)
        v += dt(1.0 - b2) * (g * g)
        p -= dt(state.lr) * (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(state.epsilon))
    return params, state


@dataclass
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 32
    val_split: float = 0.2
    image_size: int = 180
    seed: int = 42
    augment: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    record_time: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.val_split < 1.0:
            raise ValueError("val_split must be in (0, 1)")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    duration_seconds: float = 0.0


def predict_proba(model: Model, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = [model_forward(model, images[i:i + batch_size], "eval").probabilities
           for i in range(0, len(images), batch_size)]
    return np.concatenate(out, axis=0)


def _batch_stats(logits: np.ndarray, labels: np.ndarray) -> tuple[float, int]:
    """(summed loss, correct count); argmax ties resolve to the lowest class index."""
    loss = sparse_ce_loss(logits, labels) * len(labels)
    correct = int(np.sum(np.argmax(logits, axis=1) == labels))
    return loss, correct


def evaluate(model: Model, dataset, batch_size: int = 32) -> tuple[float, float]:
    """Mean sparse cross-entropy and accuracy over every sample of ``dataset``."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    total_loss, total_correct = 0.0, 0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        trace = model_forward(model, dataset.images(idx), "eval")
        loss, correct = _batch_stats(trace.logits, dataset.labels[idx])
        total_loss += loss
        total_correct += correct
    return total_loss / n, total_correct / n


def train_step(model: Model, state: AdamState, images: np.ndarray, labels: np.ndarray):
    """Forward, loss, backward and one Adam update. Returns (loss, correct)."""
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            trace = model_forward(model, images, "train")
            loss, correct = _batch_stats(trace.logits, labels)
            if not math.isfinite(loss):
                raise TrainingDiverged("non-finite training loss")
            grads = model_backward(model, trace, sparse_ce_grad(trace.logits, labels))
            flat = [g[k] for g in grads for k in ("w", "b") if k in g]
            adam_step(state, model.parameters(), flat)
        except TrainingDiverged:
            raise
        except NumericError as exc:
            raise TrainingDiverged(str(exc)) from exc
    return loss / len(labels), correct


def fit(model: Model, train_data, val_data, config: TrainingConfig,
        log: Callable[[EpochRecord], None] | None = None) -> tuple[Model, list[EpochRecord]]:
    """Train ``model`` in place for ``config.epochs`` epochs.

    Training loss/accuracy in each record are sample-weighted running means over
    that epoch's batches; validation metrics come from a full pass afterwards.
    """
    from .data import AugmentConfig, augment, make_batches

    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("training and validation sets must be non-empty")
    state = AdamState(config.lr, config.beta1, config.beta2, config.epsilon)
    aug_cfg = AugmentConfig() if config.augment else None
    records = []
    for epoch in range(config.epochs):
        start = time.perf_counter()
        aug_rng = Pcg32(mix_seed(config.seed, epoch), STREAM_AUGMENT)
        seen, loss_sum, correct_sum = 0, 0.0, 0
        for batch_no, (images, labels) in enumerate(
                make_batches(train_data, config.batch_size, epoch, config.seed)):
            if aug_cfg is not None:
                images = augment(images, aug_cfg, aug_rng)
            try:
                loss, correct = train_step(model, state, images, labels)
            except TrainingDiverged as exc:
                raise TrainingDiverged(
                    f"epoch {epoch + 1}, batch {batch_no + 1}: loss became non-finite "
                    f"(last running loss {loss_sum / max(seen, 1):.4f}); try a lower learning rate"
                ) from exc
            seen += len(labels)
            loss_sum += loss * len(labels)
            correct_sum += correct
        val_loss, val_acc = evaluate(model, val_data, config.batch_size)
        duration = time.perf_counter() - start if config.record_time else 0.0
        rec = EpochRecord(epoch + 1, loss_sum / seen, correct_sum / seen, val_loss, val_acc, duration)
        records.append(rec)
        if log is not None:
            log(rec)
    return model, records


def format_epoch(rec: EpochRecord, total: int) -> str:
    return (f"epoch {rec.epoch}/{total} train_loss={rec.train_loss:.4f} train_acc={rec.train_acc:.4f} "
            f"val_loss={rec.val_loss:.4f} val_acc={rec.val_acc:.4f}")


# --------------------------------------------------------------------------- gradient checking

def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); a sign flip scores 2."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, coords: Iterable[int],
                     rel_step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. ``x.flat[coords]``; ``x`` is perturbed in place."""
    out = []
    flat = x.reshape(-1)
    for c in coords:
        orig = flat[c]
        h = rel_step * max(1.0, abs(float(orig)))
        flat[c] = orig + h
        fp = f()
        flat[c] = orig - h
        fm = f()
        flat[c] = orig
        out.append((fp - fm) / (2 * h))
    return np.asarray(out)


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped: int
    tol: float
    per_param: dict[tuple[int, str], float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def _kink_signature(trace) -> list[np.ndarray]:
    sig = [m.index for m in trace.masks.values()]
    sig += [o > 0 for o in trace.outputs if o.ndim in (2, 4)]
    return sig


def gradient_check(model: Model, images: np.ndarray, labels: Sequence[int], tol: float = 1e-5,
                   max_coords: int = 400, seed: int = 0, rel_step: float = 1e-5) -> GradCheckReport:
    """Compare backprop against central differences of the batch loss.

    Tensors with more than ``max_coords`` entries are checked on a seeded random
    subsample of that many coordinates. Perturbations that flip a ReLU or change
    a pooling argmax are skipped, since the loss is not differentiable there.
    """
    if not model.param_keys():
        return GradCheckReport(0.0, 0, 0, tol)
    if model.dtype != np.float64:
        raise ValueError("gradient_check needs a float64 model (use model.astype(np.float64))")
    if max_coords < 200:
        raise ValueError("max_coords must be >= 200")
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    base = model_forward(model, images, "train")
    grads = model_backward(model, base, sparse_ce_grad(base.logits, labels))
    base_sig = _kink_signature(base)
    rng = Pcg32(seed, 0)

    def loss_and_sig():
        tr = model_forward(model, images, "train")
        return sparse_ce_loss(tr.logits, labels), _kink_signature(tr)

    worst, checked, skipped = 0.0, 0, 0
    per_param = {}
    for (i, key) in model.param_keys():
        p = model.params[i][key]
        flat = p.reshape(-1)
        if flat.size <= max_coords:
            coords = range(flat.size)
        else:
            coords = sorted(rng.shuffle(list(range(flat.size)))[:max_coords])
        analytic = grads[i][key].reshape(-1)
        tensor_worst = 0.0
        for c in coords:
            orig = flat[c]
            h = rel_step * max(1.0, abs(float(orig)))
            flat[c] = orig + h
            fp, sp = loss_and_sig()
            flat[c] = orig - h
            fm, sm = loss_and_sig()
            flat[c] = orig
            if any(not np.array_equal(a, b) for sig in (sp, sm) for a, b in zip(sig, base_sig)):
                skipped += 1
                continue
            err = float(relative_error(analytic[c], (fp - fm) / (2 * h)))
            tensor_worst = max(tensor_worst, err)
            checked += 1
        per_param[(i, key)] = tensor_worst
        worst = max(worst, tensor_worst)
    return GradCheckReport(worst, checked, skipped, tol, per_param)

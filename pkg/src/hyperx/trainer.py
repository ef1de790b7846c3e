"""Adam optimization with a one-cycle schedule, metrics and the train loop.

The learning rate rises linearly from max_lr/div_factor to max_lr over the
first pct_start of steps, then falls linearly to max_lr/(div_factor *
final_div_factor); Adam's beta1 moves inversely between momentum_max and
momentum_min.  pct_start defaults to 0.475 so that both linear slopes stay
below 2 * max_lr / total_steps; the warm-up fraction is configurable.

Training evaluates the held-out split each epoch, keeps the checkpoint
with the best macro-F1 and stops once that score has not improved for
``patience`` consecutive epochs.  Everything is deterministic for a fixed
seed: shuffling, augmentation and dropout draw from generators derived
from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .dataset import SegmentSet, augment_segments
from .errors import ConfigError, GradientError
from .model import H2Model, serialize_model
from .tensor import clear_tape, no_grad, softmax_cross_entropy, zero_grads

__all__ = [
    "TrainConfig",
    "one_cycle",
    "adam_step",
    "Adam",
    "EarlyStopper",
    "MetricsReport",
    "compute_metrics",
    "evaluate",
    "predict",
    "TrainResult",
    "train",
]


@dataclass
class TrainConfig:
    max_lr: float = 7.96e-6
    pct_start: float = 0.475
    div_factor: float = 10.0
    final_div_factor: float = 10.0
    momentum_min: float = 0.7403
    momentum_max: float = 0.8314
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    patience: int = 10
    batch_size: int = 64
    seed: int = 0
    target: str = "arousal"
    train_frac: float = 0.8
    split_unit: str = "segment"
    split_seed: int = 0
    augment: bool = True
    track_train_accuracy: bool = False

    def validate(self):
        if not 0.0 < self.pct_start < 1.0:
            raise ConfigError(f"pct_start must be in (0, 1), got {self.pct_start}")
        if self.max_lr <= 0:
            raise ConfigError(f"max_lr must be positive, got {self.max_lr}")
        if self.patience > self.epochs:
            raise ConfigError(f"patience {self.patience} exceeds epochs {self.epochs}")
        if self.target not in ("arousal", "valence"):
            raise ConfigError(f"target must be arousal or valence, got {self.target!r}")

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def one_cycle(step: int, total_steps: int, cfg: TrainConfig) -> tuple[float, float]:
    """(learning rate, beta1) at ``step`` of a ``total_steps`` run.

    Anchors: step 0 gives max_lr/div_factor and momentum_max; the peak step
    gives max_lr and momentum_min; the last step gives
    max_lr/(div_factor*final_div_factor) and momentum_max.  Both traces are
    piecewise linear between the anchors.
    """
    if total_steps < 3:
        raise ConfigError(f"one_cycle needs total_steps >= 3, got {total_steps}")
    if not 0 <= step < total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps})")
    lr_start = cfg.max_lr / cfg.div_factor
    lr_final = lr_start / cfg.final_div_factor
    peak = int(round(cfg.pct_start * (total_steps - 1)))
    peak = min(max(peak, 1), total_steps - 2)
    # anchors are returned directly so they hold exactly in float64
    if step == 0:
        return lr_start, cfg.momentum_max
    if step == peak:
        return cfg.max_lr, cfg.momentum_min
    if step == total_steps - 1:
        return lr_final, cfg.momentum_max
    if step < peak:
        t = step / peak
        lr = lr_start + t * (cfg.max_lr - lr_start)
        beta1 = cfg.momentum_max + t * (cfg.momentum_min - cfg.momentum_max)
    else:
        t = (step - peak) / (total_steps - 1 - peak)
        lr = cfg.max_lr + t * (lr_final - cfg.max_lr)
        beta1 = cfg.momentum_min + t * (cfg.momentum_max - cfg.momentum_min)
    return lr, beta1


def adam_step(param, grad, state: dict, lr: float, beta1: float, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, in place on ``param``.

    ``state`` holds m, v and the step counter t; beta1 may change per step
    (bias correction uses the current value's t-th power).
    """
    if not np.isfinite(grad).all():
        raise GradientError("non-finite gradient in adam_step")
    if not state:
        state["m"] = np.zeros_like(param)
        state["v"] = np.zeros_like(param)
        state["t"] = 0
    state["t"] += 1
    t = state["t"]
    state["m"] = beta1 * state["m"] + (1.0 - beta1) * grad
    state["v"] = beta2 * state["v"] + (1.0 - beta2) * grad * grad
    m_hat = state["m"] / (1.0 - beta1**t)
    v_hat = state["v"] / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


class Adam:
    """Adam over a model's named parameters; skips parameters with no grad."""

    def __init__(self, named_params, beta2: float = 0.999, eps: float = 1e-8):
        self.named_params = list(named_params)
        self.beta2 = beta2
        self.eps = eps
        self.state = {name: {} for name, _ in self.named_params}

    def step(self, lr: float, beta1: float):
        for name, p in self.named_params:
            if p.grad is None:
                continue
            if not np.isfinite(p.grad).all():
                raise GradientError(f"non-finite gradient in parameter {name}")
            adam_step(p.data, p.grad, self.state[name], lr, beta1, self.beta2, self.eps)

    def zero_grads(self):
        zero_grads(p for _, p in self.named_params)


class EarlyStopper:
    """Stop after ``patience`` consecutive updates without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.count = 0

    def update(self, score: float, epoch: int) -> bool:
        """Record this epoch's score; True means training should stop."""
        if score > self.best:
            self.best = score
            self.best_epoch = epoch
            self.count = 0
        else:
            self.count += 1
        return self.count >= self.patience


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    per_class: list  # per class: {precision, recall, f1, support}
    confusion: list  # rows = true class, columns = predicted
    n: int

    @property
    def accuracy_percent(self) -> float:
        return 100.0 * self.accuracy

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "accuracy_percent": self.accuracy_percent,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "n": self.n,
        }


def compute_metrics(y_true, y_pred, num_classes: int = 3) -> MetricsReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    per_class = []
    f1s = []
    for c in range(num_classes):
        tp = cm[c, c]
        support = int(cm[c].sum())
        pred_c = int(cm[:, c].sum())
        precision = tp / pred_c if pred_c else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(
            {"precision": float(precision), "recall": float(recall), "f1": float(f1), "support": support}
        )
        f1s.append(f1)
    n = int(cm.sum())
    accuracy = float(np.trace(cm) / n) if n else 0.0
    return MetricsReport(accuracy, float(np.mean(f1s)), per_class, cm.tolist(), n)


def predict(model: H2Model, segs: SegmentSet, batch_size: int = 256) -> np.ndarray:
    """Eval-mode class predictions for every segment."""
    preds = []
    with no_grad():
        for start in range(0, len(segs), batch_size):
            idx = slice(start, start + batch_size)
            logits = model.forward_segments(segs, idx, train=False)
            preds.append(np.argmax(logits.data, axis=1))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


def evaluate(model: H2Model, segs: SegmentSet, target: str, batch_size: int = 256) -> MetricsReport:
    """Pure eval-mode metrics of ``model`` on ``segs`` for one target."""
    if len(segs) == 0:
        raise ConfigError("evaluate needs a non-empty split")
    return compute_metrics(segs.labels(target), predict(model, segs, batch_size))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    best_checkpoint: bytes
    best_epoch: int
    best_metrics: MetricsReport
    history: list  # one dict per epoch
    epochs_run: int
    aborted: str | None = None

    def history_csv(self) -> str:
        cols = ["epoch", "train_loss", "train_accuracy", "test_accuracy", "test_macro_f1", "lr_last", "beta1_last"]
        lines = [",".join(cols)]
        for row in self.history:
            lines.append(",".join("" if row.get(c) is None else repr(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    out = [order[s : s + batch_size] for s in range(0, n, batch_size)]
    if len(out) > 1 and out[-1].size == 1:
        # batch norm cannot standardize a single sample
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def train(
    model: H2Model,
    train_segs: SegmentSet,
    test_segs: SegmentSet,
    cfg: TrainConfig,
    callback=None,
) -> TrainResult:
    """Optimize ``model``; returns the best-F1 checkpoint and epoch history.

    ``callback(epoch, record)`` runs after each epoch and may return the
    string "stop" to end training early (used by capability checks).
    """
    cfg.validate()
    if len(train_segs) == 0 or len(test_segs) == 0:
        raise ConfigError("train needs non-empty train and test splits")
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    augment_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    dropout_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))

    optimizer = Adam(model.named_parameters(), beta2=cfg.beta2, eps=cfg.eps)
    stopper = EarlyStopper(cfg.patience)
    steps_per_epoch = math.ceil(len(train_segs) / cfg.batch_size)
    total_steps = max(cfg.epochs * steps_per_epoch, 3)

    history = []
    best_bytes = None
    best_metrics = None
    aborted = None
    step = 0
    epochs_run = 0
    labels_all = train_segs.labels(cfg.target)

    for epoch in range(1, cfg.epochs + 1):
        epoch_segs = augment_segments(train_segs, augment_rng) if cfg.augment else train_segs
        losses = []
        lr = beta1 = None
        for idx in _batches(len(train_segs), cfg.batch_size, shuffle_rng):
            clear_tape()
            optimizer.zero_grads()
            logits = model.forward_segments(epoch_segs, idx, train=True, rng=dropout_rng)
            loss = softmax_cross_entropy(logits, labels_all[idx])
            loss_val = loss.item()
            if not math.isfinite(loss_val):
                aborted = "nan-loss"
                break
            loss.backward()
            lr, beta1 = one_cycle(min(step, total_steps - 1), total_steps, cfg)
            optimizer.step(lr, beta1)
            step += 1
            losses.append(loss_val)
        clear_tape()
        if aborted:
            break
        epochs_run = epoch

        test_metrics = evaluate(model, test_segs, cfg.target)
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "train_accuracy": None,
            "test_accuracy": test_metrics.accuracy,
            "test_macro_f1": test_metrics.macro_f1,
            "lr_last": lr,
            "beta1_last": beta1,
        }
        if cfg.track_train_accuracy:
            record["train_accuracy"] = evaluate(model, train_segs, cfg.target).accuracy
        history.append(record)

        improved = test_metrics.macro_f1 > stopper.best
        should_stop = stopper.update(test_metrics.macro_f1, epoch)
        if improved or best_bytes is None:
            best_bytes = serialize_model(
                model,
                extra={
                    "train_config": cfg.to_dict(),
                    "epoch": epoch,
                    "test_metrics": test_metrics.to_dict(),
                },
            )
            best_metrics = test_metrics
        if callback is not None and callback(epoch, record) == "stop":
            break
        if should_stop:
            break

    if best_bytes is None:
        # nan on the very first batch: fall back to the untrained model
        best_bytes = serialize_model(model, extra={"train_config": cfg.to_dict(), "epoch": 0})
        best_metrics = evaluate(model, test_segs, cfg.target) if len(test_segs) else None
    return TrainResult(
        best_checkpoint=best_bytes,
        best_epoch=stopper.best_epoch,
        best_metrics=best_metrics,
        history=history,
        epochs_run=epochs_run,
        aborted=aborted,
    )

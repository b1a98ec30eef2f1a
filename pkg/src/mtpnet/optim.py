"""L1 loss, Adam, cosine annealing, and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .nn import Module
from .tensor import Tensor

logger = logging.getLogger(__name__)


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error over every element (subgradient 0 at ties)."""
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise ValueError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    return T.mean(T.tabs(pred - target))


def cosine_lr(t: int, total: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Cosine annealing from ``lr_max`` at ``t=0`` to ``lr_min`` at ``t=total``; clamps past the end."""
    if t >= total:
        return lr_min
    return lr_min + (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / total)) / 2.0


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update; parameters get fresh arrays (no in-place writes)."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)
    return state


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * factor
    return total


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr_max: float = 1e-3
    lr_min: float = 1e-6
    epochs: int = 10
    seed: int = 1
    patience: int = 5
    grad_clip: float = 0.0
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr_max >= self.lr_min >= 0:
            raise ValueError(f"need lr_max >= lr_min >= 0, got {self.lr_max}, {self.lr_min}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class EpochRecord:
    epoch: int
    train_l1: float
    val_l1: float
    lr: float


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    step_lrs: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_l1: float | None = None

    HEADER = ("epoch", "train_l1", "val_l1", "lr")

    def to_table(self, sep: str = ",") -> str:
        lines = [sep.join(self.HEADER)]
        for r in self.epochs:
            lines.append(sep.join([str(r.epoch), repr(r.train_l1), repr(r.val_l1), repr(r.lr)]))
        return "\n".join(lines) + "\n"

    def write(self, path, sep: str = ",") -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_table(sep))

    @classmethod
    def read(cls, path, sep: str = ",") -> "History":
        hist = cls()
        with open(path, encoding="utf-8") as fh:
            rows = [line.rstrip("\n").split(sep) for line in fh if line.strip()]
        for row in rows[1:]:
            hist.epochs.append(EpochRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3])))
        return hist


def predict(model, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Batched inference with gradients off and dropout disabled."""
    was_training = getattr(model, "training", False)
    if isinstance(model, Module):
        model.set_training(False)
    outs = []
    try:
        with T.no_grad():
            for i in range(0, len(inputs), batch_size):
                y = model(inputs[i : i + batch_size])
                outs.append(y.data if isinstance(y, Tensor) else np.asarray(y))
    finally:
        if isinstance(model, Module):
            model.set_training(was_training)
    return np.concatenate(outs, axis=0)


def mean_l1(model, inputs: np.ndarray, targets: np.ndarray, batch_size: int = 256) -> float:
    pred = predict(model, inputs, batch_size)
    return float(np.mean(np.abs(pred.astype(np.float64) - targets.astype(np.float64))))


def train(model: Module, train_data, val_data, cfg: TrainConfig) -> tuple[Module, History]:
    """Mini-batch Adam with a per-step cosine schedule and validation-based model selection.

    ``train_data`` / ``val_data`` are ``(inputs, targets)`` array pairs or
    objects with ``inputs`` and ``targets`` attributes. The parameters with
    the best validation L1 are restored before returning.
    """
    x_tr, y_tr = _arrays(train_data)
    x_va, y_va = _arrays(val_data)
    history = History()
    if cfg.epochs == 0:
        return model, history
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("train and validation splits must be non-empty")

    params = model.parameters()
    dtype = next(iter(params.values())).dtype
    state = AdamState()
    shuffle_rng = np.random.default_rng([cfg.seed, 7])
    n_batches = math.ceil(len(x_tr) / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    last_step = max(total_steps - 1, 1)
    best = None
    best_val = math.inf
    stale = 0
    step = 0
    for epoch in range(cfg.epochs):
        model.set_training(True)
        order = shuffle_rng.permutation(len(x_tr))
        loss_sum = 0.0
        lr = cfg.lr_max
        for b in range(n_batches):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            model.zero_grad()
            pred = model(x_tr[idx].astype(dtype, copy=False))
            loss = l1_loss(pred, y_tr[idx].astype(dtype, copy=False))
            value = loss.item()
            if not math.isfinite(value):
                raise FloatingPointError(f"non-finite training loss {value} at epoch {epoch}, batch index {b}")
            T.backward(loss)
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            if cfg.grad_clip > 0:
                clip_grad_norm(grads, cfg.grad_clip)
            lr = cosine_lr(step, last_step, cfg.lr_max, cfg.lr_min)
            history.step_lrs.append(lr)
            adam_step(params, grads, state, lr)
            loss_sum += value * len(idx)
            step += 1
        train_l1 = loss_sum / len(x_tr)
        val_l1 = mean_l1(model, x_va, y_va, cfg.eval_batch_size)
        history.epochs.append(EpochRecord(epoch + 1, train_l1, val_l1, lr))
        logger.info("epoch %d train_l1=%.5f val_l1=%.5f lr=%.3g", epoch + 1, train_l1, val_l1, lr)
        if val_l1 < best_val:
            best_val = val_l1
            best = {k: p.data.copy() for k, p in params.items()}
            history.best_epoch = epoch + 1
            stale = 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                logger.info("early stop after epoch %d", epoch + 1)
                break
    if best is not None:
        for k, p in params.items():
            p.data = best[k]
    history.best_val_l1 = best_val if best is not None else None
    model.set_training(False)
    return model, history


def _arrays(data):
    if hasattr(data, "inputs"):
        return data.inputs, data.targets
    x, y = data
    return np.asarray(x), np.asarray(y)

"""Mini-batch training with early stopping, evaluation and gradient checks."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..dataset import EnsembleDataset
from .autodiff import Tape
from .model import CoEDModel, collect_grads
from .optim import Adam


class TrainingDiverged(FloatingPointError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class TrainConfig:
    batch_size: int = 16
    patience: int = 20
    max_epochs: int = 500
    lr: float = 1e-3
    lr_theta: float = 1e-3
    seed: int = 0
    layerwise_theta: bool = False
    freeze_theta: bool = False
    eval_chunk: int = 64

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: CoEDModel
    history: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    seconds: float = 0.0


def loss_mse(pred, target, mask=None, tape: Optional[Tape] = None):
    """Masked MSE as a tape tensor (see :meth:`Tape.masked_mse`)."""
    tape = Tape(enabled=False) if tape is None else tape
    return tape.masked_mse(pred, target, mask)


def _sq_err(model, dataset, idx):
    x, y, m = dataset.batch(idx)
    pred = model.forward(x).value
    d = (pred - y) * m[..., None]
    return float(np.sum(d * d)), float(m.sum()) * y.shape[-1]


def evaluate(model: CoEDModel, dataset: EnsembleDataset, split: str, chunk: int = 64) -> float:
    """Pooled masked MSE over every sample of ``split``.

    Raises:
        ValueError: if the split is empty.
    """
    idx = dataset.indices(split)
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")
    return evaluate_indices(model, dataset, idx, chunk)


def evaluate_indices(model, dataset, idx, chunk: int = 64) -> float:
    sse, cnt = 0.0, 0.0
    for start in range(0, len(idx), chunk):
        a, b = _sq_err(model, dataset, idx[start:start + chunk])
        sse += a
        cnt += b
    if cnt == 0:
        raise ValueError("every entry is masked out")
    return sse / cnt


def per_sample_losses(model, dataset, split: str) -> np.ndarray:
    return np.array([evaluate_indices(model, dataset, np.array([k])) for k in dataset.indices(split)])


def loss_and_grads(model: CoEDModel, x, y, mask, freeze_theta: bool = False):
    """Forward, masked MSE and backward on one batch; gradients follow ``model.parameters()``."""
    tape = Tape()
    pred = model.forward(x, tape, freeze_theta=freeze_theta)
    loss = tape.masked_mse(pred, y, mask)
    grads = tape.backward(loss)
    return float(loss.value), collect_grads(model, grads)


def train(model: CoEDModel, dataset: EnsembleDataset, config: TrainConfig,
          log=None) -> TrainResult:
    """Jointly fit weights and edge directions.

    Each epoch shuffles the training split (seeded), takes one Adam step per
    mini-batch, then evaluates the full train and val splits. The patience
    counter resets on a strictly lower val loss and training stops once it
    reaches ``config.patience``. The model snapshot with the best val loss is
    returned.

    Raises:
        TrainingDiverged: on a non-finite loss; ``history`` is attached.
    """
    train_idx = dataset.indices("train")
    if len(train_idx) == 0 or len(dataset.indices("val")) == 0:
        raise ValueError("dataset needs nonempty train and val splits")
    if config.layerwise_theta:
        model.make_layerwise()
    frozen = ("raw_phases",) if config.freeze_theta or model.fixed_theta is not None else ()
    rng = np.random.default_rng(config.seed)
    opt = Adam(lr=config.lr, lr_overrides={"raw_phases": config.lr_theta})
    history: List[Dict[str, float]] = []
    best = model.copy()
    best_val, best_epoch, counter = float("inf"), 0, 0
    t_start = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(train_idx)
        for start in range(0, len(order), config.batch_size):
            x, y, m = dataset.batch(order[start:start + config.batch_size])
            try:
                loss, grads = loss_and_grads(model, x, y, m, freeze_theta=bool(frozen))
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", history) from exc
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", history)
            opt.step(model.parameters(), grads, frozen=frozen)
        train_loss = evaluate_indices(model, dataset, train_idx, config.eval_chunk)
        val_loss = evaluate(model, dataset, "val", config.eval_chunk)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDiverged(f"non-finite evaluation at epoch {epoch}", history)
        if val_loss < best_val:
            best_val, best_epoch, counter = val_loss, epoch, 0
            best = model.copy()
        else:
            counter += 1
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                        "patience_counter": counter, "seconds": time.perf_counter() - t0})
        if log is not None:
            log(history[-1])
        if counter >= config.patience:
            break
    return TrainResult(best, history, best_epoch, best_val, time.perf_counter() - t_start)


def gradient_check(model: CoEDModel, sample, h: float = 1e-5, max_params: int = 10_000,
                   seed: int = 0, order: int = 2) -> Dict[str, float]:
    """Compare tape gradients against central differences.

    Args:
        model: model in float64.
        sample: ``(features, targets, mask)`` with features (N, D) or (N, B, D).
        h: finite-difference step.
        max_params: above this many scalars, a seeded subset is checked.
        order: 2 for the three-point central difference, 4 for the five-point
            stencil, which allows a larger ``h`` and so less roundoff on
            small gradients.

    Returns:
        ``{"weights": err, "phases": err, "max": err}`` where err is the max of
        ``|g - g_fd| / max(|g|, |g_fd|, 1e-8)``.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    x, y, m = sample
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    freeze = model.fixed_theta is not None
    _, grads = loss_and_grads(model, x, y, m, freeze_theta=freeze)
    params = model.parameters()
    entries = [(name, i) for name, arr in params.items() for i in range(arr.size)
               if not (freeze and name == "raw_phases")]
    if len(entries) > max_params:
        rng = np.random.default_rng(seed)
        entries = [entries[k] for k in np.sort(rng.choice(len(entries), max_params, replace=False))]

    def f():
        pred = model.forward(x)
        return float(Tape(enabled=False).masked_mse(pred, y, m).value)

    errs = {"weights": 0.0, "phases": 0.0}
    for name, i in entries:
        flat = params[name].reshape(-1)
        old = flat[i]

        def at(step):
            flat[i] = old + step
            return f()

        if order == 2:
            fd = (at(h) - at(-h)) / (2 * h)
        else:
            fd = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
        flat[i] = old
        g = grads[name].reshape(-1)[i]
        err = abs(g - fd) / max(abs(g), abs(fd), 1e-8)
        key = "phases" if name == "raw_phases" else "weights"
        errs[key] = max(errs[key], err)
    errs["max"] = max(errs.values())
    return errs

"""Loss, optimizers and the fine-tuning loop with accuracy-based early stopping.

Optimizer steps are plain functions over a ParameterSet and matching
gradient set.  The loop shuffles deterministically per (seed, epoch),
keeps the last partial batch, validates after every epoch on the test
split, snapshots the best-accuracy parameters and stops once accuracy
has not improved for `early_stop_patience` epochs.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import Dataset, SplitSpec, split_train_test
from .errors import NumericalError, ValidationError
from .model import (
    ModelConfig,
    ParameterSet,
    backward,
    forward,
    init_params,
    predict,
    read_model,
    write_model,
)
from .tokenizer import Encoding, Vocabulary, encode

OPTIMIZERS = ("sgd", "adam", "adamw")
CHECKPOINT_OPT_MAGIC = b"FNDO"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adamw"
    learning_rate: float = 1e-3
    max_epochs: int = 10
    batch_size: int = 32
    dropout: float = 0.0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stop_patience: int = 2
    seed: int = 0
    grad_clip: Optional[float] = None

    def __post_init__(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.early_stop_patience < 1:
            raise ValidationError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")

    def to_dict(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "dropout": self.dropout,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "early_stop_patience": self.early_stop_patience,
            "seed": self.seed,
            "grad_clip": self.grad_clip,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class OptimizerState:
    step: int = 0
    m: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    v: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)


@dataclass
class TrainState:
    epoch: int = 0
    loss_log: list[float] = field(default_factory=list)
    val_accuracies: list[float] = field(default_factory=list)
    best_val_accuracy: float = -1.0
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    stopped_early: bool = False
    optimizer_state: OptimizerState = field(default_factory=OptimizerState)
    steps_per_epoch: int = 0


def cross_entropy(probabilities: np.ndarray, labels: Sequence[int]) -> float:
    """Mean of -log p[label]; probabilities are clamped at 1e-12 before the log."""
    probabilities = np.asarray(probabilities)
    labels = np.asarray(labels, dtype=np.int64)
    if probabilities.ndim != 2 or probabilities.shape[1] != 2:
        raise ValidationError(f"probabilities must be [batch, 2], got {probabilities.shape}")
    if labels.shape != (probabilities.shape[0],):
        raise ValidationError(
            f"got {labels.shape[0] if labels.ndim else 0} labels for {probabilities.shape[0]} rows"
        )
    picked = probabilities[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, 1e-12))))


def _check_grads_finite(grads: ParameterSet) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter group {name!r}")


def _ensure_moments(state: OptimizerState, params: ParameterSet) -> None:
    if not state.m:
        for name, arr in params.items():
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)


def sgd_step(
    params: ParameterSet, grads: ParameterSet, state: OptimizerState, cfg: TrainConfig
) -> tuple[ParameterSet, OptimizerState]:
    """param <- param - lr * grad."""
    _check_grads_finite(grads)
    state.step += 1
    for name in params:
        params[name] -= cfg.learning_rate * grads[name]
    return params, state


def adamw_step(
    params: ParameterSet, grads: ParameterSet, state: OptimizerState, cfg: TrainConfig
) -> tuple[ParameterSet, OptimizerState]:
    """Adam moments with bias correction plus decoupled weight decay.

    param <- param - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * param)
    """
    _check_grads_finite(grads)
    _ensure_moments(state, params)
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name in params:
        g = grads[name]
        state.m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name] -= cfg.learning_rate * (
            m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[name]
        )
    return params, state


def adam_step(
    params: ParameterSet, grads: ParameterSet, state: OptimizerState, cfg: TrainConfig
) -> tuple[ParameterSet, OptimizerState]:
    """AdamW with the decay term forced off."""
    return adamw_step(params, grads, state, replace(cfg, weight_decay=0.0))


_STEP_FUNCTIONS = {"sgd": sgd_step, "adam": adam_step, "adamw": adamw_step}


class EarlyStopper:
    """Stop-accuracy rule: halt after `patience` epochs without a new best."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValidationError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_accuracy = -1.0
        self.best_epoch = 0
        self.epochs_since_improvement = 0

    def update(self, accuracy: float, epoch: int) -> bool:
        """Record an epoch's validation accuracy; True means stop now."""
        if accuracy > self.best_accuracy:
            self.best_accuracy = accuracy
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            return False
        self.epochs_since_improvement += 1
        return self.epochs_since_improvement >= self.patience


def evaluate_accuracy(
    params: ParameterSet, cfg: ModelConfig, encodings: Sequence[Encoding],
    labels: Sequence[int], batch_size: int = 64,
) -> float:
    if not encodings:
        raise ValidationError("cannot evaluate on an empty split")
    correct = 0
    for lo in range(0, len(encodings), batch_size):
        chunk = encodings[lo : lo + batch_size]
        preds = predict(params, cfg, chunk)
        correct += sum(1 for (p, _), y in zip(preds, labels[lo : lo + batch_size]) if p == y)
    return correct / len(encodings)


@dataclass
class TrainResult:
    params: ParameterSet
    state: TrainState
    epoch_metrics: list[tuple[int, float]]  # (epoch, validation accuracy)


def train(
    model_cfg: ModelConfig,
    vocab: Vocabulary,
    dataset: Dataset,
    split_spec: SplitSpec,
    cfg: TrainConfig,
    eval_fn: Optional[Callable[[ParameterSet, int], float]] = None,
) -> TrainResult:
    """Fine-tuning loop over shuffled mini-batches with best-epoch snapshots.

    The 20% test split doubles as the validation set; the returned
    parameters are the snapshot from the epoch with the highest validation
    accuracy.  `eval_fn(params, epoch)` can replace the built-in validation
    accuracy (used to script stopping behavior in tests).
    """
    train_ds, test_ds = split_train_test(dataset, split_spec)
    # the training dropout value drives the classification head
    model_cfg = replace(model_cfg, head_dropout=cfg.dropout)

    enc_train = [encode(doc.text, vocab, model_cfg.max_len) for doc in train_ds.documents]
    enc_test = [encode(doc.text, vocab, model_cfg.max_len) for doc in test_ds.documents]
    y_train = train_ds.labels()
    y_test = test_ds.labels()

    params = init_params(model_cfg, cfg.seed)
    state = TrainState()
    state.steps_per_epoch = math.ceil(len(enc_train) / cfg.batch_size)
    stopper = EarlyStopper(cfg.early_stop_patience)
    shuffle_rng = np.random.default_rng([cfg.seed, 0x5BF])

    best_params = params.copy()
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(enc_train))
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = [enc_train[i] for i in idx]
            labels = [y_train[i] for i in idx]
            step += 1
            trace = forward(
                params, model_cfg, batch, train_mode=True,
                dropout_seed=cfg.seed * 1_000_003 + step,
            )
            loss = cross_entropy(trace.probabilities, labels)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at step {step} (epoch {epoch})")
            state.loss_log.append(loss)
            grads = backward(trace, params, model_cfg, labels)
            if cfg.grad_clip is not None:
                _clip_global_norm(grads, cfg.grad_clip)
            params, state.optimizer_state = _STEP_FUNCTIONS[cfg.optimizer](
                params, grads, state.optimizer_state, cfg
            )

        if eval_fn is not None:
            accuracy = eval_fn(params, epoch)
        else:
            accuracy = evaluate_accuracy(params, model_cfg, enc_test, y_test)
        state.epoch = epoch
        state.val_accuracies.append(accuracy)
        improved = accuracy > stopper.best_accuracy
        should_stop = stopper.update(accuracy, epoch)
        if improved:
            best_params = params.copy()
        if should_stop:
            state.stopped_early = True
            break

    state.best_val_accuracy = stopper.best_accuracy
    state.best_epoch = stopper.best_epoch
    state.epochs_since_improvement = stopper.epochs_since_improvement
    epoch_metrics = list(enumerate(state.val_accuracies, start=1))
    return TrainResult(params=best_params, state=state, epoch_metrics=epoch_metrics)


def _clip_global_norm(grads: ParameterSet, max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(g * g)) for _, g in grads.items()))
    if total > max_norm:
        factor = max_norm / total
        for name in grads:
            grads[name] *= factor


# --- run artifacts ----------------------------------------------------------


def write_loss_log(path: str | Path, state: TrainState) -> None:
    """CSV `step,epoch,loss`, one row per optimizer step."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "epoch", "loss"])
        for i, loss in enumerate(state.loss_log):
            epoch = i // state.steps_per_epoch + 1 if state.steps_per_epoch else 1
            writer.writerow([i + 1, epoch, f"{loss:.8f}"])


def write_epoch_metrics(path: str | Path, epoch_metrics: Sequence[tuple[int, float]]) -> None:
    """CSV `epoch,val_accuracy`."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "val_accuracy"])
        for epoch, accuracy in epoch_metrics:
            writer.writerow([epoch, f"{accuracy:.6f}"])


def save_checkpoint(
    path: str | Path, cfg: ModelConfig, params: ParameterSet, opt_state: OptimizerState
) -> None:
    """Model serialization with the optimizer state appended."""
    with open(path, "wb") as f:
        write_model(f, cfg, params)
        f.write(CHECKPOINT_OPT_MAGIC)
        header = {
            "step": opt_state.step,
            "tensors": [[name, list(arr.shape)] for name, arr in opt_state.m.items()],
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for moments in (opt_state.m, opt_state.v):
            for _, arr in moments.items():
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, ParameterSet, OptimizerState]:
    with open(path, "rb") as f:
        cfg, params = read_model(f)
        opt_state = OptimizerState()
        magic = f.read(4)
        if magic != CHECKPOINT_OPT_MAGIC:
            return cfg, params, opt_state  # bare model file
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        opt_state.step = header["step"]
        for target in (opt_state.m, opt_state.v):
            for name, shape in header["tensors"]:
                count = int(np.prod(shape)) if shape else 1
                raw = f.read(count * 4)
                target[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        return cfg, params, opt_state

"""Shared test helpers: finite-difference gradients and comparison utilities."""

from __future__ import annotations

import numpy as np

from fnd.model import ModelConfig, ParameterSet, forward
from fnd.training import cross_entropy


def rel_err(a: float, b: float, floor: float = 1e-3) -> float:
    """Relative error with a floor so near-zero gradients compare absolutely."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_gradient_check(
    params: ParameterSet,
    cfg: ModelConfig,
    batch,
    labels,
    grads: ParameterSet,
    train_mode: bool = False,
    dropout_seed: int = 11,
    h: float = 1e-4,
) -> dict[str, float]:
    """Max relative error per parameter group vs central finite differences.

    Perturbs every scalar of every tensor; only meaningful with
    double-precision parameters.
    """

    def loss_at_current_params() -> float:
        trace = forward(params, cfg, batch, train_mode=train_mode, dropout_seed=dropout_seed)
        return cross_entropy(trace.probabilities, labels)

    worst: dict[str, float] = {}
    for name in params.names():
        arr = params[name]
        g = grads[name]
        group_worst = 0.0
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            loss_plus = loss_at_current_params()
            arr[idx] = orig - h
            loss_minus = loss_at_current_params()
            arr[idx] = orig
            fd = (loss_plus - loss_minus) / (2.0 * h)
            group_worst = max(group_worst, rel_err(float(g[idx]), fd))
        worst[name] = group_worst
    return worst

"""Central finite-difference checks against the tape gradients."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def numeric_grad(
    f: Callable[[], Tensor],
    target: Tensor,
    eps: float = 1e-6,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Finite-difference gradient of the scalar ``f()`` w.r.t. entries of ``target``.

    ``target.data`` is swapped for perturbed copies and restored afterwards.
    """
    base = target.data
    flat_idx = range(base.size) if indices is None else indices
    out = np.zeros(len(flat_idx), dtype=np.float64)
    with no_grad():
        for k, i in enumerate(flat_idx):
            for sign in (1.0, -1.0):
                pert = base.copy().reshape(-1)
                pert[i] += sign * eps
                target.data = pert.reshape(base.shape)
                val = float(f().data.reshape(-1)[0])
                out[k] += sign * val
            out[k] /= 2.0 * eps
    target.data = base
    return out


def analytic_grad(f: Callable[[], Tensor], targets: Sequence[Tensor]) -> list:
    for t in targets:
        t.grad = None
    loss = f()
    backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else np.array(t.grad) for t in targets]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Norm-wise relative error. Gradients that vanish in exact arithmetic
    give O(1) values here (both sides are rounding noise); check those with
    an absolute bound instead."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(
    f: Callable[[], Tensor],
    targets: Sequence[Tensor],
    eps: float = 1e-6,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Worst relative error between tape and finite-difference gradients."""
    grads = analytic_grad(f, targets)
    worst = 0.0
    for t, g in zip(targets, grads):
        idx = None
        if max_entries is not None and t.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        num = numeric_grad(f, t, eps=eps, indices=idx)
        ana = g.reshape(-1) if idx is None else g.reshape(-1)[idx]
        worst = max(worst, relative_error(ana, num))
    return worst

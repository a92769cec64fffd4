"""Central finite-difference gradient checking in float64."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor_core as tc
from .tensor_core import Tensor


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], which: int,
                 step: float = 1e-3, max_entries: int | None = None,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of scalar ``fn`` w.r.t. ``inputs[which]``.

    Returns (indices checked as flat positions, derivative values).  With
    ``max_entries`` only a random subset of positions is probed.
    """
    base = [np.asarray(x, dtype=np.float64) for x in inputs]
    x = base[which]
    flat = np.arange(x.size)
    if max_entries is not None and x.size > max_entries:
        rng = rng or np.random.default_rng(0)
        flat = np.sort(rng.choice(x.size, size=max_entries, replace=False))
    out = np.empty(len(flat))
    for k, pos in enumerate(flat):
        vals = []
        for sign in (1, -1):
            xs = x.copy().reshape(-1)
            xs[pos] += sign * step
            args = list(base)
            args[which] = xs.reshape(x.shape)
            vals.append(fn(*[Tensor(a, dtype=np.float64) for a in args]).item())
        out[k] = (vals[0] - vals[1]) / (2 * step)
    return flat, out


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], step: float = 1e-3,
                    max_entries: int | None = None, seed: int = 0) -> list[float]:
    """Relative error between reverse-mode and central-difference gradients, per input.

    ``fn`` maps Tensors to any Tensor; non-scalar outputs are contracted
    with a fixed random weighting so one scalar covers every output entry.
    """
    rng = np.random.default_rng(seed)
    probe: dict[tuple, np.ndarray] = {}

    def scalar_fn(*ts):
        out = fn(*ts)
        if out.shape == (1, 1, 1, 1):
            return out
        if out.shape not in probe:
            probe[out.shape] = np.random.default_rng(seed + 1).uniform(0.5, 1.5, size=out.shape)
        return tc.sum_(tc.mul(out, Tensor(probe[out.shape], dtype=np.float64)))

    leaves = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True) for x in inputs]
    with tc.Tape() as tape:
        loss = scalar_fn(*leaves)
    grads = tc.backward(tape, loss)
    errors = []
    for i, leaf in enumerate(leaves):
        analytic = grads.get(leaf, np.zeros_like(leaf.data)).reshape(-1)
        idx, numeric = numeric_grad(scalar_fn, inputs, i, step=step, max_entries=max_entries, rng=rng)
        errors.append(relative_error(analytic[idx], numeric))
    return errors

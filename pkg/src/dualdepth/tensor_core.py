"""Dense NCHW tensors with tape-based reverse-mode differentiation.

Every value in the package (images, features, depth, poses, losses) is a
4-D :class:`Tensor`.  Operations executed while a :class:`Tape` is active
and at least one input requires a gradient are recorded on that tape;
:func:`backward` replays the tape in reverse.

Storage is float32 by default.  Tensors may be built in float64, in which
case every op keeps float64 (the gradient checker relies on that).
Reductions always accumulate in float64.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "Node", "AdamState", "ShapeError",
    "tensor", "zeros", "ones", "no_grad_active", "no_grad", "backward", "adam_step",
    "elementwise", "add", "sub", "mul", "div", "neg", "scale", "add_scalar",
    "abs_", "exp", "log", "sqrt", "square", "reciprocal", "sigmoid", "relu",
    "elu", "min2", "clamp", "reduce", "sum_", "mean", "concat_channels",
    "slice_", "pad_reflect", "box_filter3", "conv2d", "resize_bilinear",
    "reshape", "permute", "matmul", "softmax",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class Tensor:
    """A 4-D array with an optional position on the active tape."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are 4-D (n, c, h, w); got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __rsub__(self, other):
        return add_scalar(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Tensor) else scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)


def tensor(data, requires_grad: bool = False, name: str | None = None, dtype=np.float32) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    while arr.ndim < 4:
        arr = arr[None]
    return Tensor(arr, requires_grad=requires_grad, name=name)


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def ones(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype))


# ---------------------------------------------------------------------------
# Tape


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Used as a context manager; nesting is allowed and the innermost tape
    records.  Nodes are appended as ops execute, so inputs always precede
    the nodes that consume them.
    """

    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)


_TAPE_STACK: list[Tape] = []


def no_grad_active() -> bool:
    return not _TAPE_STACK


@contextmanager
def no_grad():
    """Suspend recording: ops inside run as constants even while a Tape is open."""
    saved = _TAPE_STACK[:]
    _TAPE_STACK.clear()
    try:
        yield
    finally:
        _TAPE_STACK[:] = saved


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if _TAPE_STACK and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE_STACK[-1].nodes.append(Node(op, inputs, out, grad_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-mode sweep from ``loss``.

    Returns a mapping from every leaf tensor that requires a gradient and
    appears on the tape (plus ``loss`` itself, if it is a leaf) to its
    gradient.  Leaves that do not influence the loss get zeros.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward needs a scalar loss of shape (1, 1, 1, 1), got {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(node.output) for node in tape.nodes}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad and id(loss) not in produced:
        leaves[id(loss)] = loss
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves.setdefault(id(t), t)

    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.grad_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(f"{node.op}: gradient shape {gi.shape} != input shape {t.shape}")
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return {
        t: grads.get(key, np.zeros_like(t.data)).astype(t.dtype, copy=False)
        for key, t in leaves.items()
    }


# ---------------------------------------------------------------------------
# elementwise


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True, dtype=np.float64).astype(g.dtype)


def _check_binary(op: str, a: Tensor, b: Tensor) -> None:
    for sa, sb in zip(a.shape, b.shape):
        if sa != sb and sa != 1 and sb != 1:
            raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not match")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_binary("add", a, b)
    sa, sb = a.shape, b.shape
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_binary("sub", a, b)
    sa, sb = a.shape, b.shape
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_binary("mul", a, b)
    x, y = a.data, b.data
    return _result("mul", x * y, (a, b),
                   lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_binary("div", a, b)
    x, y = a.data, b.data
    out = x / y

    def grad_fn(g):
        ga = g / y
        return _unbroadcast(ga, x.shape), _unbroadcast(-ga * out, y.shape)

    return _result("div", out, (a, b), grad_fn)


def neg(a: Tensor) -> Tensor:
    return _result("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _result("scale", a.data * a.dtype.type(s), (a,), lambda g: (g * g.dtype.type(s),))


def add_scalar(a: Tensor, s: float) -> Tensor:
    return _result("add_scalar", a.data + a.dtype.type(s), (a,), lambda g: (g,))


def abs_(a: Tensor) -> Tensor:
    x = a.data
    # sign(0) == 0 gives the zero subgradient at the kink
    return _result("abs", np.abs(x), (a,), lambda g: (g * np.sign(x),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.data
    return _result("log", np.log(x), (a,), lambda g: (g / x,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _result("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def square(a: Tensor) -> Tensor:
    x = a.data
    return _result("square", x * x, (a,), lambda g: (g * 2 * x,))


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _result("reciprocal", out, (a,), lambda g: (-g * out * out,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result("sigmoid", out, (a,), lambda g: (g * out * (1 - out),))


def relu(a: Tensor) -> Tensor:
    x = a.data
    mask = x > 0
    return _result("relu", np.where(mask, x, 0).astype(x.dtype), (a,), lambda g: (g * mask,))


def elu(a: Tensor) -> Tensor:
    x = a.data
    neg_part = np.expm1(np.minimum(x, 0))
    out = np.where(x > 0, x, neg_part).astype(x.dtype)
    return _result("elu", out, (a,), lambda g: (g * np.where(x > 0, 1, neg_part + 1).astype(x.dtype),))


def min2(a: Tensor, b: Tensor) -> Tensor:
    """Pointwise minimum; ties route the gradient to ``a``."""
    _check_binary("min2", a, b)
    x, y = a.data, b.data
    take_a = x <= y
    out = np.where(take_a, x, y)
    return _result("min2", out, (a, b), lambda g: (
        _unbroadcast(np.where(take_a, g, 0).astype(g.dtype), x.shape),
        _unbroadcast(np.where(take_a, 0, g).astype(g.dtype), y.shape)))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _result("clamp", np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


_UNARY = {"abs": abs_, "exp": exp, "sigmoid": sigmoid, "relu": relu}
_BINARY = {"add": add, "sub": sub, "mul": mul, "min2": min2}


def elementwise(op: str, a: Tensor, b: Tensor | float | None = None) -> Tensor:
    """Dispatch a named pointwise op.

    Binary ops accept a tensor of broadcast-compatible shape or a Python
    scalar as ``b``; ``scale`` multiplies by the scalar ``b``.
    """
    if op in _UNARY:
        if b is not None:
            raise TypeError(f"{op} takes one operand")
        return _UNARY[op](a)
    if op == "scale":
        return scale(a, float(b))
    if op in _BINARY:
        if b is None:
            raise TypeError(f"{op} takes two operands")
        if not isinstance(b, Tensor):
            b = Tensor(np.full((1, 1, 1, 1), b, dtype=a.dtype))
        return _BINARY[op](a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# reductions and layout


def reduce(op: str, a: Tensor, axes: Iterable[int] | None = None) -> Tensor:
    """Sum or mean over ``axes`` (all axes if None), keeping rank 4."""
    axes = tuple(range(4)) if axes is None else tuple(sorted({int(ax) % 4 for ax in axes}))
    if not axes:
        return a
    x = a.data
    out = x.sum(axis=axes, keepdims=True, dtype=np.float64)
    count = math.prod(x.shape[ax] for ax in axes)
    if op == "mean":
        out = out / count
        factor = 1.0 / count
    elif op == "sum":
        factor = 1.0
    else:
        raise ValueError(f"unknown reduction {op!r}")
    shape = x.shape

    def grad_fn(g):
        return (np.broadcast_to(g * g.dtype.type(factor), shape).copy(),)

    return _result(op, out.astype(x.dtype), (a,), grad_fn)


def sum_(a: Tensor, axes=None) -> Tensor:
    return reduce("sum", a, axes)


def mean(a: Tensor, axes=None) -> Tensor:
    return reduce("mean", a, axes)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_channels needs at least one tensor")
    if len(parts) == 1:
        return parts[0]
    n, _, h, w = parts[0].shape
    for p in parts[1:]:
        if (p.shape[0], p.shape[2], p.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels: {p.shape} does not match (n, h, w) = {(n, h, w)}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])
    out = np.concatenate([p.data for p in parts], axis=1)

    def grad_fn(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result("concat", out, tuple(parts), grad_fn)


def slice_(a: Tensor, index: tuple) -> Tensor:
    """Basic-slicing view (no fancy indexing), copied."""
    out = a.data[index]
    if out.ndim != 4:
        raise ShapeError("slice_ must keep all four axes (use ranges, not integers)")
    shape = a.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _result("slice", np.ascontiguousarray(out), (a,), grad_fn)


def reshape(a: Tensor, shape: tuple[int, int, int, int]) -> Tensor:
    src = a.shape
    return _result("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def permute(a: Tensor, order: tuple[int, int, int, int]) -> Tensor:
    inv = tuple(np.argsort(order))
    return _result("permute", np.ascontiguousarray(a.data.transpose(order)), (a,),
                   lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    if a.shape[:2] != b.shape[:2] or a.shape[3] != b.shape[2]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    x, y = a.data, b.data
    return _result("matmul", x @ y, (a, b),
                   lambda g: (g @ y.swapaxes(-1, -2), x.swapaxes(-1, -2) @ g))


def softmax(a: Tensor, axis: int) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result("softmax", out, (a,), grad_fn)


# ---------------------------------------------------------------------------
# padding, filtering, convolution


def _reflect_index(n: int, p: int) -> np.ndarray:
    mode = "reflect" if n > 1 else "edge"
    return np.pad(np.arange(n), p, mode=mode)


def _pad_reflect_np(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    ih = _reflect_index(x.shape[2], p)
    iw = _reflect_index(x.shape[3], p)
    if x.shape[2] > 1 and x.shape[3] > 1:
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")
    return x[:, :, ih][:, :, :, iw]


def _fold_reflect(gp: np.ndarray, p: int, h: int, w: int) -> np.ndarray:
    """Adjoint of reflection padding: sum padded-gradient entries onto their sources."""
    if p == 0:
        return gp
    ih = _reflect_index(h, p)
    iw = _reflect_index(w, p)
    gh = gp[:, :, p:p + h].copy()
    for pos in list(range(p)) + list(range(p + h, h + 2 * p)):
        gh[:, :, ih[pos]] += gp[:, :, pos]
    gx = gh[:, :, :, p:p + w].copy()
    for pos in list(range(p)) + list(range(p + w, w + 2 * p)):
        gx[:, :, :, iw[pos]] += gh[:, :, :, pos]
    return gx


def pad_reflect(a: Tensor, p: int) -> Tensor:
    h, w = a.shape[2:]
    return _result("pad_reflect", _pad_reflect_np(a.data, p), (a,), lambda g: (_fold_reflect(g, p, h, w),))


def box_filter3(a: Tensor) -> Tensor:
    """3x3 mean filter with reflection padding (output keeps the input size)."""
    x = a.data
    h, w = x.shape[2:]
    xp = _pad_reflect_np(x, 1)
    rows = xp[:, :, 0:h] + xp[:, :, 1:h + 1] + xp[:, :, 2:h + 2]
    out = (rows[:, :, :, 0:w] + rows[:, :, :, 1:w + 1] + rows[:, :, :, 2:w + 2]) / x.dtype.type(9)

    def grad_fn(g):
        g9 = g / g.dtype.type(9)
        gr = np.zeros(rows.shape, dtype=g.dtype)
        for dx in range(3):
            gr[:, :, :, dx:dx + w] += g9
        gp = np.zeros(xp.shape, dtype=g.dtype)
        for dy in range(3):
            gp[:, :, dy:dy + h] += gr
        return (_fold_reflect(gp, 1, h, w),)

    return _result("box_filter3", out, (a,), grad_fn)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: str = "reflection") -> Tensor:
    """2-D convolution (cross-correlation) with reflection padding of (k - 1) / 2.

    ``weight`` is stored as a Tensor of shape (out_c, in_c, kh, kw); ``bias``
    as (1, out_c, 1, 1).  Output size is ceil(h / stride) x ceil(w / stride).
    """
    if padding != "reflection":
        raise ValueError("only reflection padding is supported")
    n, ci, h, w = x.shape
    co, wci, kh, kw = weight.shape
    if wci != ci:
        raise ShapeError(f"conv2d: input has {ci} channels, weight expects {wci} (weight shape {weight.shape})")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel size must be odd, got {kh}x{kw}")
    if kh != kw:
        raise ShapeError("conv2d: square kernels only")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    if bias is not None and bias.shape != (1, co, 1, 1):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != (1, {co}, 1, 1)")
    p = (kh - 1) // 2
    ho, wo = -(-h // stride), -(-w // stride)
    xp = _pad_reflect_np(x.data, p)
    # cols: (n, kh*kw*ci, ho*wo), ordered (ky, kx, ci)
    cols = np.empty((n, kh, kw, ci, ho, wo), dtype=x.dtype)
    for dy in range(kh):
        for dx in range(kw):
            cols[:, dy, dx] = xp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride]
    cols = cols.reshape(n, kh * kw * ci, ho * wo)
    wm = np.ascontiguousarray(weight.data.transpose(0, 2, 3, 1)).reshape(co, kh * kw * ci)
    out = np.matmul(wm, cols)
    if bias is not None:
        out += bias.data.reshape(1, co, 1)
    out = out.reshape(n, co, ho, wo)
    hp, wp = xp.shape[2:]

    def grad_fn(g):
        gm = g.reshape(n, co, ho * wo)
        gw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0)
        gw = np.ascontiguousarray(gw.reshape(co, kh, kw, ci).transpose(0, 3, 1, 2))
        gb = gm.sum(axis=(0, 2), dtype=np.float64).astype(g.dtype).reshape(1, co, 1, 1) if bias is not None else None
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wm.T, gm).reshape(n, kh, kw, ci, ho, wo)
            gp = np.zeros((n, ci, hp, wp), dtype=g.dtype)
            for dy in range(kh):
                for dx in range(kw):
                    gp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride] += gcols[:, dy, dx]
            gx = _fold_reflect(gp, p, h, w)
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    if bias is None:
        return _result("conv2d", out, inputs, lambda g: grad_fn(g)[:2])
    return _result("conv2d", out, inputs, grad_fn)


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row-stochastic matrix for align-corners-false linear resampling."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1 - frac)
    np.add.at(m, (rows, i1), frac)
    return m.astype(dtype)


def resize_bilinear(a: Tensor, out_h: int, out_w: int) -> Tensor:
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize_bilinear: target size must be positive, got {out_h}x{out_w}")
    _, _, h, w = a.shape
    if (h, w) == (out_h, out_w):
        return a
    mh = _interp_matrix(h, out_h, a.dtype)
    mw = _interp_matrix(w, out_w, a.dtype)
    out = (mh @ a.data) @ mw.T
    return _result("resize_bilinear", out, (a,), lambda g: (mh.T @ (g @ mw),))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param: Tensor) -> "AdamState":
        return cls(np.zeros_like(param.data), np.zeros_like(param.data), 0)


def adam_step(param: Tensor, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[Tensor, AdamState]:
    """One bias-corrected Adam update.  Returns new param and state; inputs are untouched."""
    grad = np.asarray(grad)
    if grad.shape != param.shape or state.m.shape != param.shape:
        raise ShapeError(f"adam_step: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(f"non-finite gradient for parameter {param.name!r}")
    t = state.t + 1
    g = grad.astype(np.float64)
    m = beta1 * state.m.astype(np.float64) + (1 - beta1) * g
    v = beta2 * state.v.astype(np.float64) + (1 - beta2) * g * g
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    new = param.data.astype(np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)
    dt = param.dtype
    return (Tensor(new.astype(dt), requires_grad=param.requires_grad, name=param.name),
            AdamState(m.astype(dt), v.astype(dt), t))

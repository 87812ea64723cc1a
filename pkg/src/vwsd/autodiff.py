"""Reverse-mode automatic differentiation over float64 numpy arrays.

The primitive set is closed: every layer in the package composes the
operations exported here, so the backward-rule test surface stays finite.
Recording happens on an explicitly opened `Tape`; with no tape open (the
evaluation path) primitives are plain numpy math with no bookkeeping.

Shape rules:
  * `add` and `mul` broadcast numpy-style (right-aligned); their backward
    un-broadcasts by summing over expanded axes.
  * `matmul` follows numpy stacked-matmul semantics (both operands ndim >= 2,
    batch dims broadcastable).
  * Nothing else broadcasts.

Backward rules live in the `_VJPS` registry keyed by op name, which also
lets tests swap in a deliberately wrong rule to prove the checker catches it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError

BCE_EPS = 1e-12
LAYER_NORM_EPS = 1e-5

_node_counter = itertools.count()
_TAPES: list["Tape"] = []


class Tensor:
    """Shape-tagged float64 array, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "node_id", "tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node_id = next(_node_counter)
        self.tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def parameter(value) -> Tensor:
    return Tensor(value, requires_grad=True)


class Tape:
    """Ordered record of primitive applications; inputs always precede consumers."""

    def __init__(self):
        self._entries: list[tuple] = []   # (op, input_ids, output_id, saved)
        self._produced: set[int] = set()
        self._leaves: dict[int, tuple] = {}  # requires_grad leaf id -> shape
        self.closed = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        if _TAPES and _TAPES[-1] is self:
            _TAPES.pop()
        return False

    def __len__(self):
        return len(self._entries)

    def _record(self, op: str, inputs: Sequence[Tensor], out: Tensor, saved):
        ids = []
        for t in inputs:
            if t.requires_grad:
                ids.append(t.node_id)
                if t.node_id not in self._produced:
                    self._leaves.setdefault(t.node_id, t.shape)
            else:
                ids.append(None)
        self._entries.append((op, tuple(ids), out.node_id, saved))
        self._produced.add(out.node_id)
        out.tape = self

    def reset(self):
        self._entries.clear()
        self._produced.clear()
        self._leaves.clear()
        self.closed = True


def active_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


def _emit(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, saved) -> Tensor:
    tape = active_tape()
    track = tape is not None and not tape.closed and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape._record(op, inputs, out, saved)
    return out


def backward(loss: Tensor) -> dict[int, Tensor]:
    """Reverse sweep from a scalar loss; returns {leaf node_id: gradient}.

    Gradients for shared nodes accumulate by summation. The tape is reset
    afterwards and cannot be reused.
    """
    tape = loss.tape
    if tape is None or tape.closed:
        raise ContractError("backward: loss was not produced on an active tape")
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for op, input_ids, out_id, saved in reversed(tape._entries):
        g = grads.pop(out_id, None)
        if g is None:
            continue
        for nid, gi in zip(input_ids, _VJPS[op](saved, g)):
            if nid is None or gi is None:
                continue
            acc = grads.get(nid)
            grads[nid] = gi if acc is None else acc + gi

    result = {}
    for nid, shape in tape._leaves.items():
        g = grads.get(nid)
        result[nid] = Tensor(g if g is not None else np.zeros(shape))
    tape.reset()
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: operands need ndim >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    try:
        if b.ndim == 2 and a.ndim > 2:
            # stacked rows x one weight: single gemm instead of a batched loop
            flat = a.data.reshape(-1, a.shape[-1])
            out = (flat @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))
        else:
            out = a.data @ b.data
    except ValueError as exc:
        raise DimensionError(f"matmul: incompatible batch dims {a.shape} @ {b.shape}") from exc
    return _emit("matmul", (a, b), out, (a.data, b.data))


def _vjp_matmul(saved, g):
    a, b = saved
    if b.ndim == 2 and a.ndim >= 2:
        n = g.shape[-1]
        g_flat = g.reshape(-1, n)
        ga = (g_flat @ b.T).reshape(a.shape)
        gb = a.reshape(-1, a.shape[-1]).T @ g_flat
        return ga, gb
    ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
    gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
    return ga, gb


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: shapes not broadcastable, {a.shape} + {b.shape}") from exc
    return _emit("add", (a, b), out, (a.shape, b.shape))


def _vjp_add(saved, g):
    sa, sb = saved
    return _unbroadcast(g, sa), _unbroadcast(g, sb)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"elementwise-mul: shapes not broadcastable, {a.shape} * {b.shape}") from exc
    return _emit("elementwise-mul", (a, b), out, (a.data, b.data))


def _vjp_mul(saved, g):
    a, b = saved
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit("scalar-mul", (a,), a.data * c, c)


def _vjp_scalar_mul(saved, g):
    return (g * saved,)


def concat_last(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat-last-axis: empty input list")
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise DimensionError(
                f"concat-last-axis: leading dims differ, {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=-1)
    widths = tuple(t.shape[-1] for t in tensors)
    return _emit("concat-last-axis", tensors, out, widths)


def _vjp_concat_last(saved, g):
    grads = []
    start = 0
    for w in saved:
        grads.append(g[..., start:start + w])
        start += w
    return tuple(grads)


def mean_over_axis(a: Tensor, axis: int) -> Tensor:
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"mean-over-axis: axis {axis} out of range for shape {a.shape}")
    axis = axis % a.ndim
    out = a.data.mean(axis=axis)
    return _emit("mean-over-axis", (a,), out, (axis, a.shape))


def _vjp_mean_over_axis(saved, g):
    axis, in_shape = saved
    n = in_shape[axis]
    return (np.broadcast_to(np.expand_dims(g, axis), in_shape) / n,)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if a.ndim < 2:
        raise DimensionError(f"transpose: needs ndim >= 2, got shape {a.shape}")
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose: invalid axes {axes} for shape {a.shape}")
    return _emit("transpose", (a,), np.transpose(a.data, axes), axes)


def _vjp_transpose(saved, g):
    inverse = np.argsort(saved)
    return (np.transpose(g, inverse),)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from exc
    return _emit("reshape", (a,), out, a.shape)


def _vjp_reshape(saved, g):
    return (g.reshape(saved),)


def slice_axis(a: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"slice: axis {axis} out of range for shape {a.shape}")
    axis = axis % a.ndim
    n = a.shape[axis]
    if not (0 <= start <= stop <= n):
        raise DimensionError(f"slice: [{start}:{stop}] out of range for axis {axis} of {a.shape}")
    index = tuple(slice(None) if i != axis else slice(start, stop) for i in range(a.ndim))
    return _emit("slice", (a,), a.data[index], (index, a.shape))


def _vjp_slice(saved, g):
    index, in_shape = saved
    out = np.zeros(in_shape)
    out[index] = g
    return (out,)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    table = as_tensor(table)
    if table.ndim != 2:
        raise DimensionError(f"embedding-lookup: table must be 2-d, got {table.shape}")
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise DimensionError("embedding-lookup: ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(
            f"embedding-lookup: id out of range [0, {table.shape[0]}) in lookup")
    out = table.data[ids]
    return _emit("embedding-lookup", (table,), out, (ids, table.shape))


def _vjp_embedding_lookup(saved, g):
    ids, table_shape = saved
    grad = np.zeros(table_shape)
    np.add.at(grad, ids.ravel(), g.reshape(-1, table_shape[1]))
    return (grad,)


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _emit("relu", (a,), np.maximum(a.data, 0.0), a.data > 0.0)


def _vjp_relu(saved, g):
    return (g * saved,)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    # tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))
    a = as_tensor(a)
    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x * x)))
    out = 0.5 * x * (1.0 + t)
    return _emit("gelu", (a,), out, (x, t))


def _vjp_gelu(saved, g):
    x, t = saved
    d_inner = _GELU_C * (1.0 + (3 * 0.044715) * (x * x))
    grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
    return (g * grad,)


def sigmoid(a: Tensor) -> Tensor:
    # exp(-softplus(-x)): overflow-free on both tails
    a = as_tensor(a)
    out = np.exp(-np.logaddexp(0.0, -a.data))
    return _emit("sigmoid", (a,), out, out)


def _vjp_sigmoid(saved, g):
    s = saved
    return (g * s * (1.0 - s),)


def softmax_last(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    return _emit("softmax-last-axis", (a,), out, out)


def _vjp_softmax_last(saved, g):
    s = saved
    return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


def layer_norm_last(a: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize over the last axis, then scale/shift: gain * xhat + bias."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer-norm-last-axis: gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (x - mu) * inv
    out = gain.data * xhat + bias.data
    return _emit("layer-norm-last-axis", (a, gain, bias), out, (xhat, inv, gain.data))


def _vjp_layer_norm_last(saved, g):
    xhat, inv, gain = saved
    lead = tuple(range(g.ndim - 1))
    dgain = (g * xhat).sum(axis=lead)
    dbias = g.sum(axis=lead)
    dxhat = g * gain
    dx = inv * (dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, dbias


def squared_error(pred: Tensor, target: Tensor) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"squared-error: shapes differ, {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    return _emit("squared-error", (pred, target), diff ** 2, diff)


def _vjp_squared_error(saved, g):
    diff = saved
    return 2.0 * diff * g, -2.0 * diff * g


def binary_cross_entropy(probs: Tensor, targets: Tensor) -> Tensor:
    """Elementwise BCE with probabilities clamped to [eps, 1-eps], eps=1e-12."""
    probs, targets = as_tensor(probs), as_tensor(targets)
    if probs.shape != targets.shape:
        raise DimensionError(
            f"binary-cross-entropy: shapes differ, {probs.shape} vs {targets.shape}")
    p = np.clip(probs.data, BCE_EPS, 1.0 - BCE_EPS)
    t = targets.data
    out = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    inside = (probs.data > BCE_EPS) & (probs.data < 1.0 - BCE_EPS)
    return _emit("binary-cross-entropy", (probs, targets), out, (p, t, inside))


def _vjp_binary_cross_entropy(saved, g):
    p, t, inside = saved
    dp = g * inside * (p - t) / (p * (1.0 - p))
    dt = g * (np.log1p(-p) - np.log(p))
    return dp, dt


_VJPS: dict[str, Callable] = {
    "matmul": _vjp_matmul,
    "add": _vjp_add,
    "elementwise-mul": _vjp_mul,
    "scalar-mul": _vjp_scalar_mul,
    "concat-last-axis": _vjp_concat_last,
    "mean-over-axis": _vjp_mean_over_axis,
    "transpose": _vjp_transpose,
    "reshape": _vjp_reshape,
    "slice": _vjp_slice,
    "embedding-lookup": _vjp_embedding_lookup,
    "relu": _vjp_relu,
    "gelu": _vjp_gelu,
    "sigmoid": _vjp_sigmoid,
    "softmax-last-axis": _vjp_softmax_last,
    "layer-norm-last-axis": _vjp_layer_norm_last,
    "squared-error": _vjp_squared_error,
    "binary-cross-entropy": _vjp_binary_cross_entropy,
}

_PRIMITIVES: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "elementwise-mul": mul,
    "scalar-mul": scalar_mul,
    "concat-last-axis": lambda *ts, **kw: concat_last(ts, **kw),
    "mean-over-axis": mean_over_axis,
    "transpose": transpose,
    "reshape": reshape,
    "slice": slice_axis,
    "embedding-lookup": embedding_lookup,
    "relu": relu,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "softmax-last-axis": softmax_last,
    "layer-norm-last-axis": layer_norm_last,
    "squared-error": squared_error,
    "binary-cross-entropy": binary_cross_entropy,
}


def apply_primitive(op: str, inputs: Sequence, **kwargs) -> Tensor:
    """Dispatch an op by name; the op set is closed."""
    fn = _PRIMITIVES.get(op)
    if fn is None:
        raise ContractError(f"unknown primitive {op!r}; known: {sorted(_PRIMITIVES)}")
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    """Per-parameter max relative error between analytic and central FD gradients."""

    max_rel_err: dict[str, float]
    tol: float
    h: float
    worst_param: str = field(default="")
    worst_err: float = field(default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst_err <= self.tol


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(1e-8, abs(a) + abs(n))


def grad_check(f: Callable[[], Tensor], params, h: float = 1e-6,
               tol: float = 1e-6) -> CheckReport:
    """Compare backward() gradients of f() against central finite differences.

    `f` must be a deterministic closure over `params` returning a scalar
    Tensor. Every entry of every parameter is perturbed by +-h. The relative
    error is |a - n| / max(1e-8, |a| + |n|); the check passes iff every
    entry is within `tol`.
    """
    if h <= 0 or tol <= 0:
        raise ContractError(f"grad_check: h and tol must be positive, got h={h}, tol={tol}")
    if isinstance(params, dict):
        named = list(params.items())
    else:
        named = [(f"p{i}", p) for i, p in enumerate(params)]

    with Tape():
        out = f()
        if out.data.size != 1:
            raise ContractError(f"grad_check: f must return a scalar, got shape {out.shape}")
        if not np.isfinite(out.data).all():
            raise ContractError("grad_check aborted: f returned a non-finite value")
        grads = backward(out)

    def eval_loss() -> float:
        val = f()
        raw = float(np.asarray(val.data).reshape(()))
        if not np.isfinite(raw):
            raise ContractError("grad_check aborted: non-finite value during FD probe")
        return raw

    report: dict[str, float] = {}
    worst_param, worst = "", 0.0
    for name, p in named:
        analytic = grads.get(p.node_id)
        a = analytic.data if analytic is not None else np.zeros(p.shape)
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = eval_loss()
            flat[i] = orig - h
            down = eval_loss()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = max(err, _rel_err(a_flat[i], numeric))
        report[name] = err
        if err >= worst:
            worst_param, worst = name, err
    return CheckReport(max_rel_err=report, tol=tol, h=h,
                       worst_param=worst_param, worst_err=worst)

"""Small dense-tensor library with reverse-mode differentiation and Adam.

Tensors are rank-2 ``float64`` arrays (vectors are ``(1, d)`` or ``(d, 1)``).
Operations record themselves on the active :class:`Tape` when one is open
and at least one input requires a gradient; outside a tape they are plain
numpy arithmetic, which is what inference uses.

Broadcasting is limited to a row vector ``(1, n)``, a column vector
``(m, 1)`` or a ``(1, 1)`` scalar against an ``(m, n)`` matrix.

    >>> w = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_all(mul(w, w))
    >>> tape.backward(loss)[w]
    array([[2., 4.]])
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import AllMasked, NonFiniteValue, NotScalar, ShapeMismatch, TapeConsumed

__all__ = [
    "Tensor",
    "Tape",
    "constant",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "sigmoid",
    "sum_all",
    "mean",
    "concat_rows",
    "reshape",
    "take",
    "take_rows",
    "cols",
    "group_mean",
    "group_repeat",
    "masked_softmax",
    "masked_log_softmax",
    "AdamState",
    "adam_step",
    "decay_lr",
]


class Tensor:
    """A float64 array that may take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeMismatch(f"tensors are at most rank 2, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"item() on tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple
    backward: Callable


class Tape:
    """Records primitive operations for one backward pass.

    Used as a context manager; tapes nest, the innermost one records.  Each
    thread has its own stack of open tapes.  A tape can be differentiated once.
    """

    _local = threading.local()

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    @classmethod
    def _stack(cls) -> list:
        stack = getattr(cls._local, "stack", None)
        if stack is None:
            stack = cls._local.stack = []
        return stack

    def __enter__(self):
        Tape._stack().append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack().remove(self)
        return False

    @classmethod
    def active(cls) -> Optional["Tape"]:
        stack = cls._stack()
        return stack[-1] if stack else None

    def backward(self, loss: Tensor) -> dict:
        """Gradients of scalar ``loss`` for every leaf tensor that requires one.

        Returns a dict keyed by the leaf :class:`Tensor` objects.
        """
        if self.consumed:
            raise TapeConsumed("backward() already called on this tape")
        if loss.data.size != 1:
            raise NotScalar(f"loss must be scalar, got shape {loss.shape}")
        self.consumed = True
        grads = {id(loss): np.ones_like(loss.data)}
        produced = set()
        for node in reversed(self.nodes):
            produced.add(id(node.out))
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else prev + gi
        leaves = {}
        for node in self.nodes:
            for t in node.inputs:
                if t.requires_grad and id(t) not in produced and id(t) in grads:
                    leaves[t] = grads[id(t)]
        if loss.requires_grad and id(loss) not in produced:
            leaves[loss] = grads[id(loss)]
        return leaves


def _finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"non-finite value produced by {op}")
    return arr


def _record(out_data, op, inputs, backward) -> Tensor:
    _finite(out_data, op)
    tape = Tape.active()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = track
    out.name = None
    if track:
        tape.nodes.append(_Node(out, tuple(inputs), backward))
    return out


def _broadcast_ok(a: tuple, b: tuple) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True).reshape(shape)


# ---------------------------------------------------------------------------
# primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        return (g @ bd.T if a.requires_grad else None, ad.T @ g if b.requires_grad else None)

    return _record(ad @ bd, "matmul", (a, b), back)


def _binary(a: Tensor, b: Tensor, op: str):
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeMismatch(f"{op} {a.shape} with {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary(a, b, "add")
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _record(a.data + b.data, "add", (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary(a, b, "sub")
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _record(a.data - b.data, "sub", (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    _binary(a, b, "mul")
    ad, bd = a.data, b.data

    def back(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return _record(ad * bd, "mul", (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(a.data * c, "scale", (a,), lambda g: (g * c,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(y, "sigmoid", (a,), lambda g: (g * y * (1.0 - y),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _record(a.data.sum().reshape(1, 1), "sum", (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean(a: Tensor) -> Tensor:
    shape, size = a.shape, a.data.size
    return _record(
        a.data.mean().reshape(1, 1), "mean", (a,), lambda g: (np.full(shape, g[0, 0] / size),)
    )


def concat_rows(parts) -> Tensor:
    parts = list(parts)
    if len({p.shape[1] for p in parts}) != 1:
        raise ShapeMismatch("concat_rows needs equal column counts")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def back(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _record(np.concatenate([p.data for p in parts], axis=0), "concat_rows", parts, back)


def reshape(a: Tensor, rows: int, columns: int) -> Tensor:
    if rows * columns != a.data.size:
        raise ShapeMismatch(f"cannot reshape {a.shape} to {(rows, columns)}")
    shape = a.shape
    return _record(a.data.reshape(rows, columns), "reshape", (a,), lambda g: (g.reshape(shape),))


def take(a: Tensor, idx) -> Tensor:
    """``out[g, 0] = a[g, idx[g]]`` for each row ``g``."""
    idx = np.asarray(idx, dtype=np.intp).reshape(-1)
    if idx.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"take needs one index per row, got {idx.shape[0]} for {a.shape}")
    rows = np.arange(a.shape[0])
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        out[rows, idx] = g[:, 0]
        return (out,)

    return _record(a.data[rows, idx].reshape(-1, 1), "take", (a,), back)


def take_rows(a: Tensor, idx) -> Tensor:
    """Rows ``a[idx]`` as a new ``(len(idx), d)`` tensor."""
    idx = np.asarray(idx, dtype=np.intp).reshape(-1)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.data[idx], "take_rows", (a,), back)


def cols(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _record(a.data[:, start:stop].copy(), "cols", (a,), back)


def group_mean(a: Tensor, groups: int) -> Tensor:
    """Mean over each of ``groups`` equal contiguous row blocks: ``(G*N, d) -> (G, d)``."""
    rows, d = a.shape
    if groups < 1 or rows % groups:
        raise ShapeMismatch(f"{rows} rows do not split into {groups} groups")
    size = rows // groups
    out = a.data.reshape(groups, size, d).mean(axis=1)
    return _record(out, "group_mean", (a,), lambda g: (np.repeat(g / size, size, axis=0),))


def group_repeat(a: Tensor, size: int) -> Tensor:
    """Repeat every row ``size`` times: ``(G, d) -> (G*size, d)``."""
    groups, d = a.shape

    def back(g):
        return (g.reshape(groups, size, d).sum(axis=1),)

    return _record(np.repeat(a.data, size, axis=0), "group_repeat", (a,), back)


def _mask_array(mask, shape) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.shape != shape:
        raise ShapeMismatch(f"mask shape {m.shape} does not match logits {shape}")
    if m.all(axis=1).any():
        raise AllMasked("every position of a row is masked")
    return m


def _softmax_parts(x: np.ndarray, masked: np.ndarray):
    z = np.where(masked, -np.inf, x)
    top = z.max(axis=1, keepdims=True)
    e = np.exp(z - top)  # masked -> exp(-inf) = 0
    s = e.sum(axis=1, keepdims=True)
    return e / s, top, s


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Row-wise softmax with ``mask=True`` positions forced to probability 0.

    Stabilized by subtracting the maximum over the unmasked entries.
    """
    masked = _mask_array(mask, logits.shape)
    p, _, _ = _softmax_parts(logits.data, masked)

    def back(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _record(p, "masked_softmax", (logits,), back)


def masked_log_softmax(logits: Tensor, mask) -> Tensor:
    """Row-wise log-softmax over unmasked entries; masked entries hold 0."""
    masked = _mask_array(mask, logits.shape)
    p, top, s = _softmax_parts(logits.data, masked)
    out = np.where(masked, 0.0, logits.data - top - np.log(s))
    free = ~masked

    def back(g):
        g = np.where(free, g, 0.0)
        return (free * (g - p * g.sum(axis=1, keepdims=True)),)

    return _record(out, "masked_log_softmax", (logits,), back)


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """In-place bias-corrected Adam update of ``params`` (name -> Tensor).

    ``grads`` maps the same names to arrays; missing names count as zero.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def decay_lr(state: AdamState, factor: float) -> None:
    state.lr *= factor

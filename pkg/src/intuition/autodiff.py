"""Reverse-mode automatic differentiation over dense numpy tensors.

Every other module in this package builds its forward passes out of the
primitives defined here.  Values are float32 by default; reductions
accumulate in float64 and cast back, and the finite-difference checker
promotes everything to float64.  The primitive set is closed: new ops
require a gradient test before anything downstream may rely on them.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
_LN_EPS = 1e-5


class ShapeMismatch(ValueError):
    """Raised when operand shapes do not conform to a primitive."""


class Tensor:
    """A dense array plus an optional gradient buffer.

    Tensors are immutable after creation by convention; only ``grad`` is
    written to (by :func:`backward`).  ``grad is None`` means zero.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_idx")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None
        self._idx: Optional[int] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


class TapeEntry:
    """One recorded primitive application."""

    __slots__ = ("kind", "inputs", "output", "backward_fn")

    def __init__(self, kind, inputs, output, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive applications.

    Entries are appended in execution order, so every operand of entry i
    was produced by an entry j < i or is a leaf.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def record(self, kind: str, inputs: tuple, out: Tensor, backward_fn) -> None:
        out._tape = self
        out._idx = len(self.entries)
        self.entries.append(TapeEntry(kind, inputs, out, backward_fn))

    def __enter__(self) -> "Tape":
        _state().tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state().tapes.pop()

    def __len__(self) -> int:
        return len(self.entries)


class _ThreadState(threading.local):
    def __init__(self):
        self.tapes: list[Tape] = []
        self.grad_enabled = True


_STATE = _ThreadState()


def _state() -> _ThreadState:
    return _STATE


def _active_tape() -> Tape:
    st = _state()
    if not st.tapes:
        st.tapes.append(Tape())  # ambient tape for ad-hoc use
    return st.tapes[-1]


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation passes)."""
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def _should_record(*tensors: Tensor) -> bool:
    if not _state().grad_enabled:
        return False
    return any(t.requires_grad or t._tape is not None for t in tensors)


def _make(data, inputs: tuple, kind: str, backward_fn) -> Tensor:
    out = Tensor(data)
    if _should_record(*inputs):
        out.requires_grad = True
        _active_tape().record(kind, inputs, out, backward_fn)
    return out


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_broadcast("add", a, b)
    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_broadcast("sub", a, b)
    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(a.data - b.data, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_broadcast("mul", a, b)
    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(a.data * b.data, (a, b), "mul", bw)


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    def bw(g):
        return (g * s,)
    return _make(x.data * np.asarray(s, dtype=x.dtype), (x,), "scale", bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch(f"matmul: operands must be >= 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: inner dims of {a.shape} and {b.shape} differ")
    def bw(g):
        da = np.matmul(g, np.swapaxes(b.data, -1, -2))
        db = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(da, a.shape), _unbroadcast(db, b.shape)
    return _make(np.matmul(a.data, b.data), (a, b), "matmul", bw)


def sigmoid(x: Tensor) -> Tensor:
    # evaluate via the positive branch to avoid exp overflow
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out[~pos] = ez / (1.0 + ez)
    def bw(g):
        return (g * out * (1.0 - out),)
    return _make(out, (x,), "sigmoid", bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last dimension with max-subtraction."""
    m = np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    y = e / np.sum(e, axis=-1, keepdims=True)
    def bw(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        return (y * (g - dot),)
    return _make(y, (x,), "softmax", bw)


def log(x: Tensor) -> Tensor:
    def bw(g):
        return (g / x.data,)
    return _make(np.log(x.data), (x,), "log", bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    def bw(g):
        return (g * out,)
    return _make(out, (x,), "exp", bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    def bw(g):
        return (g * mask,)
    return _make(x.data * mask, (x,), "relu", bw)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp elementwise; gradient is identity strictly inside [lo, hi]."""
    mask = (x.data > lo) & (x.data < hi)
    def bw(g):
        return (g * mask,)
    return _make(np.clip(x.data, lo, hi), (x,), "clip", bw)


def _reduce(x: Tensor, axis, keepdims, kind: str) -> Tensor:
    # float64 accumulation, cast back to the input dtype
    acc = np.sum(x.data, axis=axis, keepdims=keepdims, dtype=np.float64)
    if kind == "mean":
        count = x.data.size if axis is None else np.prod(
            [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        acc = acc / count
    else:
        count = 1
    out_data = np.asarray(acc, dtype=x.dtype)
    def bw(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for a in sorted(a % x.data.ndim for a in axes):
                g = np.expand_dims(g, a)
        gx = np.broadcast_to(g, x.shape).astype(x.dtype, copy=False)
        return (gx / count if kind == "mean" else gx.copy(),)
    return _make(out_data, (x,), kind, bw)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return _reduce(x, axis, keepdims, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce(x, axis, keepdims, "mean")


def embedding_gather(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a (V, D) table by an integer id array."""
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeMismatch(f"embedding-gather: table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(
            f"embedding-gather: id out of range for table with {table.shape[0]} rows")
    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)
    return _make(table.data[ids], (table,), "embedding-gather", bw)


def transpose_last_two(x: Tensor) -> Tensor:
    if x.data.ndim < 2:
        raise ShapeMismatch(f"transpose-last-two: needs >= 2-d, got {x.shape}")
    def bw(g):
        return (np.swapaxes(g, -1, -2),)
    return _make(np.swapaxes(x.data, -1, -2), (x,), "transpose-last-two", bw)


def layer_norm(x: Tensor) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance (no affine)."""
    d = x.data.astype(np.float64, copy=False)
    mu = d.mean(axis=-1, keepdims=True)
    var = ((d - mu) ** 2).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + _LN_EPS)
    y = ((d - mu) * istd).astype(x.dtype)
    istd = istd.astype(x.dtype)
    def bw(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (istd * (g - gm - y * gym),)
    return _make(y, (x,), "layer-normalize-last-dim", bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeMismatch("concat: empty operand list")
    sizes = [t.shape[axis] for t in tensors]
    def bw(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))
    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tensors, "concat", bw)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    sl = [np.s_[:]] * x.data.ndim
    sl[axis] = np.s_[start:stop]
    sl = tuple(sl)
    def bw(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        return (gx,)
    return _make(x.data[sl].copy(), (x,), "slice", bw)


def stop_gradient(x: Tensor) -> Tensor:
    """Identity on the forward value; blocks all gradient flow."""
    out = Tensor.__new__(Tensor)
    out.data = x.data  # shared buffer keeps the forward bit-equal
    out.requires_grad = False
    out.grad = None
    out._tape = None
    out._idx = None
    return out


def custom_op(kind: str, inputs: Sequence[Tensor], out_data: np.ndarray,
              backward_fn: Callable) -> Tensor:
    """Record a non-primitive op.  Callers own its gradient test."""
    return _make(out_data, tuple(inputs), kind, backward_fn)


_PRIMITIVES: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "sub": sub,
    "scale": scale,
    "sigmoid": sigmoid,
    "softmax-last-dim": softmax,
    "log": log,
    "exp": exp,
    "mean": mean,
    "sum": sum,
    "embedding-gather": embedding_gather,
    "transpose-last-two": transpose_last_two,
    "relu": relu,
    "layer-normalize-last-dim": layer_norm,
    "concat": concat,
    "slice": slice_axis,
    "clip": clip,
}


def apply_primitive(kind: str, operands, **kwargs) -> Tensor:
    """Dispatch a primitive by name; operands is a list of Tensors."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}") from None
    if kind == "concat":
        return fn(operands, **kwargs)
    return fn(*operands, **kwargs)


def primitive_names() -> tuple:
    return tuple(_PRIMITIVES)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf's .grad.

    Repeated calls without zeroing grads accumulate.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._tape is None:
        return  # loss does not depend on anything recorded
    tape = loss._tape
    pending: dict[int, np.ndarray] = {
        id(loss): np.ones_like(loss.data)
    }
    for idx in range(loss._idx, -1, -1):
        entry = tape.entries[idx]
        g = pending.pop(id(entry.output), None)
        if g is None:
            continue
        grads = entry.backward_fn(g)
        for inp, gi in zip(entry.inputs, grads):
            if gi is None:
                continue
            if inp._tape is tape and inp._idx is not None:
                key = id(inp)
                if key in pending:
                    pending[key] = pending[key] + gi
                else:
                    pending[key] = gi
            elif inp.requires_grad:
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += gi


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, h: float = 1e-3,
               flip_probe: Optional[Callable[[Tensor], object]] = None,
               return_details: bool = False):
    """Max relative error between analytic and central-difference gradients.

    The check runs entirely in float64.  ``flip_probe``, when given, maps a
    point to a discrete signature (e.g. quantization indices); coordinates
    whose perturbation changes the signature are skipped.  With
    ``return_details`` the result is ``(max_err, checked, skipped)``.
    """
    x64 = np.asarray(point.data, dtype=np.float64).copy()
    with Tape():
        xt = Tensor(x64.copy(), requires_grad=True)
        loss = f(xt)
        backward(loss)
    analytic = np.zeros_like(x64) if xt.grad is None else np.asarray(xt.grad, dtype=np.float64)

    base_sig = flip_probe(Tensor(x64.copy())) if flip_probe is not None else None
    flat = x64.reshape(-1)
    ana = analytic.reshape(-1)
    max_err = 0.0
    skipped = 0
    for i in range(flat.size):
        vals = []
        skip = False
        for sgn in (1.0, -1.0):
            pert = flat.copy()
            pert[i] += sgn * h
            pt = Tensor(pert.reshape(x64.shape))
            if flip_probe is not None and flip_probe(pt) != base_sig:
                skip = True
                break
            with no_grad():
                vals.append(float(f(pt).data.reshape(-1)[0]))
        if skip:
            skipped += 1
            continue
        numeric = (vals[0] - vals[1]) / (2.0 * h)
        err = abs(ana[i] - numeric) / (abs(ana[i]) + abs(numeric) + 1e-8)
        if err > max_err:
            max_err = err
    if return_details:
        return max_err, flat.size - skipped, skipped
    return max_err

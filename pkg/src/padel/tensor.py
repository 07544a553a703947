"""Dense 2-D tensors with a define-by-run gradient tape.

Every tensor wraps a ``float64`` array of shape ``(rows, cols)``.  Operations
record themselves on the innermost active :class:`Tape` whenever one of their
inputs requires a gradient; :meth:`Tape.backward` then replays the tape in
reverse.  Tapes are thread-local, so independent tapes can run on different
threads.

    >>> W = Tensor(np.ones((2, 2)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_all(W)
    ...     grads = tape.backward(loss)
    >>> grads[W].tolist()
    [[1.0, 1.0], [1.0, 1.0]]
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class TapeError(RuntimeError):
    pass


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A 2-D float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor values must be finite")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._node = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() needs a 1x1 tensor")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return pointwise_mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    @property
    def T(self):
        return transpose(self)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise ShapeError("scalar operands need an explicit broadcast; use scale() or add_scalar()")
    return Tensor(arr)


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Records operations in execution order; replays them backwards."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:  # pragma: no cover - misuse
            raise TapeError("tape exited out of order")
        return False

    def record(self, inputs, output: Tensor, backward: Callable) -> None:
        node = _Node(inputs, output, backward)
        output._node = node
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Accumulate d(loss)/d(leaf) for every leaf that requires a gradient.

        The tape is cleared afterwards.  Gradients are also written to
        ``leaf.grad`` (overwriting, not accumulating across calls).
        """
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape}")
        if loss._node is None or loss._node not in self._index():
            raise TapeError("loss was not produced on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if t._node is None:
                    leaves[key] = t
        out: dict[Tensor, np.ndarray] = {}
        for key, t in leaves.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros_like(t.data)
            t.grad = g
            out[t] = g
        self.clear()
        return out

    def _index(self):
        return {node for node in self.nodes}

    def clear(self) -> None:
        for node in self.nodes:
            node.output._node = None
        self.nodes = []


def _make(value: np.ndarray, inputs: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = value
    out.grad = None
    out.name = None
    out._node = None
    out.requires_grad = False
    if needs:
        tape = active_tape()
        if tape is not None:
            out.requires_grad = True
            tape.record(tuple(inputs), out, backward)
    return out


def _check(cond: bool, msg: str):
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------- core ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.cols == b.rows, f"matmul {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return _make(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g), "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"add {a.shape} + {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def row_broadcast_add(a: Tensor, row: Tensor) -> Tensor:
    """``a + row`` with a 1 x cols row added to every row of ``a``."""
    _check(row.rows == 1 and row.cols == a.cols, f"row_broadcast_add {a.shape} + {row.shape}")
    return _make(a.data + row.data, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True)), "row_broadcast_add")


def pointwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"pointwise_mul {a.shape} * {b.shape}")
    A, B = a.data, b.data
    return _make(A * B, (a, b), lambda g: (g * B, g * A), "pointwise_mul")


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _make(a.data + c, (a,), lambda g: (g,), "add_scalar")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        e = np.exp(a.data)
    return _make(e, (a,), lambda g: (g * e,), "exp")


def log(a: Tensor) -> Tensor:
    A = a.data
    if np.any(A <= 0):
        raise NonFiniteError("log of a non-positive value")
    return _make(np.log(A), (a,), lambda g: (g / A,), "log")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def concat_cols(*ts: Tensor) -> Tensor:
    rows = ts[0].rows
    _check(all(t.rows == rows for t in ts), "concat_cols needs equal row counts")
    edges = np.cumsum([0] + [t.cols for t in ts])

    def back(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(ts)))

    return _make(np.concatenate([t.data for t in ts], axis=1), ts, back, "concat_cols")


def concat_rows(*ts: Tensor) -> Tensor:
    cols = ts[0].cols
    _check(all(t.cols == cols for t in ts), "concat_rows needs equal column counts")
    edges = np.cumsum([0] + [t.rows for t in ts])

    def back(g):
        return tuple(g[edges[i]:edges[i + 1]] for i in range(len(ts)))

    return _make(np.concatenate([t.data for t in ts], axis=0), ts, back, "concat_rows")


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    _check(0 <= start <= stop <= a.rows, f"slice_rows [{start}:{stop}] of {a.rows} rows")

    def back(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _make(a.data[start:stop].copy(), (a,), back, "slice_rows")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    _check(0 <= start <= stop <= a.cols, f"slice_cols [{start}:{stop}] of {a.cols} cols")

    def back(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _make(a.data[:, start:stop].copy(), (a,), back, "slice_cols")


def gather_rows(a: Tensor, index) -> Tensor:
    """Rows ``a[index]``; repeated indices accumulate in the backward pass."""
    idx = np.asarray(index, dtype=np.int64)
    _check(idx.ndim == 1, "gather_rows needs a 1-D index")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise ShapeError(f"gather_rows index out of range for {a.rows} rows")

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), back, "gather_rows")


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows: (n, c) -> (1, c)."""
    n = a.rows
    _check(n > 0, "mean_rows of an empty tensor")
    return _make(a.data.mean(axis=0, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g / n, a.shape).copy(),), "mean_rows")


def sum_rows(a: Tensor) -> Tensor:
    """Sum across columns for each row: (n, c) -> (n, 1)."""
    return _make(a.data.sum(axis=1, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g, a.shape).copy(),), "sum_rows")


def sum_all(a: Tensor) -> Tensor:
    return _make(np.array([[a.data.sum()]]), (a,),
                 lambda g: (np.full(a.shape, g[0, 0]),), "sum_all")


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return _make(np.array([[a.data.mean()]]), (a,),
                 lambda g: (np.full(a.shape, g[0, 0] / n),), "mean_all")


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    _check(rows * cols == a.data.size, f"cannot reshape {a.shape} to {(rows, cols)}")
    return _make(a.data.reshape(rows, cols).copy(), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def const_matmul(M, a: Tensor) -> Tensor:
    """``M @ a`` for a constant (dense or scipy-sparse) matrix ``M``."""
    _check(M.shape[1] == a.rows, f"const_matmul {M.shape} @ {a.shape}")
    out = M @ a.data
    if sp.issparse(out):  # pragma: no cover - defensive
        out = out.toarray()
    return _make(np.asarray(out), (a,), lambda g: (np.asarray(M.T @ g),), "const_matmul")


def logsumexp_rows(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Stable ``log(sum(exp(a)))`` per row, optionally over ``mask``-selected entries."""
    A = a.data
    if mask is None:
        mask = np.ones(A.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    _check(mask.shape == A.shape, "logsumexp mask shape")
    if not mask.any(axis=1).all():
        raise ShapeError("every row needs at least one selected entry")
    masked = np.where(mask, A, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    w = np.where(mask, np.exp(masked - m), 0.0)
    s = w.sum(axis=1, keepdims=True)
    soft = w / s
    return _make(m + np.log(s), (a,), lambda g: (g * soft,), "logsumexp_rows")


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Scale each row to unit norm; all-zero rows stay zero (and pass no gradient)."""
    A = a.data
    norms = np.sqrt((A * A).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    U = np.where(norms > 0, A / safe, 0.0)

    def back(g):
        proj = (g * U).sum(axis=1, keepdims=True)
        return (np.where(norms > 0, (g - U * proj) / safe, 0.0),)

    return _make(U, (a,), back, "l2_normalize_rows")


def bce_with_logits(logits: Tensor, target: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy ``-[y log s(x) + (1-y) log(1-s(x))]``."""
    X = logits.data
    Y = np.asarray(target, dtype=np.float64)
    _check(Y.shape == X.shape, f"bce target {Y.shape} vs logits {X.shape}")
    out = np.maximum(X, 0.0) - X * Y + np.log1p(np.exp(-np.abs(X)))
    s = _sigmoid(X)
    return _make(out, (logits,), lambda g: (g * (s - Y),), "bce_with_logits")


class Function:
    """Escape hatch for fused operations.

    Subclasses implement ``forward(*arrays) -> array`` and
    ``backward(grad) -> tuple of arrays`` (one per input, ``None`` allowed).
    """

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray):
        raise NotImplementedError

    def __call__(self, *inputs: Tensor) -> Tensor:
        value = self.forward(*(t.data for t in inputs))
        return _make(np.asarray(value, dtype=np.float64), inputs, self.backward, type(self).__name__)


# ---------------------------------------------------------------- params


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)), name=name)


class AdamW:
    """Adam with decoupled weight decay.

    Decay is applied as ``p -= lr * weight_decay * p`` before the adaptive
    step, the same ordering as the usual reference implementation.
    """

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, weight_decay: float = 1e-2,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: dict[Tensor, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient {g.shape} for parameter {p.shape}")
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** t)
            v_hat = self.v[i] / (1 - b2 ** t)
            p.data = p.data * (1.0 - self.lr * self.weight_decay) - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------- checkpoints


def save_tensors(path, tensors: dict[str, Tensor | np.ndarray]) -> None:
    """Write named tensors as an uncompressed ``.npz`` container (any extension)."""
    arrays = {k: np.ascontiguousarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64)
              for k, v in tensors.items()}
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_tensors(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as z:
        return {k: z[k].copy() for k in z.files}

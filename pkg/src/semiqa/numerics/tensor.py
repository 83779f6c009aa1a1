"""Reverse-mode automatic differentiation over float64 numpy arrays.

Everything is deliberately small and deterministic: tensors wrap row-major
float64 ndarrays, primitives record themselves on the active GradTape, and
``GradTape.backward`` replays the records in exact reverse execution order.
With no tape active, primitives are plain numpy calls (the inference path).

Shapes are concrete, not broadcast: operands must have equal shapes, except
that scalars (shape ``()``) combine with anything.
"""

import numpy as np


class NumericsError(Exception):
    """Raised on non-finite values, shape mismatches, or tape misuse."""


_ACTIVE_TAPE = None


def _as_array(x):
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericsError("non-finite values in tensor input")
    return a


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray.

    ``grad`` is populated for tensors with ``requires_grad`` when a tape is
    replayed; intermediate gradients live only inside the replay.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; all routed through the module-level primitives.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class GradTape:
    """Ordered record of executed primitives, replayed in reverse.

    Use as a context manager around the forward pass, then call
    ``backward(loss)``. Gradients of tensors with ``requires_grad`` are
    accumulated into their ``grad`` slots; replaying twice from the same
    slot state yields identical gradients.
    """

    def __init__(self):
        self._records = []  # (out, inputs, backward_fn), execution order
        self._output_ids = set()

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise NumericsError("a GradTape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self):
        return len(self._records)

    def record(self, out, inputs, backward_fn):
        self._records.append((out, inputs, backward_fn))
        self._output_ids.add(id(out))

    def backward(self, loss, seed=1.0):
        """Accumulate d(loss)/d(leaf) into every requires_grad leaf."""
        if loss.data.shape != ():
            raise NumericsError("backward requires a scalar loss")
        if not np.isfinite(loss.data):
            raise NumericsError("non-finite loss")
        local = {id(loss): np.asarray(seed, dtype=np.float64)}
        for out, inputs, backward_fn in reversed(self._records):
            g_out = local.pop(id(out), None)
            if g_out is None:
                continue
            grads = backward_fn(g_out)
            for inp, g in zip(inputs, grads):
                if g is None:
                    continue
                if id(inp) in self._output_ids:
                    acc = local.get(id(inp))
                    local[id(inp)] = g if acc is None else acc + g
                elif inp.requires_grad:
                    inp.grad += g


def _record(out, inputs, backward_fn):
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.record(out, inputs, backward_fn)
    return out


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _out(data):
    t = Tensor.__new__(Tensor)
    t.data = data
    t.requires_grad = False
    t.grad = None
    if not np.all(np.isfinite(data)):
        raise NumericsError("non-finite values produced by an operation")
    return t


def constant(x):
    """A tensor that never receives gradients."""
    return _wrap(x)


def _unbroadcast(g, shape):
    # Only scalar <-> array broadcasting is supported.
    if shape == ():
        return np.asarray(g.sum(), dtype=np.float64)
    return g


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise NumericsError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = _out(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise NumericsError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    out = _out(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise NumericsError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = _out(a.data * b.data)
    return _record(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a):
    a = _wrap(a)
    out = _out(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def matmul(a, b):
    """Matrix/vector product for ndim in {1, 2}; 1D @ 1D is an inner product."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim == 2 and b.ndim == 2:
        out = _out(a.data @ b.data)
        bw = lambda g: (g @ b.data.T, a.data.T @ g)
    elif a.ndim == 2 and b.ndim == 1:
        out = _out(a.data @ b.data)
        bw = lambda g: (np.outer(g, b.data), a.data.T @ g)
    elif a.ndim == 1 and b.ndim == 2:
        out = _out(a.data @ b.data)
        bw = lambda g: (b.data @ g, np.outer(a.data, g))
    elif a.ndim == 1 and b.ndim == 1:
        out = _out(np.asarray(a.data @ b.data))
        bw = lambda g: (g * b.data, g * a.data)
    else:
        raise NumericsError(f"matmul supports ndim 1 or 2, got {a.ndim} and {b.ndim}")
    return _record(out, (a, b), bw)


def transpose(a):
    a = _wrap(a)
    out = _out(a.data.T.copy())
    return _record(out, (a,), lambda g: (g.T,))


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out = _out(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), bw)


def stack_rows(vectors):
    """Stack 1D tensors into a matrix, one per row."""
    vectors = [_wrap(v) for v in vectors]
    out = _out(np.stack([v.data for v in vectors], axis=0))

    def bw(g):
        return tuple(g[i] for i in range(len(vectors)))

    return _record(out, tuple(vectors), bw)


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    a = _wrap(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = _out(a.data[idx].copy())

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _record(out, (a,), bw)


def pick(a, index):
    """Scalar element of a 1D tensor."""
    a = _wrap(a)
    if a.ndim != 1:
        raise NumericsError("pick expects a 1D tensor")
    out = _out(np.asarray(a.data[index]))

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _record(out, (a,), bw)


def pick_row(a, index):
    """Row of a 2D tensor as a 1D tensor."""
    a = _wrap(a)
    out = _out(a.data[index].copy())

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _record(out, (a,), bw)


def gather_rows(a, indices):
    """Rows of a 2D tensor selected by an integer sequence (embedding lookup)."""
    a = _wrap(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = _out(a.data[idx].copy())

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (a,), bw)


def scatter_sum(values, indices, size):
    """out[j] = sum of values[i] over i with indices[i] == j."""
    values = _wrap(values)
    idx = np.asarray(indices, dtype=np.intp)
    out = _out(np.bincount(idx, weights=values.data, minlength=size).astype(np.float64))

    def bw(g):
        return (g[idx],)

    return _record(out, (values,), bw)


def sum_(a):
    a = _wrap(a)
    out = _out(np.asarray(a.data.sum()))
    return _record(out, (a,), lambda g: (np.full_like(a.data, g),))


def mean(a):
    a = _wrap(a)
    n = a.data.size
    out = _out(np.asarray(a.data.mean()))
    return _record(out, (a,), lambda g: (np.full_like(a.data, g / n),))


def add_n(tensors):
    """Sum of same-shape tensors in one record."""
    tensors = [_wrap(t) for t in tensors]
    acc = tensors[0].data.copy()
    for t in tensors[1:]:
        acc += t.data
    out = _out(acc)
    return _record(out, tuple(tensors), lambda g: tuple(g for _ in tensors))


def sigmoid(a):
    a = _wrap(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = _out(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a):
    a = _wrap(a)
    t = np.tanh(a.data)
    out = _out(t)
    return _record(out, (a,), lambda g: (g * (1.0 - t * t),))


def exp(a):
    a = _wrap(a)
    e = np.exp(a.data)
    out = _out(e)
    return _record(out, (a,), lambda g: (g * e,))


def log(a):
    a = _wrap(a)
    out = _out(np.log(a.data))
    return _record(out, (a,), lambda g: (g / a.data,))


def softmax(logits):
    """Stable softmax of a 1D tensor; entries positive, sum 1."""
    logits = _wrap(logits)
    if logits.ndim != 1 or logits.data.size == 0:
        raise NumericsError("softmax expects a non-empty 1D tensor")
    if not np.all(np.isfinite(logits.data)):
        raise NumericsError("non-finite logits passed to softmax")
    z = logits.data - logits.data.max()
    e = np.exp(z)
    p = e / e.sum()
    out = _out(p)

    def bw(g):
        return (p * (g - np.dot(g, p)),)

    return _record(out, (logits,), bw)


def row_softmax(logits):
    """Softmax along axis 1 of a 2D tensor."""
    logits = _wrap(logits)
    if logits.ndim != 2:
        raise NumericsError("row_softmax expects a 2D tensor")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    out = _out(p)

    def bw(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _record(out, (logits,), bw)


def masked_softmax(logits, keep):
    """Softmax over the kept positions of a 1D tensor; others get exactly 0.

    ``keep`` is a boolean array. Masked positions receive probability 0.0
    and contribute no gradient.
    """
    logits = _wrap(logits)
    keep = np.asarray(keep, dtype=bool)
    if logits.ndim != 1 or keep.shape != logits.shape:
        raise NumericsError("masked_softmax expects matching 1D tensor and mask")
    if not keep.any():
        raise NumericsError("masked_softmax requires at least one kept position")
    z = logits.data[keep]
    z = z - z.max()
    e = np.exp(z)
    sub_p = e / e.sum()
    p = np.zeros_like(logits.data)
    p[keep] = sub_p
    out = _out(p)

    def bw(g):
        g_sub = g[keep]
        full = np.zeros_like(logits.data)
        full[keep] = sub_p * (g_sub - np.dot(g_sub, sub_p))
        return (full,)

    return _record(out, (logits,), bw)

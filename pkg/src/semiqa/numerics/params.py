"""Named trainable parameters with gradient slots and SGD stepping."""

import struct

import numpy as np

from .tensor import NumericsError, Tensor


def glorot_limit(shape):
    """Uniform init half-width sqrt(6 / (fan_in + fan_out)).

    For matrices fan is (rows, cols); a bare vector of length n used as a
    dot-product weight is treated as (n, 1).
    """
    if len(shape) == 2:
        fan_out, fan_in = shape
    elif len(shape) == 1:
        fan_out, fan_in = shape[0], 1
    else:
        raise NumericsError(f"unsupported parameter shape {shape}")
    return np.sqrt(6.0 / (fan_in + fan_out))


class ParamStore:
    """Map of name -> parameter Tensor, each with a shape-matched grad slot."""

    def __init__(self, seed=0):
        self._params = {}
        self.step_count = 0
        self._rng = np.random.default_rng(seed)

    def add(self, name, shape, init="glorot"):
        """Create and register a parameter. init is 'glorot' or 'zeros'."""
        if name in self._params:
            raise NumericsError(f"duplicate parameter name {name!r}")
        shape = tuple(shape)
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "glorot":
            s = glorot_limit(shape)
            data = self._rng.uniform(-s, s, size=shape)
        else:
            raise NumericsError(f"unknown init {init!r}")
        p = Tensor(data, requires_grad=True)
        self._params[name] = p
        return p

    def add_from(self, name, data):
        """Register a parameter with explicit initial values."""
        if name in self._params:
            raise NumericsError(f"duplicate parameter name {name!r}")
        p = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._params[name] = p
        return p

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for p in self._params.values():
            p.grad[...] = 0.0

    def grad_norm(self):
        total = 0.0
        for p in self._params.values():
            total += float(np.sum(p.grad * p.grad))
        return float(np.sqrt(total))

    def sgd_step(self, lr, clip=5.0):
        """One gradient-descent step with optional global-norm clipping."""
        if clip is not None and clip > 0:
            norm = self.grad_norm()
            if norm > clip:
                scale = clip / norm
                for p in self._params.values():
                    p.grad *= scale
        for p in self._params.values():
            p.data -= lr * p.grad
            if not np.all(np.isfinite(p.data)):
                raise NumericsError(f"parameter {self._name_of(p)!r} became non-finite")
        self.step_count += 1

    def _name_of(self, target):
        for name, p in self._params.items():
            if p is target:
                return name
        return "?"

    def copy_values(self):
        """Snapshot of parameter arrays, name -> ndarray copy."""
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_values(self, values):
        for name, p in self._params.items():
            src = values[name]
            if src.shape != p.data.shape:
                raise NumericsError(f"shape mismatch loading {name!r}")
            p.data[...] = src

    # Binary packing for checkpoints: little-endian, length-prefixed.
    def to_bytes(self):
        chunks = [struct.pack("<IQ", len(self._params), self.step_count)]
        for name, p in self._params.items():
            nb = name.encode("utf-8")
            chunks.append(struct.pack("<H", len(nb)))
            chunks.append(nb)
            chunks.append(struct.pack("<B", p.data.ndim))
            for dim in p.data.shape:
                chunks.append(struct.pack("<Q", dim))
            chunks.append(p.data.astype("<f8").tobytes())
        return b"".join(chunks)

    def load_bytes(self, raw):
        off = 0
        count, step = struct.unpack_from("<IQ", raw, off)
        off += 12
        if count != len(self._params):
            raise NumericsError("parameter count mismatch in checkpoint")
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = []
            for _ in range(ndim):
                (dim,) = struct.unpack_from("<Q", raw, off)
                off += 8
                shape.append(dim)
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
            off += n * 8
            if name not in self._params:
                raise NumericsError(f"unknown parameter {name!r} in checkpoint")
            self._params[name].data[...] = data
        self.step_count = step

"""GRU cell and bidirectional encoder built on the autodiff primitives.

Gate convention:
    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    c = tanh(W_c x + U_c (r * h) + b_c)
    h' = (1 - z) * h + z * c

The x-side weights and biases are fused as W (3h x n_in) and b (3h,) in
block order [z; r; c]; the h-side is split into U_zr (2h x h) and U_c (h x h)
so the candidate block can be applied to r * h.
"""

import numpy as np

from .tensor import NumericsError, Tensor, concat, matmul, mul, narrow, sigmoid, stack_rows, sub, tanh


class GRUCell:
    """One GRU direction; parameters live in a ParamStore under a prefix."""

    def __init__(self, store, prefix, input_dim, hidden_dim):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        h = hidden_dim
        self.w = store.add(f"{prefix}.w", (3 * h, input_dim))
        self.u_zr = store.add(f"{prefix}.u_zr", (2 * h, h))
        self.u_c = store.add(f"{prefix}.u_c", (h, h))
        self.b = store.add(f"{prefix}.b", (3 * h,), init="zeros")

    def zero_state(self):
        return Tensor(np.zeros(self.hidden_dim))

    def step(self, x, h_prev):
        """h_prev (h,), x (input_dim,) -> new state (h,)."""
        if x.shape != (self.input_dim,) or h_prev.shape != (self.hidden_dim,):
            raise NumericsError(
                f"gru_cell dimension mismatch: x{x.shape}, h{h_prev.shape}, "
                f"expected ({self.input_dim},), ({self.hidden_dim},)")
        h = self.hidden_dim
        gx = matmul(self.w, x) + self.b          # (3h,)
        uh = matmul(self.u_zr, h_prev)           # (2h,)
        z = sigmoid(narrow(gx, 0, 0, h) + narrow(uh, 0, 0, h))
        r = sigmoid(narrow(gx, 0, h, h) + narrow(uh, 0, h, h))
        c = tanh(narrow(gx, 0, 2 * h, h) + matmul(self.u_c, mul(r, h_prev)))
        return mul(sub(1.0, z), h_prev) + mul(z, c)


def gru_cell(x, h_prev, cell):
    """Functional form of one GRU step."""
    return cell.step(x, h_prev)


def run_gru(cell, xs, reverse=False):
    """Run one direction over a list of input vectors; returns list of states."""
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    h = cell.zero_state()
    states = [None] * len(xs)
    for t in order:
        h = cell.step(xs[t], h)
        states[t] = h
    return states


def bi_gru(xs, fwd_cell, bwd_cell):
    """Bidirectional encoding of a sequence of input vectors.

    Returns a (T x 2h) tensor whose row t concatenates the forward state at t
    with the backward state at t.
    """
    if len(xs) == 0:
        raise NumericsError("bi_gru requires a non-empty sequence")
    fwd = run_gru(fwd_cell, xs, reverse=False)
    bwd = run_gru(bwd_cell, xs, reverse=True)
    rows = [concat([f, b]) for f, b in zip(fwd, bwd)]
    return stack_rows(rows)

"""Deterministic float64 tensor math with reverse-mode gradients."""

from .gradcheck import grad_check
from .params import ParamStore, glorot_limit
from .rnn import GRUCell, bi_gru, gru_cell, run_gru
from .tensor import (
    GradTape,
    NumericsError,
    Tensor,
    add,
    add_n,
    concat,
    constant,
    exp,
    gather_rows,
    log,
    masked_softmax,
    matmul,
    mean,
    mul,
    narrow,
    neg,
    pick,
    pick_row,
    row_softmax,
    scatter_sum,
    sigmoid,
    softmax,
    stack_rows,
    sub,
    sum_,
    tanh,
    transpose,
)

__all__ = [
    "GradTape", "GRUCell", "NumericsError", "ParamStore", "Tensor",
    "add", "add_n", "bi_gru", "concat", "constant", "exp", "gather_rows",
    "glorot_limit", "grad_check", "gru_cell", "log", "masked_softmax",
    "matmul", "mean", "mul", "narrow", "neg", "pick", "pick_row",
    "row_softmax", "run_gru", "scatter_sum", "sigmoid", "softmax",
    "stack_rows", "sub", "sum_", "tanh", "transpose",
]

"""Numpy autodiff engine, network blocks, optimizer, and checkpoint codec."""

from wavelink.neural.tensor import Tensor, concat, gather, matmul, no_grad, scatter, stack_pair, take

__all__ = [
    "Tensor",
    "concat",
    "gather",
    "matmul",
    "no_grad",
    "scatter",
    "stack_pair",
    "take",
]

"""Dense tensors with reverse-mode automatic differentiation."""

from .tensor import GradientMap, MAX_RANK, Node, Tape, Tensor, as_tensor, emit
from . import ops

__all__ = ["GradientMap", "MAX_RANK", "Node", "Tape", "Tensor", "as_tensor", "emit", "ops", "backward"]


def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """Gradient of a scalar ``loss`` with respect to every node on ``tape``."""
    return tape.backward(loss)

"""Differentiable tensor operations.

Every op computes its primal with numpy and hands ``emit`` a closure that
maps the output gradient to one gradient per input.
"""

from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..core.errors import InvalidAxisError, ShapeMismatchError, TabAttentionError
from .tensor import Tensor, as_tensor, emit


Axes = Union[None, int, Sequence[int]]

# Sigmoid outputs are kept strictly inside (0, 1) even where expit saturates.
_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def broadcast_shape(op: str, a: Sequence[int], b: Sequence[int]) -> Tuple[int, ...]:
    """Shape of the broadcast of ``a`` and ``b`` (trailing axes aligned)."""
    try:
        return tuple(np.broadcast_shapes(tuple(a), tuple(b)))
    except ValueError:
        raise ShapeMismatchError(op, a, b) from None


def unbroadcast(grad: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Sum ``grad`` over the axes that broadcasting stretched to reach it."""
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape("add", a.shape, b.shape)
    out = a.data + b.data

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return emit("add", (a, b), out, backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape("sub", a.shape, b.shape)
    out = a.data - b.data

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return emit("sub", (a, b), out, backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape("mul", a.shape, b.shape)
    a_data, b_data = a.data, b.data
    out = a_data * b_data

    def backward(g):
        return unbroadcast(g * b_data, a.shape), unbroadcast(g * a_data, b.shape)

    return emit("mul", (a, b), out, backward)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul}


def elementwise(op_kind: str, a, b) -> Tensor:
    """Broadcasting binary op selected by name."""
    try:
        fn = _ELEMENTWISE[op_kind]
    except KeyError:
        raise TabAttentionError(
            code="UNKNOWN_OP",
            message=f"Unknown elementwise op '{op_kind}'.",
        ) from None
    return fn(a, b)


# Linear algebra

def matmul(a, b) -> Tensor:
    """Batched matrix product over the two trailing axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.rank < 2 or b.rank < 2:
        raise ShapeMismatchError("matmul", a.shape, b.shape, reason="Operands need rank >= 2.")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape, reason="Inner extents differ.")
    broadcast_shape("matmul", a.shape[:-2], b.shape[:-2])
    a_data, b_data = a.data, b.data
    out = np.matmul(a_data, b_data)

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b_data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return emit("matmul", (a, b), out, backward)


# Reductions

def normalize_axes(op: str, axes: Axes, rank: int) -> Tuple[int, ...]:
    """Sorted non-negative axes; ``None`` means all axes."""
    if axes is None:
        return tuple(range(rank))
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    normalized = []
    for axis in axes:
        if not isinstance(axis, (int, np.integer)) or not -rank <= axis < rank:
            raise InvalidAxisError(op, axes, rank)
        normalized.append(int(axis) % rank)
    if len(set(normalized)) != len(normalized) or not normalized:
        raise InvalidAxisError(op, axes, rank)
    return tuple(sorted(normalized))


def _first_max_mask(x: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    """One-hot of the first maximal element (lowest linear index) per reduced slice."""
    keep = [i for i in range(x.ndim) if i not in axes]
    perm = keep + list(axes)
    moved = np.transpose(x, perm)
    lead = moved.shape[: len(keep)]
    flat = moved.reshape(lead + (-1,))
    index = np.argmax(flat, axis=-1)
    mask = np.zeros_like(flat)
    np.put_along_axis(mask, np.expand_dims(index, -1), 1.0, axis=-1)
    return np.transpose(mask.reshape(moved.shape), np.argsort(perm))


def reduce(op_kind: str, x, axes: Axes = None, keepdims: bool = False) -> Tensor:
    """Sum, mean or max over ``axes``."""
    x = as_tensor(x)
    axes = normalize_axes(f"reduce_{op_kind}", axes, x.rank)
    kept_shape = tuple(1 if i in axes else s for i, s in enumerate(x.shape))
    count = int(np.prod([x.shape[i] for i in axes]))
    x_data = x.data

    if op_kind == "sum":
        out = x_data.sum(axis=axes, keepdims=True)
    elif op_kind == "mean":
        out = x_data.mean(axis=axes, keepdims=True)
    elif op_kind == "max":
        out = x_data.max(axis=axes, keepdims=True)
    else:
        raise TabAttentionError(code="UNKNOWN_OP", message=f"Unknown reduction '{op_kind}'.")

    if not keepdims:
        out_shape = tuple(s for i, s in enumerate(x.shape) if i not in axes) or (1,)
        out = out.reshape(out_shape)

    def backward(g):
        g = g.reshape(kept_shape)
        if op_kind == "sum":
            return (np.broadcast_to(g, x.shape).copy(),)
        if op_kind == "mean":
            return (np.broadcast_to(g / count, x.shape).copy(),)
        return (_first_max_mask(x_data, axes) * g,)

    return emit(f"reduce_{op_kind}", (x,), out, backward)


def sum(x, axes: Axes = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return reduce("sum", x, axes, keepdims)


def mean(x, axes: Axes = None, keepdims: bool = False) -> Tensor:
    return reduce("mean", x, axes, keepdims)


def max(x, axes: Axes = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return reduce("max", x, axes, keepdims)


# Activations

def relu(x) -> Tensor:
    x = as_tensor(x)
    x_data = x.data
    out = np.maximum(x_data, 0.0)

    def backward(g):
        return (g * (x_data > 0.0),)

    return emit("relu", (x,), out, backward)


def sigmoid_grad(out: np.ndarray, g: np.ndarray) -> np.ndarray:
    """d(sigmoid)/dx expressed through the forward output."""
    return g * out * (1.0 - out)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.clip(expit(x.data), _SIGMOID_LO, _SIGMOID_HI)

    def backward(g):
        return (sigmoid_grad(out, g),)

    return emit("sigmoid", (x,), out, backward)


def activation(op_kind: str, x) -> Tensor:
    if op_kind == "relu":
        return relu(x)
    if op_kind == "sigmoid":
        return sigmoid(x)
    raise TabAttentionError(code="UNKNOWN_OP", message=f"Unknown activation '{op_kind}'.")


def softmax_lastaxis(x) -> Tensor:
    """Softmax over the last axis, with max subtraction."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return emit("softmax", (x,), out, backward)


# Layout

def reshape(x, new_shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(new_shape))
    except ValueError:
        raise ShapeMismatchError("reshape", x.shape, tuple(new_shape)) from None

    def backward(g):
        return (g.reshape(x.shape),)

    return emit("reshape", (x,), out, backward)


def permute(x, axis_order: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    order = tuple(int(a) for a in axis_order)
    if sorted(order) != list(range(x.rank)):
        raise InvalidAxisError("permute", order, x.rank)
    out = np.transpose(x.data, order)
    inverse = tuple(np.argsort(order))

    def backward(g):
        return (np.transpose(g, inverse),)

    return emit("permute", (x,), out, backward)


def concat(tensors: Iterable, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatchError("concat", reason="Nothing to concatenate.")
    rank = tensors[0].rank
    if any(t.rank != rank for t in tensors):
        raise ShapeMismatchError("concat", *(t.shape for t in tensors))
    (axis,) = normalize_axes("concat", axis, rank)
    for t in tensors[1:]:
        if any(t.shape[i] != tensors[0].shape[i] for i in range(rank) if i != axis):
            raise ShapeMismatchError("concat", *(t.shape for t in tensors))
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return emit("concat", tensors, out, backward)


def slice(x, ranges: Sequence[Optional[Tuple[int, int]]]) -> Tensor:  # noqa: A001
    """Contiguous sub-block; ``ranges[i]`` is ``(start, stop)`` or None for the full axis."""
    x = as_tensor(x)
    if len(ranges) > x.rank:
        raise InvalidAxisError("slice", ranges, x.rank)
    index = []
    for axis, bounds in enumerate(ranges):
        if bounds is None:
            index.append(np.s_[:])
            continue
        start, stop = bounds
        if not 0 <= start < stop <= x.shape[axis]:
            raise ShapeMismatchError("slice", x.shape, reason=f"Range {bounds} is outside axis {axis}.")
        index.append(np.s_[start:stop])
    index = tuple(index)
    out = x.data[index]

    def backward(g):
        grad = np.zeros(x.shape)
        grad[index] = g
        return (grad,)

    return emit("slice", (x,), out, backward)


def broadcast_to(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if broadcast_shape("broadcast_to", x.shape, shape) != shape:
        raise ShapeMismatchError("broadcast_to", x.shape, shape)
    out = np.broadcast_to(x.data, shape).copy()

    def backward(g):
        return (unbroadcast(g, x.shape),)

    return emit("broadcast_to", (x,), out, backward)


def reshape_permute(x, op_kind: str, **kwargs) -> Tensor:
    """Layout op dispatcher: reshape, permute, concat or slice."""
    if op_kind == "reshape":
        return reshape(x, kwargs["new_shape"])
    if op_kind == "permute":
        return permute(x, kwargs["axis_order"])
    if op_kind == "concat":
        return concat([x, *kwargs.get("others", ())], kwargs["axis"])
    if op_kind == "slice":
        return slice(x, kwargs["ranges"])
    raise TabAttentionError(code="UNKNOWN_OP", message=f"Unknown layout op '{op_kind}'.")

"""Dense float64 tensors and the reverse-mode tape that records them."""

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import settings
from ..core.errors import (
    NonScalarLossError,
    NumericalError,
    ShapeMismatchError,
    TabAttentionError,
)


MAX_RANK = 5

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Row-major float64 array with an optional handle into a Tape.

    A tensor is tracked when ``tape`` is set; ``node_id`` then indexes the
    node that produced it (or the leaf created by ``Tape.watch``).
    """

    __slots__ = ("data", "node_id", "tape")

    def __init__(self, data, node_id: Optional[int] = None, tape: Optional["Tape"] = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > MAX_RANK:
            raise ShapeMismatchError("tensor", arr.shape, reason=f"Rank is capped at {MAX_RANK}.")
        if 0 in arr.shape:
            raise ShapeMismatchError("tensor", arr.shape, reason="All extents must be >= 1.")
        self.data = arr
        self.node_id = node_id
        self.tape = tape

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        return self.tape is not None and self.node_id is not None

    def numpy(self) -> np.ndarray:
        """Return a copy of the payload."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError("item", self.shape, reason="Tensor must hold one element.")
        return float(self.data.reshape(-1)[0])

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls(np.zeros(tuple(shape)))

    @classmethod
    def ones(cls, shape: Sequence[int]) -> "Tensor":
        return cls(np.ones(tuple(shape)))

    def __repr__(self) -> str:
        flag = f", node={self.node_id}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; the functional forms live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(value) -> Tensor:
    """Wrap scalars and arrays; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class Node:
    """One recorded operation."""

    op: str
    inputs: Tuple[int, ...]
    shape: Tuple[int, ...]
    backward: Optional[BackwardFn]


class GradientMap:
    """Gradients produced by one backward pass, addressable by tensor."""

    def __init__(self, tape: "Tape", grads: List[Optional[np.ndarray]], leaf_ids: Dict[int, int]):
        self._tape = tape
        self._grads = grads
        self._leaf_ids = leaf_ids

    def _node_of(self, tensor: Tensor) -> Optional[int]:
        if tensor.tape is self._tape and tensor.node_id is not None:
            return tensor.node_id
        return self._leaf_ids.get(id(tensor))

    def __contains__(self, tensor: Tensor) -> bool:
        node_id = self._node_of(tensor)
        return node_id is not None and self._grads[node_id] is not None

    def of(self, tensor: Tensor) -> np.ndarray:
        """Gradient for ``tensor``; zeros when it did not influence the loss."""
        node_id = self._node_of(tensor)
        if node_id is None or self._grads[node_id] is None:
            return np.zeros(tensor.shape)
        return self._grads[node_id]

    __getitem__ = of


class Tape:
    """Append-only record of operations for reverse-mode differentiation.

    Insertion order is a topological order: every node's inputs were
    recorded before it. A tape belongs to a single thread.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._leaf_ids: Dict[int, int] = {}
        self._watched: List[Tensor] = []

    def __enter__(self) -> "Tape":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.release()
        return False

    def watch(self, tensor: Tensor) -> Tensor:
        """Register ``tensor`` as a differentiable leaf."""
        if tensor.tape is self:
            return tensor
        if tensor.tape is not None:
            raise TabAttentionError(
                code="TAPE_CONFLICT",
                message="Tensor is already bound to another tape.",
            )
        node_id = len(self.nodes)
        self.nodes.append(Node("leaf", (), tensor.shape, None))
        tensor.node_id = node_id
        tensor.tape = self
        self._leaf_ids[id(tensor)] = node_id
        self._watched.append(tensor)
        return tensor

    def watch_all(self, tensors: Iterable[Tensor]) -> None:
        for tensor in tensors:
            self.watch(tensor)

    def release(self) -> None:
        """Unbind watched leaves so they can join a fresh tape."""
        for tensor in self._watched:
            if tensor.tape is self:
                tensor.tape = None
                tensor.node_id = None
        self._watched = []

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        out: np.ndarray,
        backward: BackwardFn,
    ) -> Tensor:
        """Append a node and return its tracked output."""
        ids = tuple(t.node_id if t.tape is self else -1 for t in inputs)
        node_id = len(self.nodes)
        self.nodes.append(Node(op, ids, out.shape, backward))
        return Tensor(out, node_id=node_id, tape=self)

    def backward(self, loss: Tensor) -> GradientMap:
        """Propagate d(loss)/d(node) to every node, in reverse insertion order."""
        if loss.tape is not self or loss.node_id is None:
            raise TabAttentionError(
                code="NOT_ON_TAPE",
                message="Loss tensor was not recorded on this tape.",
            )
        if loss.size != 1:
            raise NonScalarLossError(loss.shape)

        grads: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[loss.node_id] = np.ones(loss.shape)

        for index in range(loss.node_id, -1, -1):
            grad = grads[index]
            node = self.nodes[index]
            if grad is None or node.backward is None:
                continue
            for parent, parent_grad in zip(node.inputs, node.backward(grad)):
                if parent < 0 or parent_grad is None:
                    continue
                expected = self.nodes[parent].shape
                if parent_grad.shape != expected:
                    raise ShapeMismatchError(
                        f"{node.op}.backward", parent_grad.shape, expected,
                        reason="Gradient shape must equal the primal shape.",
                    )
                if grads[parent] is None:
                    grads[parent] = parent_grad
                else:
                    grads[parent] = grads[parent] + parent_grad

        return GradientMap(self, grads, dict(self._leaf_ids))


def tape_of(inputs: Sequence[Tensor]) -> Optional[Tape]:
    """The single tape shared by the tracked inputs, if any."""
    found: Optional[Tape] = None
    for tensor in inputs:
        if tensor.tape is None:
            continue
        if found is None:
            found = tensor.tape
        elif tensor.tape is not found:
            raise TabAttentionError(
                code="TAPE_CONFLICT",
                message="Operands are recorded on different tapes.",
            )
    return found


def emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward: BackwardFn) -> Tensor:
    """Wrap an op result, recording it when any input is tracked."""
    out = np.ascontiguousarray(out, dtype=np.float64)
    if out.ndim == 0:
        out = out.reshape(1)
    if settings.debug_checks and not np.all(np.isfinite(out)):
        if all(np.all(np.isfinite(t.data)) for t in inputs):
            raise NumericalError(op)
    tape = tape_of(inputs)
    if tape is None:
        return Tensor(out)
    return tape.record(op, inputs, out, backward)

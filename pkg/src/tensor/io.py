"""NDT1 binary tensor codec.

Layout (little-endian): magic ``b"NDT1"``, u8 rank, rank x u32 extents,
then the float64 payload in row-major order.
"""

import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..core.errors import CorruptFileError, IoFailureError
from .tensor import MAX_RANK, Tensor


MAGIC = b"NDT1"


def encode_tensor(tensor: Tensor) -> bytes:
    """Serialize one tensor."""
    shape = tensor.shape
    header = MAGIC + struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)
    return header + tensor.data.astype("<f8", copy=False).tobytes(order="C")


def decode_tensor(buffer: bytes, offset: int = 0, source: str = "<bytes>") -> Tuple[Tensor, int]:
    """Parse one tensor at ``offset``; returns the tensor and the next offset."""
    if buffer[offset:offset + 4] != MAGIC:
        raise CorruptFileError(source, "missing NDT1 magic")
    offset += 4
    if offset + 1 > len(buffer):
        raise CorruptFileError(source, "truncated header")
    (rank,) = struct.unpack_from("<B", buffer, offset)
    offset += 1
    if not 1 <= rank <= MAX_RANK:
        raise CorruptFileError(source, f"rank {rank} out of range")
    if offset + 4 * rank > len(buffer):
        raise CorruptFileError(source, "truncated extents")
    shape = struct.unpack_from(f"<{rank}I", buffer, offset)
    offset += 4 * rank
    count = int(np.prod(shape))
    end = offset + 8 * count
    if end > len(buffer):
        raise CorruptFileError(source, "truncated payload")
    data = np.frombuffer(buffer, dtype="<f8", count=count, offset=offset).reshape(shape)
    return Tensor(data.astype(np.float64)), end


def write_tensor(path: Union[str, Path], tensor: Tensor) -> None:
    try:
        Path(path).write_bytes(encode_tensor(tensor))
    except OSError as exc:
        raise IoFailureError(str(path), str(exc)) from exc


def read_tensor(path: Union[str, Path]) -> Tensor:
    try:
        buffer = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailureError(str(path), str(exc)) from exc
    tensor, end = decode_tensor(buffer, 0, source=str(path))
    if end != len(buffer):
        raise CorruptFileError(str(path), "trailing bytes after payload")
    return tensor

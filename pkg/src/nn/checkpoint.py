"""Checkpoint codec.

Layout (little-endian): magic ``b"TABCKPT1"``, u32 entry count, then per
entry a u16 name length, the UTF-8 name and an NDT1 tensor.
"""

import struct
from pathlib import Path
from typing import Dict, Union

from ..core.errors import CorruptFileError, IoFailureError, ShapeMismatchError
from ..core.logging import logger
from ..tensor import Tensor
from ..tensor.io import decode_tensor, encode_tensor
from .module import Module


MAGIC = b"TABCKPT1"


def encode_state(state: Dict[str, Tensor]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", len(state))]
    for name, tensor in state.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(encode_tensor(tensor))
    return b"".join(chunks)


def decode_state(buffer: bytes, source: str = "<bytes>") -> Dict[str, Tensor]:
    if buffer[:len(MAGIC)] != MAGIC:
        raise CorruptFileError(source, "missing TABCKPT1 magic")
    if len(buffer) < len(MAGIC) + 4:
        raise CorruptFileError(source, "truncated entry count")
    offset = len(MAGIC)
    (count,) = struct.unpack_from("<I", buffer, offset)
    offset += 4
    state: Dict[str, Tensor] = {}
    for _ in range(count):
        if offset + 2 > len(buffer):
            raise CorruptFileError(source, "truncated entry header")
        (length,) = struct.unpack_from("<H", buffer, offset)
        offset += 2
        try:
            name = buffer[offset:offset + length].decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptFileError(source, "entry name is not UTF-8") from None
        offset += length
        state[name], offset = decode_tensor(buffer, offset, source)
    if offset != len(buffer):
        raise CorruptFileError(source, "trailing bytes after last entry")
    return state


def save_checkpoint(model: Module, path: Union[str, Path]) -> None:
    """Write every parameter and buffer of ``model``."""
    state = {name: param.value for name, param in model.state().items()}
    try:
        Path(path).write_bytes(encode_state(state))
    except OSError as exc:
        raise IoFailureError(str(path), str(exc)) from exc
    logger.debug("Checkpoint written", extra={"path": str(path), "entries": len(state)})


def load_checkpoint(model: Module, path: Union[str, Path]) -> None:
    """Copy a checkpoint into ``model`` in place; names and shapes must match."""
    try:
        buffer = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailureError(str(path), str(exc)) from exc
    state = decode_state(buffer, str(path))
    registry = model.state()
    if set(state) != set(registry):
        missing = sorted(set(registry) - set(state))
        unexpected = sorted(set(state) - set(registry))
        raise CorruptFileError(str(path), f"missing {missing[:5]}, unexpected {unexpected[:5]}")
    for name, param in registry.items():
        if state[name].shape != param.shape:
            raise ShapeMismatchError(f"load:{name}", state[name].shape, param.shape)
        param.value.data[...] = state[name].data

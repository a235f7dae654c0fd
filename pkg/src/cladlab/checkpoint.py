"""Model checkpoint format.

Single little-endian binary file: the 8-byte magic ``CLADMDL1`` followed by
one record per parameter in a fixed order: uint32 name length, UTF-8 name,
uint32 rank, uint32 dims, then float32 data.  Round-trips are exact; the
architecture is reconstructed from the stored shapes.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .netcore import Encoder

MAGIC = b"CLADMDL1"


def save_checkpoint(path: str | Path, encoder: Encoder) -> None:
    chunks = [MAGIC]
    for name, param in encoder.params.items():
        data = np.ascontiguousarray(param, dtype="<f4")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> Encoder:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a model checkpoint")
    offset = 8
    params: dict[str, np.ndarray] = {}

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        piece = blob[offset : offset + count]
        offset += count
        return piece

    while offset < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        params[name] = data.astype(np.float32).copy()
    try:
        return Encoder(params)
    except Exception as exc:
        raise CheckpointError(f"{path}: {exc}") from exc

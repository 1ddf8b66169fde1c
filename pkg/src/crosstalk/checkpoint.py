"""Binary tensor container used for checkpoints and track dumps.

Layout: magic "LCNT", format version (u32 LE), then zero or more records of
  name length (u32 LE), UTF-8 name, rank (u32 LE), dims (u64 LE each),
  payload (little-endian f32, row-major).
Values are stored as f32; loading returns f64 arrays. Unknown versions are
rejected.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CheckpointError

MAGIC = b"LCNT"
VERSION = 1


def save_tensors(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, value in tensors.items():
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(value, dtype="<f4")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
            fh.write(arr.tobytes())


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a tensor container (bad magic {data[:4]!r})")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 8
    total = len(data)
    while offset < total:
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}Q", data, offset) if rank else ()
        offset += 8 * rank
        count = int(np.prod(dims)) if dims else 1
        payload = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        out[name] = payload.reshape(dims).astype(np.float64)
    return out


def save_model(path: str | Path, model) -> None:
    """Serialize all named parameters of a model."""
    save_tensors(path, {name: p.data for name, p in model.named_parameters()})


def load_model(path: str | Path, model) -> None:
    """Load parameters into an already-built model; shapes must match."""
    loaded = load_tensors(path)
    expected = dict(model.named_parameters())
    missing = sorted(set(expected) - set(loaded))
    extra = sorted(set(loaded) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter names do not match the configured model "
            f"(missing {missing[:3]}, unexpected {extra[:3]}); "
            "check that the config matches the checkpoint")
    for name, param in expected.items():
        value = loaded[name]
        if value.shape != param.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name}: checkpoint {value.shape} "
                f"vs model {param.data.shape}")
        param.data[...] = value

"""Parameter checkpoint files: named float32 sections behind a PSCK magic."""
from __future__ import annotations

import struct

import numpy as np

from .errors import (DimensionMismatchError, MagicMismatchError,
                     TruncatedFileError)

_MAGIC = b"PSCK"
_VERSION = 1


def save_params(path, params: dict):
    """Write params as little-endian float32 sections, sorted by name."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_params(path) -> dict:
    """Read a checkpoint back as float64 arrays (float32-valued)."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise MagicMismatchError(f"not a {_MAGIC.decode()} checkpoint")
        head = f.read(8)
        if len(head) < 8:
            raise TruncatedFileError("checkpoint header truncated")
        version, count = struct.unpack("<II", head)
        if version != _VERSION:
            raise DimensionMismatchError(f"unsupported checkpoint version {version}")
        params = {}
        for _ in range(count):
            raw = f.read(2)
            if len(raw) < 2:
                raise TruncatedFileError("section header truncated")
            (name_len,) = struct.unpack("<H", raw)
            name = f.read(name_len)
            if len(name) < name_len:
                raise TruncatedFileError("section name truncated")
            raw = f.read(1)
            if not raw:
                raise TruncatedFileError("section rank truncated")
            (ndim,) = struct.unpack("<B", raw)
            raw = f.read(4 * ndim)
            if len(raw) < 4 * ndim:
                raise TruncatedFileError("section shape truncated")
            shape = struct.unpack(f"<{ndim}I", raw)
            nbytes = 4 * int(np.prod(shape)) if ndim else 4
            raw = f.read(nbytes)
            if len(raw) < nbytes:
                raise TruncatedFileError("section payload truncated")
            params[name.decode()] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    return params


def restore_into(model, loaded: dict):
    """Copy loaded sections into a model's params, validating shapes."""
    for name, arr in model.params.items():
        if name not in loaded:
            raise DimensionMismatchError(f"checkpoint missing section '{name}'")
        if loaded[name].shape != arr.shape:
            raise DimensionMismatchError(
                f"section '{name}' shape {loaded[name].shape} != {arr.shape}")
        model.params[name] = loaded[name].copy()

"""Reference texture memory: build, compact, persist, and query.

Keys are unit-normalized feature vectors of texture patches; values are
the patches themselves.  The store is compacted offline by farthest point
sampling and queried with exact top-K normalized inner products.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (ConfigError, DegenerateQueryError, DimensionMismatchError,
                     GridShapeError, MagicMismatchError, TruncatedFileError)

_MAGIC = b"RTM1"


@dataclass(frozen=True)
class TextureMemory:
    keys: np.ndarray    # (n, D) float32, unit L2 rows
    values: np.ndarray  # (n, c, V, V) float32

    def __post_init__(self):
        if self.keys.ndim != 2 or self.values.ndim != 4:
            raise GridShapeError("keys must be (n, D), values (n, c, V, V)")
        if len(self.keys) != len(self.values):
            raise GridShapeError("key/value counts disagree")

    @property
    def count(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class RetrievalResult:
    indices: np.ndarray       # (K,) int
    similarities: np.ndarray  # (K,) float, descending
    priors: np.ndarray        # (K, c, V, V) float32


class TextureExtractor:
    """Seed-deterministic random-projection feature map for texture patches.

    A fixed two-layer projection (tanh in the middle, no biases) standing in
    for a learned texture classifier; pluggable behind the same interface.
    """

    def __init__(self, patch_shape: tuple[int, int, int], dim: int = 32,
                 hidden: int = 64, seed: int = 0):
        self.patch_shape = tuple(patch_shape)
        self.dim = dim
        rng = np.random.Generator(np.random.PCG64(seed))
        n_in = int(np.prod(patch_shape))
        self.w1 = rng.standard_normal((n_in, hidden)).astype(np.float32) / np.sqrt(n_in)
        self.w2 = rng.standard_normal((hidden, dim)).astype(np.float32) / np.sqrt(hidden)

    def __call__(self, patch: np.ndarray) -> np.ndarray:
        if patch.shape != self.patch_shape:
            raise GridShapeError(f"patch {patch.shape} != extractor input {self.patch_shape}")
        flat = patch.astype(np.float32).reshape(-1)
        return np.tanh(flat @ self.w1) @ self.w2


def extract_query(t, patch: np.ndarray) -> np.ndarray:
    """Unit-normalized feature vector of a patch; errors on a zero feature."""
    feat = np.asarray(t(patch), dtype=np.float32)
    norm = float(np.linalg.norm(feat.astype(np.float64)))
    if norm < 1e-12:
        raise DegenerateQueryError("feature vector has zero norm")
    return (feat / norm).astype(np.float32)


def farthest_point_sample(keys: np.ndarray, m: int, start: int = 0) -> np.ndarray:
    """Greedy max-min subset selection; ties broken by lowest index."""
    n = len(keys)
    if not 1 <= m <= n:
        raise ConfigError(f"need 1 <= m <= {n}, got {m}")
    if not 0 <= start < n:
        raise ConfigError(f"start index {start} out of range")
    pts = keys.astype(np.float64)
    chosen = [start]
    min_dist = np.linalg.norm(pts - pts[start], axis=1)
    for _ in range(m - 1):
        nxt = int(np.argmax(min_dist))  # argmax returns the first (lowest) index
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.array(chosen, dtype=np.int64)


def build_memory(patches: list[np.ndarray], t, m: int, start: int = 0) -> TextureMemory:
    """Extract keys, compact to m entries by FPS over key space."""
    if not patches:
        raise ConfigError("no source patches")
    if m > len(patches):
        raise ConfigError(f"target size {m} exceeds {len(patches)} source patches")
    keys = np.stack([extract_query(t, p) for p in patches])
    idx = farthest_point_sample(keys, m, start=start)
    values = np.stack([patches[i] for i in idx]).astype(np.float32)
    return TextureMemory(keys=keys[idx], values=values)


def retrieve_topk(mem: TextureMemory, patch: np.ndarray, t, K: int) -> RetrievalResult:
    """Exact top-K by normalized inner product, descending, ties by index."""
    if not 1 <= K <= mem.count:
        raise ConfigError(f"need 1 <= K <= {mem.count}, got {K}")
    query = extract_query(t, patch)
    sims = mem.keys.astype(np.float64) @ query.astype(np.float64)
    order = np.lexsort((np.arange(mem.count), -sims))[:K]
    return RetrievalResult(indices=order.astype(np.int64),
                           similarities=sims[order],
                           priors=mem.values[order])


def save_memory(mem: TextureMemory, path):
    n, D = mem.keys.shape
    _, c, V, V2 = mem.values.shape
    if V != V2:
        raise GridShapeError("texture values must be square patches")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<4I", n, D, c, V))
        f.write(np.ascontiguousarray(mem.keys, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(mem.values, dtype="<f4").tobytes())


def load_memory(path) -> TextureMemory:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise MagicMismatchError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        header = f.read(16)
        if len(header) < 16:
            raise TruncatedFileError("header truncated")
        n, D, c, V = struct.unpack("<4I", header)
        key_bytes = f.read(n * D * 4)
        if len(key_bytes) < n * D * 4:
            raise TruncatedFileError("key block truncated")
        val_count = n * c * V * V * 4
        val_bytes = f.read(val_count)
        if len(val_bytes) < val_count:
            raise TruncatedFileError("value block truncated")
        if f.read(1):
            raise DimensionMismatchError("trailing bytes beyond declared payload")
    keys = np.frombuffer(key_bytes, dtype="<f4").reshape(n, D).copy()
    values = np.frombuffer(val_bytes, dtype="<f4").reshape(n, c, V, V).copy()
    return TextureMemory(keys=keys, values=values)

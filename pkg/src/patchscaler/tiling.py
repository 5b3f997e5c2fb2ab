"""Overlapping patch decomposition / recomposition and group partitioning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridShapeError


def _anchors(size: int, V: int, overlap: int) -> list[int]:
    stride = V - overlap
    starts = list(range(0, size - V + 1, stride))
    if starts[-1] != size - V:
        # clamp the last window so it stays inside the grid
        starts.append(size - V)
    return starts


@dataclass(frozen=True)
class PatchGrid:
    """Anchor layout of overlapping V x V windows over a (c, h, w) grid."""

    V: int
    overlap: int
    coords: tuple[tuple[int, int], ...]
    shape: tuple[int, int, int]

    @property
    def count(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class BlendWeights:
    """Per-cell recomposition weights: 1 / coverage count, shape (h, w)."""

    weights: np.ndarray


def decompose(feature: np.ndarray, V: int, overlap: int) -> tuple[list[np.ndarray], PatchGrid]:
    """Split (c, h, w) into row-major overlapping V x V patches."""
    if feature.ndim != 3:
        raise GridShapeError("expected a (c, h, w) grid")
    c, h, w = feature.shape
    if not 0 <= overlap < V:
        raise ConfigError(f"overlap must be in [0, V), got {overlap} for V={V}")
    if h < V or w < V:
        raise GridShapeError(f"grid {h}x{w} smaller than patch size {V}")
    coords = [(top, left)
              for top in _anchors(h, V, overlap)
              for left in _anchors(w, V, overlap)]
    patches = [feature[:, top:top + V, left:left + V].copy() for top, left in coords]
    grid = PatchGrid(V=V, overlap=overlap, coords=tuple(coords), shape=(c, h, w))
    return patches, grid


def blend_weights(grid: PatchGrid) -> BlendWeights:
    _, h, w = grid.shape
    cover = np.zeros((h, w), dtype=np.float64)
    for top, left in grid.coords:
        cover[top:top + grid.V, left:left + grid.V] += 1.0
    if np.any(cover == 0):
        raise GridShapeError("patch grid does not cover the source grid")
    return BlendWeights(weights=1.0 / cover)


def recompose(patches: list[np.ndarray], grid: PatchGrid,
              weights: BlendWeights | None = None) -> np.ndarray:
    """Uniform-average blend of patches back onto the source grid."""
    if len(patches) != grid.count:
        raise GridShapeError(f"expected {grid.count} patches, got {len(patches)}")
    c, h, w = grid.shape
    if weights is None:
        weights = blend_weights(grid)
    acc = np.zeros((c, h, w), dtype=np.float64)
    for (top, left), p in zip(grid.coords, patches):
        if p.shape != (c, grid.V, grid.V):
            raise GridShapeError(f"patch shape {p.shape} != {(c, grid.V, grid.V)}")
        acc[:, top:top + grid.V, left:left + grid.V] += p
    out = acc * weights.weights[None, :, :]
    return out.astype(patches[0].dtype, copy=False)


def partition_by_group(grid: PatchGrid, qmap) -> tuple[list[int], list[int], list[int]]:
    """Split patch indices into (simple, medium, hard) lists, order preserved."""
    from .confidence import GroupLabel

    if len(qmap) != grid.count:
        raise GridShapeError(f"qmap has {len(qmap)} labels for {grid.count} patches")
    simple, medium, hard = [], [], []
    buckets = {GroupLabel.SIMPLE: simple, GroupLabel.MEDIUM: medium,
               GroupLabel.HARD: hard}
    for i, label in enumerate(qmap):
        buckets[label].append(i)
    return simple, medium, hard

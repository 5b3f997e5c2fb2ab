"""Orthonormal Haar wavelet transform and low-frequency color alignment.

Used to align the low-frequency content of a super-resolved image with the
upsampled low-resolution input while keeping the generated detail bands.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridShapeError

_S = np.sqrt(0.5)


@dataclass(frozen=True)
class WaveletPyramid:
    """Per-level (lh, hl, hh) detail bands plus the final low band.

    details[0] is the finest level; each array has shape (c, h/2^k, w/2^k).
    """

    low: np.ndarray
    details: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]

    @property
    def levels(self) -> int:
        return len(self.details)


def _haar_split(x: np.ndarray) -> tuple[np.ndarray, ...]:
    # rows
    lo = (x[:, 0::2, :] + x[:, 1::2, :]) * _S
    hi = (x[:, 0::2, :] - x[:, 1::2, :]) * _S
    # cols
    ll = (lo[:, :, 0::2] + lo[:, :, 1::2]) * _S
    lh = (lo[:, :, 0::2] - lo[:, :, 1::2]) * _S
    hl = (hi[:, :, 0::2] + hi[:, :, 1::2]) * _S
    hh = (hi[:, :, 0::2] - hi[:, :, 1::2]) * _S
    return ll, lh, hl, hh


def _haar_merge(ll, lh, hl, hh) -> np.ndarray:
    c, h, w = ll.shape
    lo = np.empty((c, h, 2 * w), dtype=np.float64)
    hi = np.empty((c, h, 2 * w), dtype=np.float64)
    lo[:, :, 0::2] = (ll + lh) * _S
    lo[:, :, 1::2] = (ll - lh) * _S
    hi[:, :, 0::2] = (hl + hh) * _S
    hi[:, :, 1::2] = (hl - hh) * _S
    out = np.empty((c, 2 * h, 2 * w), dtype=np.float64)
    out[:, 0::2, :] = (lo + hi) * _S
    out[:, 1::2, :] = (lo - hi) * _S
    return out


def haar_forward(img: np.ndarray, levels: int) -> WaveletPyramid:
    if img.ndim != 3:
        raise GridShapeError("expected a (c, h, w) grid")
    if levels < 1:
        raise ConfigError("need at least one level")
    _, h, w = img.shape
    if h % (1 << levels) or w % (1 << levels):
        raise GridShapeError(f"{h}x{w} not divisible by 2^{levels}")
    low = img.astype(np.float64)
    details = []
    for _ in range(levels):
        low, lh, hl, hh = _haar_split(low)
        details.append((lh, hl, hh))
    return WaveletPyramid(low=low, details=tuple(details))


def haar_inverse(p: WaveletPyramid) -> np.ndarray:
    low = p.low
    for lh, hl, hh in reversed(p.details):
        low = _haar_merge(low, lh, hl, hh)
    return low


def wavelet_color_normalize(sr: np.ndarray, lr_up: np.ndarray,
                            levels: int = 2) -> np.ndarray:
    """Swap sr's level-L low band for lr_up's; keep sr's detail bands."""
    if sr.shape != lr_up.shape:
        raise GridShapeError(f"shape mismatch: {sr.shape} vs {lr_up.shape}")
    p_sr = haar_forward(sr, levels)
    p_lr = haar_forward(lr_up, levels)
    swapped = WaveletPyramid(low=p_lr.low, details=p_sr.details)
    return haar_inverse(swapped).astype(sr.dtype, copy=False)

"""Confidence-driven loss and the quantified difficulty map.

The loss couples a squared-L1 reconstruction term with a per-cell
confidence-weighted squared error and a log barrier that keeps the
confidence away from zero.  Per-patch mean confidence is thresholded into
Simple / Medium / Hard difficulty labels.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridShapeError
from .tiling import PatchGrid

CONF_FLOOR = 1e-4  # lower clamp so log(C) stays finite


class GroupLabel(enum.Enum):
    SIMPLE = "simple"
    MEDIUM = "medium"
    HARD = "hard"


@dataclass(frozen=True)
class Thresholds:
    gamma1: float = 0.95
    gamma2: float = 0.75

    def __post_init__(self):
        if not 0.0 <= self.gamma2 < self.gamma1 <= 1.0:
            raise ConfigError(
                f"need 0 <= gamma2 < gamma1 <= 1, got ({self.gamma1}, {self.gamma2})")


@dataclass(frozen=True)
class LossParams:
    lam: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if self.lam <= 0 or self.eta <= 0:
            raise ConfigError("lambda and eta must be positive")


def confidence_loss(y_hr: np.ndarray, x_hr: np.ndarray, c: np.ndarray,
                    p: LossParams = LossParams()) -> float:
    loss, _, _ = confidence_loss_and_grads(y_hr, x_hr, c, p)
    return loss


def confidence_loss_and_grads(y_hr: np.ndarray, x_hr: np.ndarray,
                              c: np.ndarray, p: LossParams = LossParams()):
    """Loss value plus gradients w.r.t. the prediction and the confidence map.

    All reductions are means, so the value is resolution independent; the
    confidence map (1, h, w) is broadcast across channels.
    """
    if y_hr.shape != x_hr.shape:
        raise GridShapeError(f"shape mismatch: {y_hr.shape} vs {x_hr.shape}")
    if c.ndim != 3 or c.shape[0] != 1 or c.shape[1:] != y_hr.shape[1:]:
        raise GridShapeError(f"confidence map shape {c.shape} incompatible with {y_hr.shape}")
    if np.any(c <= 0):
        raise ConfigError("confidence values must be strictly positive")

    diff = y_hr.astype(np.float64) - x_hr.astype(np.float64)
    n = diff.size
    n_cells = c.size
    c64 = c.astype(np.float64)

    mean_abs = np.mean(np.abs(diff))
    conf_term = np.mean(c64 * diff * diff) - p.eta * np.mean(np.log(c64))
    loss = mean_abs ** 2 + p.lam * conf_term

    # d/dy: 2*mean_abs * sign/n  +  lam * 2*C*diff/n
    d_y = 2.0 * mean_abs * np.sign(diff) / n + p.lam * 2.0 * c64 * diff / n
    # d/dC (per cell): lam * (sum_ch diff^2 / n  -  eta / (n_cells * C))
    d_c = p.lam * (np.sum(diff * diff, axis=0, keepdims=True) / n
                   - p.eta / (n_cells * c64))
    return float(loss), d_y, d_c


def patch_mean_confidence(c: np.ndarray, anchor: tuple[int, int], V: int) -> float:
    top, left = anchor
    _, h, w = c.shape
    if top < 0 or left < 0 or top + V > h or left + V > w:
        raise GridShapeError(f"window {anchor}+{V} outside {h}x{w} map")
    return float(np.mean(c[0, top:top + V, left:left + V]))


def quantize(avg: float, th: Thresholds) -> GroupLabel:
    if not 0.0 <= avg <= 1.0:
        raise ConfigError(f"mean confidence {avg} outside [0, 1]")
    if avg > th.gamma1:
        return GroupLabel.SIMPLE
    if avg > th.gamma2:
        return GroupLabel.MEDIUM
    return GroupLabel.HARD


def build_qmap(c: np.ndarray, grid: PatchGrid, th: Thresholds) -> list[GroupLabel]:
    if c.shape[1:] != grid.shape[1:]:
        raise GridShapeError(f"confidence map {c.shape} does not match grid {grid.shape}")
    return [quantize(patch_mean_confidence(c, anchor, grid.V), th)
            for anchor in grid.coords]

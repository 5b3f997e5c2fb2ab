"""Diffusion trajectory math over a precomputed noise schedule.

All trajectory operations are pure functions of an immutable NoiseSchedule:
closed-form forward sampling, single forward steps, truncated forward
initialization for coarse estimates, and a deterministic x0-prediction
reverse update over a sub-sampled step ladder.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed beta/alpha/alpha_bar tables for T diffusion steps.

    alpha_bars has T+1 entries; alpha_bars[0] == 1 so indexing by time
    step t in [0, T] is direct.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("schedule needs at least one step")
        if len(self.betas) != self.T or len(self.alphas) != self.T:
            raise ConfigError("beta/alpha tables must have length T")
        if len(self.alpha_bars) != self.T + 1:
            raise ConfigError("alpha_bar table must have length T+1")

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.T:
            raise ConfigError(f"time step {t} outside [0, {self.T}]")
        return float(self.alpha_bars[t])


def build_linear_schedule(T: int, beta_start: float = 1e-4,
                          beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta ramp; tables computed in float64, stored as float32."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate(([1.0], np.cumprod(alphas)))
    return NoiseSchedule(
        T=T,
        betas=betas.astype(np.float32),
        alphas=alphas.astype(np.float32),
        alpha_bars=alpha_bars.astype(np.float32),
    )


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise GridShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def forward_sample(s: NoiseSchedule, x0: np.ndarray, t: int,
                   eps: np.ndarray) -> np.ndarray:
    """Closed-form marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if not 1 <= t <= s.T:
        raise ConfigError(f"time step {t} outside [1, {s.T}]")
    _check_pair(x0, eps)
    ab = s.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def forward_step(s: NoiseSchedule, x_prev: np.ndarray, t: int,
                 eps: np.ndarray) -> np.ndarray:
    """One forward transition: sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps."""
    if not 1 <= t <= s.T:
        raise ConfigError(f"time step {t} outside [1, {s.T}]")
    _check_pair(x_prev, eps)
    beta = float(s.betas[t - 1])
    return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * eps


def truncated_forward(s: NoiseSchedule, y0: np.ndarray, tau: int,
                      eps: np.ndarray) -> np.ndarray:
    """Noise the coarse estimate y0 up to intermediate step tau.

    Same math as forward_sample; kept as its own entry point because it
    initializes the reverse process from a non-Gaussian start.
    """
    return forward_sample(s, y0, tau, eps)


@dataclass(frozen=True)
class SubstepLadder:
    """Strictly decreasing step sequence from tau to 0 with N transitions."""

    steps: tuple[int, ...] = field(default=())

    def __post_init__(self):
        st = self.steps
        if len(st) < 2 or st[-1] != 0:
            raise ConfigError("ladder must end at 0 with at least one transition")
        if any(a <= b for a, b in zip(st, st[1:])):
            raise ConfigError("ladder must be strictly decreasing")

    @property
    def transitions(self) -> int:
        return len(self.steps) - 1


def make_substeps(tau: int, N: int) -> SubstepLadder:
    """Uniformly spaced ladder of N transitions from tau down to 0.

    Rounding duplicates are collapsed by decrementing; feasible whenever
    N <= tau.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    if N > tau:
        raise ConfigError(f"N={N} exceeds tau={tau}")
    steps = [int(round(tau * (N - i) / N)) for i in range(N + 1)]
    for i in range(1, N + 1):
        if steps[i] >= steps[i - 1]:
            steps[i] = steps[i - 1] - 1
    return SubstepLadder(steps=tuple(steps))


def reverse_step(s: NoiseSchedule, x_t: np.ndarray, x0_hat: np.ndarray,
                 t: int, t_next: int) -> np.ndarray:
    """Deterministic x0-prediction update from step t to t_next.

    Re-derives the implied noise from (x_t, x0_hat) and jumps to t_next on
    the same noise direction; at t_next == 0 the prediction is returned as is.
    """
    if not 0 <= t_next < t <= s.T:
        raise ConfigError(f"need 0 <= t_next < t <= T, got t={t}, t_next={t_next}")
    _check_pair(x_t, x0_hat)
    if t_next == 0:
        return x0_hat.copy()
    ab_t = s.alpha_bar(t)
    ab_n = s.alpha_bar(t_next)
    eps_hat = (x_t - np.sqrt(ab_t) * x0_hat) / np.sqrt(1.0 - ab_t)
    return np.sqrt(ab_n) * x0_hat + np.sqrt(1.0 - ab_n) * eps_hat

"""Patch-adaptive group sampling: planning, grouped ladders, NFE accounting."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .confidence import GroupLabel
from .errors import ConfigError
from .schedule import (NoiseSchedule, make_substeps, reverse_step,
                       truncated_forward)

DEFAULT_TAUS = {GroupLabel.SIMPLE: 400, GroupLabel.MEDIUM: 700,
                GroupLabel.HARD: 1000}
DEFAULT_STEPS = {GroupLabel.SIMPLE: 8, GroupLabel.MEDIUM: 14,
                 GroupLabel.HARD: 20}


@dataclass(frozen=True)
class GroupConfig:
    """Per-group (intermediate step tau, sampling step count n)."""

    taus: dict = field(default_factory=lambda: dict(DEFAULT_TAUS))
    steps: dict = field(default_factory=lambda: dict(DEFAULT_STEPS))

    def __post_init__(self):
        order = [GroupLabel.SIMPLE, GroupLabel.MEDIUM, GroupLabel.HARD]
        taus = [self.taus[g] for g in order]
        steps = [self.steps[g] for g in order]
        if not (taus[0] <= taus[1] <= taus[2]):
            raise ConfigError(f"taus must be non-decreasing S<=M<=H, got {taus}")
        if not (steps[0] <= steps[1] <= steps[2]):
            raise ConfigError(f"step counts must be non-decreasing, got {steps}")
        for tau, n in zip(taus, steps):
            if n > tau:
                raise ConfigError(f"n={n} exceeds tau={tau}")

    def for_label(self, label: GroupLabel) -> tuple[int, int]:
        return self.taus[label], self.steps[label]


@dataclass
class PgsReport:
    """Denoiser-call ledger for one sampling run."""

    group_counts: dict
    group_nfe: dict
    total_nfe: int
    unified_nfe: int
    wall_ms: float = 0.0

    @property
    def ratio(self) -> float:
        return self.total_nfe / self.unified_nfe if self.unified_nfe else float("nan")

    def to_text(self) -> str:
        lines = []
        for g in (GroupLabel.SIMPLE, GroupLabel.MEDIUM, GroupLabel.HARD):
            lines.append(f"count_{g.value} {self.group_counts.get(g, 0)}")
            lines.append(f"nfe_{g.value} {self.group_nfe.get(g, 0)}")
        lines.append(f"nfe_total {self.total_nfe}")
        lines.append(f"nfe_unified {self.unified_nfe}")
        lines.append(f"ratio {self.ratio:.6f}")
        lines.append(f"wall_ms {self.wall_ms:.3f}")
        return "\n".join(lines) + "\n"


class CountingDenoiser:
    """Wraps a denoiser and counts invocations, for honest NFE audits."""

    def __init__(self, denoiser):
        self.denoiser = denoiser
        self.calls = 0

    def __call__(self, x_t, t, prompt=None):
        self.calls += 1
        return self.denoiser(x_t, t, prompt)


def plan(qmap, cfg: GroupConfig) -> list[tuple[int, int]]:
    """Per-patch (tau, n) assignment; pure lookup by group label."""
    return [cfg.for_label(label) for label in qmap]


def _patch_rng(seed: int, index: int) -> np.random.Generator:
    # noise depends only on (run seed, patch index) so group scheduling
    # cannot change results
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def run_group(denoiser, s: NoiseSchedule, patches, tau: int, n: int,
              prompts=None, seed: int = 0, indices=None) -> list[np.ndarray]:
    """Truncated-forward initialization then an n-step reverse ladder per patch.

    Exactly n denoiser calls per patch; noise is derived from
    (seed, patch index) so results are order independent.
    """
    if n > tau:
        raise ConfigError(f"n={n} exceeds tau={tau}")
    if prompts is None:
        prompts = [None] * len(patches)
    if indices is None:
        indices = list(range(len(patches)))
    if len(prompts) != len(patches) or len(indices) != len(patches):
        raise ConfigError("prompts/indices must align with patches")
    ladder = make_substeps(tau, n)
    out = []
    for y0, prompt, idx in zip(patches, prompts, indices):
        rng = _patch_rng(seed, idx)
        eps = rng.standard_normal(y0.shape).astype(y0.dtype)
        x = truncated_forward(s, y0, tau, eps)
        for t, t_next in zip(ladder.steps, ladder.steps[1:]):
            x0_hat = denoiser(x, t, prompt)
            x = reverse_step(s, x, x0_hat, t, t_next)
        out.append(x)
    return out


def run_pgs(denoiser, s: NoiseSchedule, patches, qmap, cfg: GroupConfig,
            prompts=None, seed: int = 0):
    """Partition patches by difficulty, sample each group, merge in order."""
    if len(qmap) != len(patches):
        raise ConfigError("qmap must label every patch")
    if prompts is None:
        prompts = [None] * len(patches)
    t0 = time.perf_counter()
    results: list[np.ndarray | None] = [None] * len(patches)
    group_counts, group_nfe = {}, {}
    for label in (GroupLabel.SIMPLE, GroupLabel.MEDIUM, GroupLabel.HARD):
        idx = [i for i, lab in enumerate(qmap) if lab is label]
        group_counts[label] = len(idx)
        tau, n = cfg.for_label(label)
        group_nfe[label] = len(idx) * n
        if not idx:
            continue
        restored = run_group(denoiser, s, [patches[i] for i in idx], tau, n,
                             prompts=[prompts[i] for i in idx], seed=seed,
                             indices=idx)
        for i, r in zip(idx, restored):
            results[i] = r
    n_hard = cfg.steps[GroupLabel.HARD]
    report = PgsReport(
        group_counts=group_counts,
        group_nfe=group_nfe,
        total_nfe=sum(group_nfe.values()),
        unified_nfe=len(patches) * n_hard,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
    return results, report


def compare_unified(denoiser, s: NoiseSchedule, patches, n_unified: int,
                    prompts=None, seed: int = 0):
    """Baseline: every patch gets the full tau=T ladder with n_unified steps."""
    cfg = GroupConfig(taus={g: s.T for g in GroupLabel},
                      steps={g: n_unified for g in GroupLabel})
    qmap = [GroupLabel.HARD] * len(patches)
    return run_pgs(denoiser, s, patches, qmap, cfg, prompts=prompts, seed=seed)

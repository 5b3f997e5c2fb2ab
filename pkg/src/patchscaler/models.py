"""Toy neural components with hand-rolled forward/backward passes.

Contains the coarse restorer with a confidence head (GlobalRestorer), the
patch denoiser with texture-prompt cross-attention and time-conditioned
dimension-wise scaling (PatchDiT), a closed-form linear-Gaussian oracle
denoiser for verification, and a small Adam training loop.

Everything is plain numpy in float64 so analytic gradients can be checked
against central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .confidence import CONF_FLOOR, LossParams, confidence_loss_and_grads
from .errors import ConfigError, GridShapeError, NumericError
from .schedule import NoiseSchedule, forward_sample


# ---------------------------------------------------------------------------
# time embedding

def time_embed(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of a time step; first half sin, second half cos."""
    if dim % 2:
        raise ConfigError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


# ---------------------------------------------------------------------------
# multi-head attention (shared by self- and cross-attention)

def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _attn_forward(q_in, kv_in, p, pre, heads):
    q = q_in @ p[pre + ".wq"]
    k = kv_in @ p[pre + ".wk"]
    v = kv_in @ p[pre + ".wv"]
    qh, kh, vh = (_split_heads(a, heads) for a in (q, k, v))
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = qh @ kh.transpose(0, 2, 1) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    a = e / e.sum(axis=-1, keepdims=True)
    merged = _merge_heads(a @ vh)
    out = merged @ p[pre + ".wo"] + p[pre + ".bo"]
    return out, (q_in, kv_in, qh, kh, vh, a, merged, scale)


def _attn_backward(dout, cache, p, pre, grads, heads):
    q_in, kv_in, qh, kh, vh, a, merged, scale = cache
    grads[pre + ".wo"] += merged.T @ dout
    grads[pre + ".bo"] += dout.sum(axis=0)
    d_merged = dout @ p[pre + ".wo"].T
    d_oh = _split_heads(d_merged, heads)
    d_a = d_oh @ vh.transpose(0, 2, 1)
    d_vh = a.transpose(0, 2, 1) @ d_oh
    d_scores = a * (d_a - (d_a * a).sum(axis=-1, keepdims=True))
    d_qh = d_scores @ kh * scale
    d_kh = d_scores.transpose(0, 2, 1) @ qh * scale
    dq, dk, dv = _merge_heads(d_qh), _merge_heads(d_kh), _merge_heads(d_vh)
    grads[pre + ".wq"] += q_in.T @ dq
    grads[pre + ".wk"] += kv_in.T @ dk
    grads[pre + ".wv"] += kv_in.T @ dv
    d_q_in = dq @ p[pre + ".wq"].T
    d_kv_in = dk @ p[pre + ".wk"].T + dv @ p[pre + ".wv"].T
    return d_q_in, d_kv_in


# ---------------------------------------------------------------------------
# Patch-DiT

class PatchDiT:
    """Patch-level transformer denoiser predicting the clean patch x0.

    Per-cell tokens run through depth x (self-attention -> cross-attention
    to texture-prompt tokens -> feed-forward) blocks.  Time conditioning
    enters as dimension-wise scale vectors: once on the token embedding and
    once on each cross-attention output (the prompt encoding itself is
    time-step independent).
    """

    def __init__(self, channels: int = 1, patch: int = 16, width: int = 64,
                 depth: int = 2, heads: int = 4, ff_mult: int = 2,
                 seed: int = 0):
        if width % heads:
            raise ConfigError("width must be divisible by head count")
        self.channels = channels
        self.patch = patch
        self.width = width
        self.depth = depth
        self.heads = heads
        self.ff = ff_mult * width
        rng = np.random.Generator(np.random.PCG64(seed))
        d, f = width, self.ff
        c = channels
        prompt_in = channels * patch * patch

        def w(*shape):
            return rng.standard_normal(shape) / np.sqrt(shape[0])

        p = {
            "embed.w": w(c, d), "embed.b": np.zeros(d),
            "time_in.w": 0.1 * w(d, d), "time_in.b": np.zeros(d),
            "prompt.w": w(prompt_in, d), "prompt.b": np.zeros(d),
            "out.w": 0.1 * w(d, c), "out.b": np.zeros(c),
        }
        for i in range(depth):
            b = f"b{i}"
            for sub in ("sa", "ca"):
                p[f"{b}.{sub}.wq"] = w(d, d)
                p[f"{b}.{sub}.wk"] = w(d, d)
                p[f"{b}.{sub}.wv"] = w(d, d)
                p[f"{b}.{sub}.wo"] = 0.1 * w(d, d)
                p[f"{b}.{sub}.bo"] = np.zeros(d)
            p[f"{b}.ca.ts.w"] = 0.1 * w(d, d)
            p[f"{b}.ca.ts.b"] = np.zeros(d)
            p[f"{b}.ff.w1"] = w(d, f)
            p[f"{b}.ff.b1"] = np.zeros(f)
            p[f"{b}.ff.w2"] = 0.1 * w(f, d)
            p[f"{b}.ff.b2"] = np.zeros(d)
        self.params = p

    # -- prompt encoding (similarity-aware, time independent) ---------------

    def _encode_prompt(self, prompt):
        tp = prompt.priors.astype(np.float64).reshape(len(prompt.priors), -1)
        sims = prompt.similarities.astype(np.float64)
        lin = tp @ self.params["prompt.w"] + self.params["prompt.b"]
        return lin * sims[:, None], (tp, sims)

    # -- forward ------------------------------------------------------------

    def forward(self, x_t: np.ndarray, t: int, prompt=None, want_cache=False):
        c, v = self.channels, self.patch
        if x_t.shape != (c, v, v):
            raise GridShapeError(f"patch shape {x_t.shape} != {(c, v, v)}")
        p = self.params
        tokens = x_t.astype(np.float64).reshape(c, v * v).T  # (n, c)
        te = time_embed(t, self.width)
        h0 = tokens @ p["embed.w"] + p["embed.b"]
        s_in = te @ p["time_in.w"] + p["time_in.b"]
        h = h0 * (1.0 + s_in)

        if prompt is not None:
            pt, pcache = self._encode_prompt(prompt)
        else:
            pt, pcache = None, None

        blocks = []
        for i in range(self.depth):
            b = f"b{i}"
            sa_out, sa_cache = _attn_forward(h, h, p, f"{b}.sa", self.heads)
            h_sa = h + sa_out
            if pt is not None:
                ca_out, ca_cache = _attn_forward(h_sa, pt, p, f"{b}.ca", self.heads)
                s_b = te @ p[f"{b}.ca.ts.w"] + p[f"{b}.ca.ts.b"]
                h_ca = h_sa + ca_out * s_b
            else:
                ca_out, ca_cache, s_b = None, None, None
                h_ca = h_sa
            u = h_ca @ p[f"{b}.ff.w1"] + p[f"{b}.ff.b1"]
            g = np.tanh(u)
            h_next = h_ca + g @ p[f"{b}.ff.w2"] + p[f"{b}.ff.b2"]
            blocks.append((h, sa_cache, h_sa, ca_out, ca_cache, s_b, h_ca, g))
            h = h_next

        y = h @ p["out.w"] + p["out.b"]
        out = y.T.reshape(c, v, v)
        if not want_cache:
            return out
        cache = (tokens, te, h0, s_in, pt, pcache, blocks, h)
        return out, cache

    def __call__(self, x_t: np.ndarray, t: int, prompt=None) -> np.ndarray:
        out = self.forward(x_t, t, prompt)
        return out.astype(x_t.dtype, copy=False)

    # -- backward -----------------------------------------------------------

    def backward(self, d_out: np.ndarray, cache, prompt=None):
        """Gradients of a scalar loss w.r.t. all parameters given d loss/d output."""
        p = self.params
        tokens, te, h0, s_in, pt, pcache, blocks, h_final = cache
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dy = d_out.reshape(self.channels, -1).T  # (n, c)
        grads["out.w"] += h_final.T @ dy
        grads["out.b"] += dy.sum(axis=0)
        dh = dy @ p["out.w"].T
        d_pt = np.zeros_like(pt) if pt is not None else None
        d_te = np.zeros(self.width)

        for i in reversed(range(self.depth)):
            b = f"b{i}"
            h_in, sa_cache, h_sa, ca_out, ca_cache, s_b, h_ca, g = blocks[i]
            # feed-forward
            d_g = dh @ p[f"{b}.ff.w2"].T
            grads[f"{b}.ff.w2"] += g.T @ dh
            grads[f"{b}.ff.b2"] += dh.sum(axis=0)
            d_u = d_g * (1.0 - g * g)
            grads[f"{b}.ff.w1"] += h_ca.T @ d_u
            grads[f"{b}.ff.b1"] += d_u.sum(axis=0)
            d_hca = dh + d_u @ p[f"{b}.ff.w1"].T
            # cross-attention with time scaling
            if ca_cache is not None:
                d_ca_out = d_hca * s_b
                d_sb = (d_hca * ca_out).sum(axis=0)
                grads[f"{b}.ca.ts.w"] += np.outer(te, d_sb)
                grads[f"{b}.ca.ts.b"] += d_sb
                d_te += p[f"{b}.ca.ts.w"] @ d_sb
                d_q, d_kv = _attn_backward(d_ca_out, ca_cache, p, f"{b}.ca",
                                           grads, self.heads)
                d_hsa = d_hca + d_q
                d_pt += d_kv
            else:
                d_hsa = d_hca
            # self-attention
            d_q, d_kv = _attn_backward(d_hsa, sa_cache, p, f"{b}.sa",
                                       grads, self.heads)
            dh = d_hsa + d_q + d_kv

        # prompt encoder
        if d_pt is not None:
            tp, sims = pcache
            d_lin = d_pt * sims[:, None]
            grads["prompt.w"] += tp.T @ d_lin
            grads["prompt.b"] += d_lin.sum(axis=0)

        # embedding-time scaling
        d_h0 = dh * (1.0 + s_in)
        d_sin = (dh * h0).sum(axis=0)
        grads["time_in.w"] += np.outer(te, d_sin)
        grads["time_in.b"] += d_sin
        grads["embed.w"] += tokens.T @ d_h0
        grads["embed.b"] += d_h0.sum(axis=0)
        return grads

    def loss_and_grads(self, x_t: np.ndarray, t: int, target: np.ndarray,
                       prompt=None):
        """MSE to the clean target patch and its parameter gradients."""
        out, cache = self.forward(x_t, t, prompt, want_cache=True)
        diff = out - target.astype(np.float64)
        loss = float(np.mean(diff * diff))
        d_out = 2.0 * diff / diff.size
        return loss, self.backward(d_out, cache, prompt)


def cross_attend(tokens: np.ndarray, prompt, t: int, model: PatchDiT,
                 block: int = 0) -> np.ndarray:
    """One texture-prompt cross-attention update on a token sequence.

    Exposed separately so the residual/time-scaling contract can be tested
    in isolation from the full denoiser.
    """
    pt, _ = model._encode_prompt(prompt)
    pre = f"b{block}.ca"
    out, _ = _attn_forward(tokens, pt, model.params, pre, model.heads)
    te = time_embed(t, model.width)
    s_b = te @ model.params[pre + ".ts.w"] + model.params[pre + ".ts.b"]
    return tokens + out * s_b


# ---------------------------------------------------------------------------
# linear-Gaussian oracle denoiser

@dataclass(frozen=True)
class GaussianOracleStats:
    """Prior mean and per-cell variance of the synthetic data distribution."""

    mean: float | np.ndarray = 0.0
    var: float = 1.0

    def __post_init__(self):
        if self.var <= 0:
            raise ConfigError("prior variance must be positive")


def denoise_gaussian_oracle(stats: GaussianOracleStats, s: NoiseSchedule,
                            x_t: np.ndarray, t: int) -> np.ndarray:
    """Exact posterior mean E[x0 | x_t] under Gaussian data and corruption."""
    ab = s.alpha_bar(t)
    denom = ab * stats.var + 1.0 - ab
    return (np.sqrt(ab) * stats.var * x_t + (1.0 - ab) * stats.mean) / denom


class GaussianOracleDenoiser:
    """Denoiser-interface wrapper around the closed-form posterior mean."""

    def __init__(self, stats: GaussianOracleStats, schedule: NoiseSchedule):
        self.stats = stats
        self.schedule = schedule

    def __call__(self, x_t: np.ndarray, t: int, prompt=None) -> np.ndarray:
        return denoise_gaussian_oracle(self.stats, self.schedule, x_t, t)


# ---------------------------------------------------------------------------
# GRM: coarse restorer + confidence head

def _conv3x3_forward(x, w, b):
    c, h_, w_ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    cols = win.transpose(1, 2, 0, 3, 4).reshape(h_ * w_, c * 9)
    y = cols @ w.reshape(len(w), -1).T + b
    return y.reshape(h_, w_, len(w)).transpose(2, 0, 1), cols


def _conv3x3_backward(dy, cols, x_shape, w):
    f = len(w)
    c, h_, w_ = x_shape
    dyc = dy.transpose(1, 2, 0).reshape(h_ * w_, f)
    dw = (dyc.T @ cols).reshape(w.shape)
    db = dyc.sum(axis=0)
    dcols = (dyc @ w.reshape(f, -1)).reshape(h_, w_, c, 3, 3)
    dxp = np.zeros((c, h_ + 2, w_ + 2))
    for di in range(3):
        for dj in range(3):
            dxp[:, di:di + h_, dj:dj + w_] += dcols[:, :, :, di, dj].transpose(2, 0, 1)
    return dw, db, dxp[:, 1:-1, 1:-1]


class GlobalRestorer:
    """Two 3x3 conv layers with tanh, then per-cell feature and confidence heads.

    The feature head predicts a residual correction to the input; the
    confidence head maps through a floored sigmoid so log C stays finite.
    """

    def __init__(self, channels: int = 1, hidden: int = 16, seed: int = 0):
        self.channels = channels
        self.hidden = hidden
        rng = np.random.Generator(np.random.PCG64(seed))
        c, f = channels, hidden
        self.params = {
            "conv1.w": rng.standard_normal((f, c, 3, 3)) / np.sqrt(9 * c),
            "conv1.b": np.zeros(f),
            "conv2.w": rng.standard_normal((f, f, 3, 3)) / np.sqrt(9 * f),
            "conv2.b": np.zeros(f),
            "feat.w": 0.1 * rng.standard_normal((c, f)) / np.sqrt(f),
            "feat.b": np.zeros(c),
            "conf.w": 0.1 * rng.standard_normal(f) / np.sqrt(f),
            "conf.b": np.zeros(1),
        }

    def forward(self, y_lr: np.ndarray, want_cache=False):
        if y_lr.ndim != 3 or y_lr.shape[0] != self.channels:
            raise GridShapeError(f"expected ({self.channels}, h, w), got {y_lr.shape}")
        p = self.params
        x = y_lr.astype(np.float64)
        a1, cols1 = _conv3x3_forward(x, p["conv1.w"], p["conv1.b"])
        h1 = np.tanh(a1)
        a2, cols2 = _conv3x3_forward(h1, p["conv2.w"], p["conv2.b"])
        h2 = np.tanh(a2)
        feat = np.einsum("cf,fhw->chw", p["feat.w"], h2) + p["feat.b"][:, None, None]
        y_hr = x + feat
        z = np.einsum("f,fhw->hw", p["conf.w"], h2)[None] + p["conf.b"][0]
        sig = 1.0 / (1.0 + np.exp(-z))
        conf = CONF_FLOOR + (1.0 - CONF_FLOOR) * sig
        if not want_cache:
            return y_hr, conf
        return y_hr, conf, (x, cols1, h1, cols2, h2, sig)

    def __call__(self, y_lr: np.ndarray):
        return self.forward(y_lr)

    def loss_and_grads(self, y_lr: np.ndarray, x_hr: np.ndarray,
                       p_loss: LossParams = LossParams()):
        """Confidence-driven loss through both heads, with parameter grads."""
        p = self.params
        y_hr, conf, cache = self.forward(y_lr, want_cache=True)
        x, cols1, h1, cols2, h2, sig = cache
        loss, d_y, d_c = confidence_loss_and_grads(y_hr, x_hr, conf, p_loss)

        grads = {k: np.zeros_like(v) for k, v in p.items()}
        # confidence head
        d_z = d_c * (1.0 - CONF_FLOOR) * sig * (1.0 - sig)
        grads["conf.w"] += np.einsum("hw,fhw->f", d_z[0], h2)
        grads["conf.b"] += d_z.sum()
        d_h2 = p["conf.w"][:, None, None] * d_z[0]
        # feature head (residual, so d_y flows straight through)
        grads["feat.w"] += np.einsum("chw,fhw->cf", d_y, h2)
        grads["feat.b"] += d_y.sum(axis=(1, 2))
        d_h2 += np.einsum("cf,chw->fhw", p["feat.w"], d_y)
        # trunk
        d_a2 = d_h2 * (1.0 - h2 * h2)
        dw2, db2, d_h1 = _conv3x3_backward(d_a2, cols2, h1.shape, p["conv2.w"])
        grads["conv2.w"] += dw2
        grads["conv2.b"] += db2
        d_a1 = d_h1 * (1.0 - h1 * h1)
        dw1, db1, _ = _conv3x3_backward(d_a1, cols1, x.shape, p["conv1.w"])
        grads["conv1.w"] += dw1
        grads["conv1.b"] += db1
        return loss, grads


def grm_restore(model: GlobalRestorer, y_lr: np.ndarray):
    """Coarse HR estimate plus its confidence map."""
    return model.forward(y_lr)


# ---------------------------------------------------------------------------
# training

class Adam:
    def __init__(self, params: dict, lr: float = 1e-3, b1: float = 0.9,
                 b2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            self.params[k] -= self.lr * (self.m[k] / bc1) / (
                np.sqrt(self.v[k] / bc2) + self.eps)


def train_toy(params: dict, objective, steps: int, lr: float = 1e-3,
              seed: int = 0) -> list[float]:
    """Adam loop over a seeded objective; returns the loss trace.

    objective(rng) must return (loss, grads) for a freshly sampled batch.
    Non-finite losses abort with NumericError instead of being swallowed.
    """
    if steps < 1:
        raise ConfigError("step count must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    opt = Adam(params, lr=lr)
    trace = []
    for _ in range(steps):
        loss, grads = objective(rng)
        if not np.isfinite(loss):
            raise NumericError(f"training diverged, loss={loss}")
        trace.append(loss)
        opt.step(grads)
    return trace


def make_grm_objective(model: GlobalRestorer, pair_sampler,
                       p_loss: LossParams = LossParams()):
    """objective for train_toy: pair_sampler(rng) -> (y_lr, x_hr)."""
    def objective(rng):
        y_lr, x_hr = pair_sampler(rng)
        return model.loss_and_grads(y_lr, x_hr, p_loss)
    return objective


def make_dit_gaussian_objective(model: PatchDiT, schedule: NoiseSchedule,
                                stats: GaussianOracleStats, batch: int = 8):
    """x0-prediction MSE objective on linear-Gaussian toy data."""
    shape = (model.channels, model.patch, model.patch)
    std = np.sqrt(stats.var)

    def objective(rng):
        total = 0.0
        grads = None
        for _ in range(batch):
            x0 = stats.mean + std * rng.standard_normal(shape)
            t = int(rng.integers(1, schedule.T + 1))
            eps = rng.standard_normal(shape)
            x_t = forward_sample(schedule, x0, t, eps)
            loss, g = model.loss_and_grads(x_t, t, x0)
            total += loss
            if grads is None:
                grads = g
            else:
                for k in grads:
                    grads[k] += g[k]
        for k in grads:
            grads[k] /= batch
        return total / batch, grads
    return objective

"""Stage-wise fusion operators.

Every mechanism maps two (B, C, H, W) streams to one fused (B, C, H, W)
map, so any of them can be plugged at any backbone stage without touching
the neck or head:

* ``mage_bite`` - gated cross-residual exchange followed by bidirectional
  token cross-attention and a depthwise/pointwise merge (the baseline).
* ``mage_only`` - gated exchange then a minimal 1x1 2C->C merge.
* ``bite_only`` - token exchange applied directly to the raw streams.
* ``cssa``      - threshold-based channel switching plus a learned spatial
  blend.
* ``gaff``      - squeeze-excitation recalibration, directional guidance
  maps with residual injection, then a direct or bottlenecked merge.
* ``none``      - no fusion (streams forwarded independently).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensors import (
    ParamSpec,
    attention,
    conv2d,
    gelu,
    global_avg_pool,
    global_max_pool,
    linear,
    relu,
    sigmoid,
    to_map,
    to_tokens,
)

MECHANISMS = ("mage_bite", "mage_only", "bite_only", "cssa", "gaff", "none")
GAFF_SE_RATIOS = (4, 8)


@dataclass(frozen=True)
class FusionConfig:
    """Mechanism choice, placement stages and mechanism hyperparameters."""

    mechanism: str = "mage_bite"
    stages: frozenset = frozenset({1, 2, 3, 4})
    tau: float = 0.5  # cssa channel-switch threshold
    se_ratio: int = 4  # gaff squeeze-excitation reduction
    guidance: str = "separate"  # gaff: shared | separate guidance heads
    merge: str = "direct"  # gaff: direct | bottleneck 2C->C merge

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown fusion mechanism {self.mechanism!r}")
        stages = frozenset(self.stages)
        if not stages <= {1, 2, 3, 4}:
            raise ConfigError(f"fusion stages {sorted(stages)} not within 1..4")
        if self.mechanism == "none":
            stages = frozenset()
        object.__setattr__(self, "stages", stages)
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if self.se_ratio not in GAFF_SE_RATIOS:
            raise ConfigError(f"se_ratio must be one of {GAFF_SE_RATIOS}, got {self.se_ratio}")
        if self.guidance not in ("shared", "separate"):
            raise ConfigError(f"guidance must be shared/separate, got {self.guidance!r}")
        if self.merge not in ("direct", "bottleneck"):
            raise ConfigError(f"merge must be direct/bottleneck, got {self.merge!r}")


@dataclass
class GatePack:
    """Channel gates (B, C, 1, 1) and spatial gates (B, 1, H, W), all in [0, 1]."""

    ch_b_to_a: np.ndarray
    ch_a_to_b: np.ndarray
    sp_b_to_a: np.ndarray
    sp_a_to_b: np.ndarray


def _check_pair(xa, xb):
    if xa.shape != xb.shape:
        raise ShapeError(f"stream shapes differ: {xa.shape} vs {xb.shape}")
    if xa.ndim != 4:
        raise ShapeError(f"streams must be rank-4 maps, got rank {xa.ndim}")


def _hidden(c):
    return max(c // 4, 1)


# ---------------------------------------------------------------------------
# MAGE: modality-aware gated exchange


def mage_specs(c, p):
    h = _hidden(2 * c)
    hs = _hidden(2 * c)
    return [
        ParamSpec(f"{p}.mage.ch.fc1.w", (2 * c, h), "weight"),
        ParamSpec(f"{p}.mage.ch.fc1.b", (h,), "bias"),
        ParamSpec(f"{p}.mage.ch.to_a.w", (h, c), "weight"),
        ParamSpec(f"{p}.mage.ch.to_a.b", (c,), "bias"),
        ParamSpec(f"{p}.mage.ch.to_b.w", (h, c), "weight"),
        ParamSpec(f"{p}.mage.ch.to_b.b", (c,), "bias"),
        ParamSpec(f"{p}.mage.sp.fc1.w", (2 * c, hs), "weight"),
        ParamSpec(f"{p}.mage.sp.fc1.b", (hs,), "bias"),
        ParamSpec(f"{p}.mage.sp.out.w", (hs, 2), "weight"),
        ParamSpec(f"{p}.mage.sp.out.b", (2,), "bias"),
    ]


def mage(xa, xb, params, p, force_spatial=None, force_channel=None):
    """Cross-modal channel + spatial gating on the joint descriptor.

    Returns the rectified pair plus the gates.  Gates scale only the
    cross-stream residual, so the identity path is untouched; forcing the
    gates to 0 therefore returns the inputs unchanged.

    ``force_spatial`` / ``force_channel`` clamp the respective gates to a
    constant, used by diagnostics and the identity checks.
    """
    _check_pair(xa, xb)
    b, c, h, w = xa.shape
    z = np.concatenate([xa, xb], axis=1)

    if force_channel is None:
        trunk_avg = gelu(linear(global_avg_pool(z), params[f"{p}.mage.ch.fc1.w"], params[f"{p}.mage.ch.fc1.b"]))
        trunk_max = gelu(linear(global_max_pool(z), params[f"{p}.mage.ch.fc1.w"], params[f"{p}.mage.ch.fc1.b"]))
        summary = trunk_avg.astype(np.float64) + trunk_max.astype(np.float64)
        ch_b_to_a = sigmoid(linear(summary, params[f"{p}.mage.ch.to_a.w"], params[f"{p}.mage.ch.to_a.b"]))
        ch_a_to_b = sigmoid(linear(summary, params[f"{p}.mage.ch.to_b.w"], params[f"{p}.mage.ch.to_b.b"]))
        ch_b_to_a = ch_b_to_a.reshape(b, c, 1, 1)
        ch_a_to_b = ch_a_to_b.reshape(b, c, 1, 1)
    else:
        ch_b_to_a = np.full((b, c, 1, 1), force_channel, np.float32)
        ch_a_to_b = ch_b_to_a.copy()

    if force_spatial is None:
        tz = to_tokens(z)
        hid = gelu(linear(tz, params[f"{p}.mage.sp.fc1.w"], params[f"{p}.mage.sp.fc1.b"]))
        masks = sigmoid(linear(hid, params[f"{p}.mage.sp.out.w"], params[f"{p}.mage.sp.out.b"]))
        sp_b_to_a = masks[:, :, 0].reshape(b, 1, h, w)
        sp_a_to_b = masks[:, :, 1].reshape(b, 1, h, w)
    else:
        sp_b_to_a = np.full((b, 1, h, w), force_spatial, np.float32)
        sp_a_to_b = sp_b_to_a.copy()

    gates = GatePack(ch_b_to_a, ch_a_to_b, sp_b_to_a, sp_a_to_b)
    if force_spatial == 0.0 or force_channel == 0.0:
        # zero gates kill the cross residual; skip the add for bitwise identity
        return xa.copy(), xb.copy(), gates

    xa_hat = (
        xa.astype(np.float64)
        + sp_b_to_a.astype(np.float64) * (ch_b_to_a.astype(np.float64) * xb.astype(np.float64))
    ).astype(np.float32)
    xb_hat = (
        xb.astype(np.float64)
        + sp_a_to_b.astype(np.float64) * (ch_a_to_b.astype(np.float64) * xa.astype(np.float64))
    ).astype(np.float32)
    return xa_hat, xb_hat, gates


# ---------------------------------------------------------------------------
# BiTE: bidirectional token exchange


def bite_specs(c, p):
    specs = []
    for s in ("a", "b"):
        for proj in ("q", "k", "v"):
            specs.append(ParamSpec(f"{p}.bite.{s}.{proj}.w", (c, c), "weight"))
            specs.append(ParamSpec(f"{p}.bite.{s}.{proj}.b", (c,), "bias"))
    specs += [
        ParamSpec(f"{p}.bite.dw.w", (2 * c, 1, 3, 3), "weight"),
        ParamSpec(f"{p}.bite.dw.b", (2 * c,), "bias"),
        ParamSpec(f"{p}.bite.proj.w", (2 * c, c), "weight"),
        ParamSpec(f"{p}.bite.proj.b", (c,), "bias"),
    ]
    return specs


def bite(xa, xb, params, p):
    """Symmetric residual cross-attention between the two token streams,
    then depthwise 3x3 + 1x1 merge back to width C (single head, d_k = C)."""
    _check_pair(xa, xb)
    _, c, h, w = xa.shape
    ta, tb = to_tokens(xa), to_tokens(xb)
    scale = 1.0 / np.sqrt(c)

    def qkv(t, s):
        return (
            linear(t, params[f"{p}.bite.{s}.q.w"], params[f"{p}.bite.{s}.q.b"]),
            linear(t, params[f"{p}.bite.{s}.k.w"], params[f"{p}.bite.{s}.k.b"]),
            linear(t, params[f"{p}.bite.{s}.v.w"], params[f"{p}.bite.{s}.v.b"]),
        )

    qa, ka, va = qkv(ta, "a")
    qb, kb, vb = qkv(tb, "b")
    ta_up = ta + attention(qa, kb, vb, scale)
    tb_up = tb + attention(qb, ka, va, scale)

    z = to_map(np.concatenate([ta_up, tb_up], axis=2), h, w)
    z = conv2d(z, params[f"{p}.bite.dw.w"], params[f"{p}.bite.dw.b"], stride=1, pad=1, groups=2 * c)
    return to_map(linear(to_tokens(z), params[f"{p}.bite.proj.w"], params[f"{p}.bite.proj.b"]), h, w)


# ---------------------------------------------------------------------------
# composed baseline variants


def mage_bite_specs(c, p):
    return mage_specs(c, p) + bite_specs(c, p)


def mage_bite(xa, xb, params, p, diag=None):
    ra, rb, gates = mage(xa, xb, params, p)
    if diag is not None:
        _gate_diag(diag, gates)
    return bite(ra, rb, params, p)


def mage_only_specs(c, p):
    return mage_specs(c, p) + [
        ParamSpec(f"{p}.monly.merge.w", (2 * c, c), "weight"),
        ParamSpec(f"{p}.monly.merge.b", (c,), "bias"),
    ]


def mage_only(xa, xb, params, p, diag=None):
    ra, rb, gates = mage(xa, xb, params, p)
    if diag is not None:
        _gate_diag(diag, gates)
    _, _, h, w = xa.shape
    z = to_tokens(np.concatenate([ra, rb], axis=1))
    return to_map(linear(z, params[f"{p}.monly.merge.w"], params[f"{p}.monly.merge.b"]), h, w)


def bite_only_specs(c, p):
    return bite_specs(c, p)


def bite_only(xa, xb, params, p, diag=None):
    return bite(xa, xb, params, p)


# ---------------------------------------------------------------------------
# CSSA: channel switching + spatial attention


def cssa_specs(c, p):
    hs = _hidden(2 * c)
    specs = []
    for s in ("a", "b"):
        specs.append(ParamSpec(f"{p}.cssa.{s}.score.w", (3,), "weight"))
        specs.append(ParamSpec(f"{p}.cssa.{s}.score.b", (1,), "bias"))
    specs += [
        ParamSpec(f"{p}.cssa.sp.fc1.w", (2 * c, hs), "weight"),
        ParamSpec(f"{p}.cssa.sp.fc1.b", (hs,), "bias"),
        ParamSpec(f"{p}.cssa.sp.out.w", (hs, 1), "weight"),
        ParamSpec(f"{p}.cssa.sp.out.b", (1,), "bias"),
    ]
    return specs


def channel_scores(x, params, p, s):
    """Per-channel saliency: sigmoid of a k=3 1D conv over pooled channels."""
    pooled = global_avg_pool(x).astype(np.float64)  # (B, C)
    k = params[f"{p}.cssa.{s}.score.w"].astype(np.float64)
    bias = float(params[f"{p}.cssa.{s}.score.b"][0])
    padded = np.pad(pooled, ((0, 0), (1, 1)))
    conv = (
        padded[:, :-2] * k[0] + padded[:, 1:-1] * k[1] + padded[:, 2:] * k[2] + bias
    )
    return sigmoid(conv)


def cssa_switch(xa, xb, score_a, score_b, tau):
    """Replace channels whose score falls below tau by the same-index
    channel of the other stream."""
    swap_a = (score_a < tau)[:, :, None, None]
    swap_b = (score_b < tau)[:, :, None, None]
    return np.where(swap_a, xb, xa), np.where(swap_b, xa, xb), swap_a, swap_b


def cssa(xa, xb, params, p, tau=0.5, diag=None):
    _check_pair(xa, xb)
    _, _, h, w = xa.shape
    score_a = channel_scores(xa, params, p, "a")
    score_b = channel_scores(xb, params, p, "b")
    sw_a, sw_b, swap_a, swap_b = cssa_switch(xa, xb, score_a, score_b, tau)

    z = to_tokens(np.concatenate([sw_a, sw_b], axis=1))
    hid = gelu(linear(z, params[f"{p}.cssa.sp.fc1.w"], params[f"{p}.cssa.sp.fc1.b"]))
    m = sigmoid(linear(hid, params[f"{p}.cssa.sp.out.w"], params[f"{p}.cssa.sp.out.b"]))
    m = m.reshape(xa.shape[0], 1, h, w).astype(np.float64)

    if diag is not None:
        diag.setdefault("swap_fraction", []).append(
            float((swap_a.mean() + swap_b.mean()) / 2.0)
        )
        diag.setdefault("spatial_mask_mean", []).append(float(m.mean()))
    return (m * sw_a.astype(np.float64) + (1.0 - m) * sw_b.astype(np.float64)).astype(np.float32)


# ---------------------------------------------------------------------------
# GAFF: guided attentive feature fusion


def gaff_specs(c, p, se_ratio=4, guidance="separate", merge="direct"):
    if c % se_ratio != 0:
        raise ConfigError(f"width {c} not divisible by se_ratio {se_ratio}")
    specs = []
    for s in ("a", "b"):
        specs += [
            ParamSpec(f"{p}.gaff.{s}.se.fc1.w", (c, c // se_ratio), "weight"),
            ParamSpec(f"{p}.gaff.{s}.se.fc1.b", (c // se_ratio,), "bias"),
            ParamSpec(f"{p}.gaff.{s}.se.fc2.w", (c // se_ratio, c), "weight"),
            ParamSpec(f"{p}.gaff.{s}.se.fc2.b", (c,), "bias"),
        ]
    if guidance == "shared":
        specs += [
            ParamSpec(f"{p}.gaff.guide.w", (c, 1), "weight"),
            ParamSpec(f"{p}.gaff.guide.b", (1,), "bias"),
        ]
    else:
        for s in ("a", "b"):
            specs += [
                ParamSpec(f"{p}.gaff.guide_{s}.w", (c, 1), "weight"),
                ParamSpec(f"{p}.gaff.guide_{s}.b", (1,), "bias"),
            ]
    if merge == "direct":
        specs += [
            ParamSpec(f"{p}.gaff.merge.w", (2 * c, c), "weight"),
            ParamSpec(f"{p}.gaff.merge.b", (c,), "bias"),
        ]
    else:
        specs += [
            ParamSpec(f"{p}.gaff.merge.fc1.w", (2 * c, c // 2), "weight"),
            ParamSpec(f"{p}.gaff.merge.fc1.b", (c // 2,), "bias"),
            ParamSpec(f"{p}.gaff.merge.fc2.w", (c // 2, c), "weight"),
            ParamSpec(f"{p}.gaff.merge.fc2.b", (c,), "bias"),
        ]
    return specs


def _se(x, params, p, s):
    exc = sigmoid(
        linear(
            relu(linear(global_avg_pool(x), params[f"{p}.gaff.{s}.se.fc1.w"], params[f"{p}.gaff.{s}.se.fc1.b"])),
            params[f"{p}.gaff.{s}.se.fc2.w"],
            params[f"{p}.gaff.{s}.se.fc2.b"],
        )
    )
    return (exc[:, :, None, None].astype(np.float64) * x.astype(np.float64)).astype(np.float32), exc


def _guide(x, params, p, source, guidance):
    name = f"{p}.gaff.guide" if guidance == "shared" else f"{p}.gaff.guide_{source}"
    b, _, h, w = x.shape
    g = sigmoid(linear(to_tokens(x), params[f"{name}.w"], params[f"{name}.b"]))
    return g.reshape(b, 1, h, w)


def gaff(xa, xb, params, p, se_ratio=4, guidance="separate", merge="direct", diag=None):
    _check_pair(xa, xb)
    _, c, h, w = xa.shape
    if c % se_ratio != 0:
        raise ConfigError(f"width {c} not divisible by se_ratio {se_ratio}")
    ra, exc_a = _se(xa, params, p, "a")
    rb, exc_b = _se(xb, params, p, "b")
    g_b_to_a = _guide(rb, params, p, "b", guidance)
    g_a_to_b = _guide(ra, params, p, "a", guidance)
    ua = (ra.astype(np.float64) + g_b_to_a.astype(np.float64) * rb.astype(np.float64)).astype(np.float32)
    ub = (rb.astype(np.float64) + g_a_to_b.astype(np.float64) * ra.astype(np.float64)).astype(np.float32)

    if diag is not None:
        diag.setdefault("se_mean", []).append(float((exc_a.mean() + exc_b.mean()) / 2.0))
        diag.setdefault("guidance_mean", []).append(float((g_b_to_a.mean() + g_a_to_b.mean()) / 2.0))

    z = to_tokens(np.concatenate([ua, ub], axis=1))
    if merge == "direct":
        out = linear(z, params[f"{p}.gaff.merge.w"], params[f"{p}.gaff.merge.b"])
    else:
        hid = relu(linear(z, params[f"{p}.gaff.merge.fc1.w"], params[f"{p}.gaff.merge.fc1.b"]))
        out = linear(hid, params[f"{p}.gaff.merge.fc2.w"], params[f"{p}.gaff.merge.fc2.b"])
    return to_map(out, h, w)


# ---------------------------------------------------------------------------
# dispatch


def _gate_diag(diag, gates):
    diag.setdefault("channel_gate_mean", []).append(
        float((gates.ch_b_to_a.mean() + gates.ch_a_to_b.mean()) / 2.0)
    )
    diag.setdefault("spatial_gate_mean", []).append(
        float((gates.sp_b_to_a.mean() + gates.sp_a_to_b.mean()) / 2.0)
    )


def fusion_param_specs(cfg, c, p):
    """Parameter declarations for one fusion block of width ``c``."""
    if cfg.mechanism == "mage_bite":
        return mage_bite_specs(c, p)
    if cfg.mechanism == "mage_only":
        return mage_only_specs(c, p)
    if cfg.mechanism == "bite_only":
        return bite_only_specs(c, p)
    if cfg.mechanism == "cssa":
        return cssa_specs(c, p)
    if cfg.mechanism == "gaff":
        return gaff_specs(c, p, cfg.se_ratio, cfg.guidance, cfg.merge)
    return []


def apply_fusion(cfg, xa, xb, params, p, diag=None):
    """Run the configured mechanism on one stage's stream pair."""
    if cfg.mechanism == "mage_bite":
        return mage_bite(xa, xb, params, p, diag=diag)
    if cfg.mechanism == "mage_only":
        return mage_only(xa, xb, params, p, diag=diag)
    if cfg.mechanism == "bite_only":
        return bite_only(xa, xb, params, p, diag=diag)
    if cfg.mechanism == "cssa":
        return cssa(xa, xb, params, p, tau=cfg.tau, diag=diag)
    if cfg.mechanism == "gaff":
        return gaff(
            xa, xb, params, p,
            se_ratio=cfg.se_ratio, guidance=cfg.guidance, merge=cfg.merge, diag=diag,
        )
    raise ConfigError(f"mechanism {cfg.mechanism!r} has no fusion block")

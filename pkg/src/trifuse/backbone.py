"""Dual-stream four-stage hierarchical transformer encoder.

Each stream runs an identical Mix-Transformer-style encoder with its own
weights: overlapping patch embeddings (7x7/s4 then 3x3/s2), pre-norm
blocks with spatial-reduction attention and a depthwise-conv feed-forward.
At stages selected by the fusion config, the two stream outputs are
replaced by a single fused map that also feeds both next-stage streams;
unselected stages emit the element-wise mean of the streams for the neck
while the streams keep propagating separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .fusion import FusionConfig, apply_fusion, fusion_param_specs
from .tensors import (
    ParamSpec,
    attention,
    conv2d,
    gelu,
    layer_norm,
    linear,
    param_count,
    to_map,
    to_tokens,
)

STAGE_STRIDES = (4, 8, 16, 32)
HEADS = (1, 2, 5, 8)
SR_RATIOS = (8, 4, 2, 1)
FFN_EXPANSION = 4

_VARIANTS = {
    "B0": ((32, 64, 160, 256), (2, 2, 2, 2)),
    "B1": ((64, 128, 320, 512), (2, 2, 2, 2)),
    "B2": ((64, 128, 320, 512), (3, 4, 6, 3)),
    "B3": ((64, 128, 320, 512), (3, 4, 18, 3)),
    "B4": ((64, 128, 320, 512), (3, 8, 27, 3)),
}

MODALITY_SETS = ("RTE", "RT", "RE", "TE")


@dataclass(frozen=True)
class BackboneConfig:
    variant: str
    widths: tuple
    depths: tuple
    heads: tuple = HEADS
    sr_ratios: tuple = SR_RATIOS
    expansion: int = FFN_EXPANSION

    def __post_init__(self):
        for name, v in (("widths", self.widths), ("depths", self.depths),
                        ("heads", self.heads), ("sr_ratios", self.sr_ratios)):
            if len(v) != 4:
                raise ConfigError(f"{name} must have 4 entries, got {len(v)}")
        for c, h in zip(self.widths, self.heads):
            if c % h:
                raise ConfigError(f"width {c} not divisible by heads {h}")

    @classmethod
    def variant_config(cls, variant):
        if variant not in _VARIANTS:
            raise ConfigError(f"unknown backbone variant {variant!r} (use B0..B4)")
        widths, depths = _VARIANTS[variant]
        return cls(variant=variant, widths=widths, depths=depths)


@dataclass
class StageFeature:
    """One stage output map annotated with its stride and width."""

    map: np.ndarray
    stage: int
    stride: int
    width: int


@dataclass
class StreamSplit:
    """Channel split of a five-channel input into the two encoder streams."""

    stream_a: np.ndarray
    stream_b: np.ndarray
    modalities: str


def normalize_modalities(modalities):
    mods = "".join(m for m in "RTE" if m in set(modalities.upper()))
    if mods not in MODALITY_SETS:
        raise ConfigError(
            f"modalities {modalities!r} invalid: a dual-stream model needs one of {MODALITY_SETS}"
        )
    return mods


def stream_channels(modalities):
    """(stream A channels, stream B channels) for a modality subset.

    RGB always occupies stream A; the auxiliary stream carries the selected
    thermal/event channels.  For Thermal+Event, thermal is stream A and
    event stream B.
    """
    mods = normalize_modalities(modalities)
    if mods == "RTE":
        return 3, 2
    if mods in ("RT", "RE"):
        return 3, 1
    return 1, 1  # TE


def split_streams(x, modalities="RTE"):
    """Partition a (B, 5, H, W) input into the two modality streams."""
    if x.ndim != 4 or x.shape[1] != 5:
        raise ShapeError(f"expected (B, 5, H, W) input, got shape {x.shape}")
    mods = normalize_modalities(modalities)
    if mods == "RTE":
        a, b = x[:, 0:3], x[:, 3:5]
    elif mods == "RT":
        a, b = x[:, 0:3], x[:, 3:4]
    elif mods == "RE":
        a, b = x[:, 0:3], x[:, 4:5]
    else:  # TE
        a, b = x[:, 3:4], x[:, 4:5]
    return StreamSplit(np.ascontiguousarray(a), np.ascontiguousarray(b), mods)


# ---------------------------------------------------------------------------
# parameter layout


def _embed_geometry(stage):
    # stage 1: 7x7 stride 4 pad 3; stages 2-4: 3x3 stride 2 pad 1
    return (7, 4, 3) if stage == 1 else (3, 2, 1)


def _stage_specs(cfg, stage, in_ch, p):
    i = stage - 1
    c = cfg.widths[i]
    k, _, _ = _embed_geometry(stage)
    sr = cfg.sr_ratios[i]
    e = cfg.expansion
    specs = [
        ParamSpec(f"{p}.s{stage}.embed.w", (c, in_ch, k, k), "weight"),
        ParamSpec(f"{p}.s{stage}.embed.b", (c,), "bias"),
        ParamSpec(f"{p}.s{stage}.embed.norm.g", (c,), "scale"),
        ParamSpec(f"{p}.s{stage}.embed.norm.b", (c,), "bias"),
    ]
    for j in range(cfg.depths[i]):
        q = f"{p}.s{stage}.blk{j}"
        specs += [
            ParamSpec(f"{q}.norm1.g", (c,), "scale"),
            ParamSpec(f"{q}.norm1.b", (c,), "bias"),
            ParamSpec(f"{q}.attn.q.w", (c, c), "weight"),
            ParamSpec(f"{q}.attn.q.b", (c,), "bias"),
            ParamSpec(f"{q}.attn.k.w", (c, c), "weight"),
            ParamSpec(f"{q}.attn.k.b", (c,), "bias"),
            ParamSpec(f"{q}.attn.v.w", (c, c), "weight"),
            ParamSpec(f"{q}.attn.v.b", (c,), "bias"),
            ParamSpec(f"{q}.attn.proj.w", (c, c), "weight"),
            ParamSpec(f"{q}.attn.proj.b", (c,), "bias"),
            ParamSpec(f"{q}.norm2.g", (c,), "scale"),
            ParamSpec(f"{q}.norm2.b", (c,), "bias"),
            ParamSpec(f"{q}.ffn.fc1.w", (c, e * c), "weight"),
            ParamSpec(f"{q}.ffn.fc1.b", (e * c,), "bias"),
            ParamSpec(f"{q}.ffn.dw.w", (e * c, 1, 3, 3), "weight"),
            ParamSpec(f"{q}.ffn.dw.b", (e * c,), "bias"),
            ParamSpec(f"{q}.ffn.fc2.w", (e * c, c), "weight"),
            ParamSpec(f"{q}.ffn.fc2.b", (c,), "bias"),
        ]
        if sr > 1:
            specs += [
                ParamSpec(f"{q}.attn.sr.w", (c, c, sr, sr), "weight"),
                ParamSpec(f"{q}.attn.sr.b", (c,), "bias"),
                ParamSpec(f"{q}.attn.sr_norm.g", (c,), "scale"),
                ParamSpec(f"{q}.attn.sr_norm.b", (c,), "bias"),
            ]
    specs += [
        ParamSpec(f"{p}.s{stage}.norm.g", (c,), "scale"),
        ParamSpec(f"{p}.s{stage}.norm.b", (c,), "bias"),
    ]
    return specs


def backbone_param_specs(cfg, fusion, modalities="RTE"):
    """Full dual-stream parameter layout including fusion blocks."""
    ca, cb = stream_channels(modalities)
    specs = []
    for stream, in_ch in (("a", ca), ("b", cb)):
        prev = in_ch
        for stage in range(1, 5):
            specs += _stage_specs(cfg, stage, prev, stream)
            prev = cfg.widths[stage - 1]
    for stage in sorted(fusion.stages):
        specs += fusion_param_specs(fusion, cfg.widths[stage - 1], f"fuse.s{stage}")
    return specs


def count_params(cfg, fusion, modalities="RTE", neck_specs=None):
    """Exact trainable-scalar count; never materializes the arrays."""
    specs = backbone_param_specs(cfg, fusion, modalities)
    if neck_specs is not None:
        specs = specs + list(neck_specs)
    return param_count(specs)


# ---------------------------------------------------------------------------
# forward pieces


def patch_embed(x, stage, params, p):
    """Overlapping strided conv embedding followed by token layer norm."""
    k, stride, pad = _embed_geometry(stage)
    z = conv2d(x, params[f"{p}.s{stage}.embed.w"], params[f"{p}.s{stage}.embed.b"], stride=stride, pad=pad)
    _, _, h, w = z.shape
    t = layer_norm(to_tokens(z), params[f"{p}.s{stage}.embed.norm.g"], params[f"{p}.s{stage}.embed.norm.b"])
    return t, h, w


def sra_attention(t, h, w, heads, sr, params, q):
    """Pre-norm spatial-reduction attention block half, residual included.

    With sr == 1 this is plain multi-head self-attention; otherwise keys and
    values come from an sr x sr strided conv of the (normed) token map,
    ceil-padded so any spatial size is accepted.
    """
    b, n, c = t.shape
    if n != h * w:
        raise ShapeError(f"token count {n} != {h}x{w}")
    tn = layer_norm(t, params[f"{q}.norm1.g"], params[f"{q}.norm1.b"])
    query = linear(tn, params[f"{q}.attn.q.w"], params[f"{q}.attn.q.b"])
    if sr > 1:
        m = to_map(tn, h, w)
        # ceil-mode: pad bottom/right so sr divides both dims
        ph = (sr - h % sr) % sr
        pw = (sr - w % sr) % sr
        if ph or pw:
            m = np.pad(m, ((0, 0), (0, 0), (0, ph), (0, pw)))
        red = conv2d(m, params[f"{q}.attn.sr.w"], params[f"{q}.attn.sr.b"], stride=sr, pad=0)
        kv_t = layer_norm(to_tokens(red), params[f"{q}.attn.sr_norm.g"], params[f"{q}.attn.sr_norm.b"])
    else:
        kv_t = tn
    key = linear(kv_t, params[f"{q}.attn.k.w"], params[f"{q}.attn.k.b"])
    val = linear(kv_t, params[f"{q}.attn.v.w"], params[f"{q}.attn.v.b"])

    d = c // heads
    scale = 1.0 / np.sqrt(d)
    outs = []
    for hd in range(heads):
        sl = slice(hd * d, (hd + 1) * d)
        outs.append(attention(query[:, :, sl], key[:, :, sl], val[:, :, sl], scale))
    merged = np.concatenate(outs, axis=2)
    out = linear(merged, params[f"{q}.attn.proj.w"], params[f"{q}.attn.proj.b"])
    return t + out


def mix_ffn(t, h, w, expansion, params, q):
    """Pre-norm FFN with a depthwise 3x3 conv between the linears, residual
    included."""
    b, n, c = t.shape
    tn = layer_norm(t, params[f"{q}.norm2.g"], params[f"{q}.norm2.b"])
    hid = linear(tn, params[f"{q}.ffn.fc1.w"], params[f"{q}.ffn.fc1.b"])
    m = to_map(hid, h, w)
    m = conv2d(m, params[f"{q}.ffn.dw.w"], params[f"{q}.ffn.dw.b"], stride=1, pad=1, groups=expansion * c)
    hid = gelu(to_tokens(m))
    out = linear(hid, params[f"{q}.ffn.fc2.w"], params[f"{q}.ffn.fc2.b"])
    return t + out


def encode_stage(x, stage, cfg, params, p):
    """Run one stream through one stage: embed, blocks, final norm, to map."""
    i = stage - 1
    t, h, w = patch_embed(x, stage, params, p)
    for j in range(cfg.depths[i]):
        q = f"{p}.s{stage}.blk{j}"
        t = sra_attention(t, h, w, cfg.heads[i], cfg.sr_ratios[i], params, q)
        t = mix_ffn(t, h, w, cfg.expansion, params, q)
    t = layer_norm(t, params[f"{p}.s{stage}.norm.g"], params[f"{p}.s{stage}.norm.b"])
    return to_map(t, h, w)


def forward_single(x, cfg, params, p="a"):
    """Single-stream encoder pass; returns the four per-stage maps."""
    feats = []
    cur = x
    for stage in range(1, 5):
        cur = encode_stage(cur, stage, cfg, params, p)
        feats.append(StageFeature(cur, stage, STAGE_STRIDES[stage - 1], cfg.widths[stage - 1]))
    return feats


def forward_dual(x, cfg, fusion, params, modalities="RTE", diag=None):
    """Dual-stream pass with fusion hooks.

    Returns four StageFeatures.  At fused stages the emitted map is the
    fusion output, which also replaces both streams' next-stage input; at
    unfused stages the emitted map is the element-wise mean of the two
    streams (parameter-free, keeping the neck interface fixed) while the
    streams continue independently.
    """
    split = split_streams(x, modalities)
    xa, xb = split.stream_a, split.stream_b
    feats = []
    for stage in range(1, 5):
        fa = encode_stage(xa, stage, cfg, params, "a")
        fb = encode_stage(xb, stage, cfg, params, "b")
        width = cfg.widths[stage - 1]
        if stage in fusion.stages:
            fused = apply_fusion(fusion, fa, fb, params, f"fuse.s{stage}", diag=diag)
            out = fused
            xa = xb = fused
        else:
            out = ((fa.astype(np.float64) + fb.astype(np.float64)) / 2.0).astype(np.float32)
            xa, xb = fa, fb
        feats.append(StageFeature(out, stage, STAGE_STRIDES[stage - 1], width))
    return feats

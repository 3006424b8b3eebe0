"""Deterministic dense-tensor kernels.

All feature maps are plain ``numpy`` arrays: maps are float32 with shape
(B, C, H, W), token matrices are float32 with shape (B, N, C) where
N = H * W.  Buffers stay 32-bit; reductions, matmuls and normalizations
accumulate in float64 so results compare against brute-force oracles
within 1e-6.  Everything here is a pure function of its inputs, so
repeated calls are bitwise identical.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from .errors import ConfigError, ShapeError

DTYPE = np.float32


def _as_f32(x):
    x = np.asarray(x)
    return x if x.dtype == DTYPE else x.astype(DTYPE)


# ---------------------------------------------------------------------------
# map <-> token reshapes


def to_tokens(x):
    """(B, C, H, W) map -> (B, N, C) token matrix, N = H*W row-major."""
    if x.ndim != 4:
        raise ShapeError(f"expected rank-4 map, got rank {x.ndim}")
    b, c, h, w = x.shape
    return np.ascontiguousarray(x.reshape(b, c, h * w).transpose(0, 2, 1))


def to_map(t, h, w):
    """(B, N, C) tokens -> (B, C, H, W) map; inverse of :func:`to_tokens`."""
    if t.ndim != 3:
        raise ShapeError(f"expected rank-3 token matrix, got rank {t.ndim}")
    b, n, c = t.shape
    if n != h * w:
        raise ShapeError(f"token count {n} != H*W = {h}*{w}")
    return np.ascontiguousarray(t.transpose(0, 2, 1).reshape(b, c, h, w))


# ---------------------------------------------------------------------------
# core kernels


def matmul(a, b):
    """Matrix product with float64 accumulation, result cast to float32."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(
            f"inner dimensions differ: {a.shape[-1]} vs {b.shape[-2 if b.ndim > 1 else 0]}"
        )
    return np.matmul(a.astype(np.float64), b.astype(np.float64)).astype(DTYPE)


def conv2d(x, w, b=None, stride=1, pad=0, groups=1):
    """Direct 2-D convolution (cross-correlation) on a (B, C, H, W) map.

    ``w`` has shape (Cout, Cin/groups, kh, kw).  Output spatial size is
    floor((H + 2*pad - k) / stride) + 1.  Depthwise convs use groups == C.
    """
    x = np.asarray(x)
    w = np.asarray(w)
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4, got rank {x.ndim}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d weight must be rank 4, got rank {w.ndim}")
    bsz, cin, h, wid = x.shape
    cout, cin_g, kh, kw = w.shape
    if cin % groups != 0:
        raise ShapeError(f"input channels {cin} not divisible by groups {groups}")
    if cout % groups != 0:
        raise ShapeError(f"output channels {cout} not divisible by groups {groups}")
    if cin_g != cin // groups:
        raise ShapeError(
            f"weight expects {cin_g} channels per group, input provides {cin // groups}"
        )
    if pad < 0:
        raise ShapeError(f"negative padding {pad}")
    if h + 2 * pad < kh or wid + 2 * pad < kw:
        raise ShapeError(
            f"spatial size {h}x{wid} (+pad {pad}) smaller than kernel {kh}x{kw}"
        )

    xp = x if pad == 0 else np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wid + 2 * pad - kw) // stride + 1
    w64 = w.astype(np.float64)

    def tap(dy, dx):
        # input slice aligned with kernel tap (dy, dx) at every output pixel
        return xp[:, :, dy : dy + ho * stride : stride, dx : dx + wo * stride : stride]

    if groups == cin and cin_g == 1:
        # depthwise: one multiply per kernel tap, accumulated in float64
        out = np.zeros((bsz, cout, ho, wo), np.float64)
        for dy in range(kh):
            for dx in range(kw):
                out += tap(dy, dx) * w[:, 0, dy, dx][None, :, None, None]
    elif groups == 1:
        # dense: stack the kernel taps and contract in one float64 matmul
        cols = np.empty((bsz, kh, kw, cin, ho, wo), np.float64)
        for dy in range(kh):
            for dx in range(kw):
                cols[:, dy, dx] = tap(dy, dx)
        wmat = w64.transpose(0, 2, 3, 1).reshape(cout, kh * kw * cin)
        out = np.matmul(wmat, cols.reshape(bsz, kh * kw * cin, ho * wo))
        out = out.reshape(bsz, cout, ho, wo)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        out = np.empty((bsz, cout, ho, wo), np.float64)
        cg, og = cin // groups, cout // groups
        for g in range(groups):
            cols = (
                win[:, g * cg : (g + 1) * cg]
                .astype(np.float64)
                .transpose(0, 2, 3, 1, 4, 5)
                .reshape(bsz, ho * wo, cg * kh * kw)
            )
            wg = w64[g * og : (g + 1) * og].reshape(og, cg * kh * kw)
            out[:, g * og : (g + 1) * og] = (
                np.matmul(cols, wg.T).transpose(0, 2, 1).reshape(bsz, og, ho, wo)
            )
    if b is not None:
        b = np.asarray(b)
        if b.shape != (cout,):
            raise ShapeError(f"bias shape {b.shape} != ({cout},)")
        out += b.astype(np.float64).reshape(1, cout, 1, 1)
    return out.astype(DTYPE)


def layer_norm(t, gamma, beta, eps=1e-6):
    """Per-token layer norm over the last axis with affine scale/shift."""
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    t = np.asarray(t)
    # moments accumulate in float64; the per-element normalization stays 32-bit
    mean = t.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = t.var(axis=-1, keepdims=True, dtype=np.float64)
    inv = (1.0 / np.sqrt(var + eps)).astype(DTYPE)
    out = (t.astype(DTYPE) - mean.astype(DTYPE)) * inv
    return (out * _as_f32(gamma) + _as_f32(beta)).astype(DTYPE)


def softmax_rows(m):
    """Row-wise softmax over the last axis, shift-invariant and stable."""
    m64 = np.asarray(m, np.float64)
    m64 = m64 - m64.max(axis=-1, keepdims=True)
    e = np.exp(m64)
    return (e / e.sum(axis=-1, keepdims=True)).astype(DTYPE)


def sigmoid(x):
    x = np.asarray(x)
    if x.dtype == DTYPE:  # elementwise, no accumulation: stay 32-bit
        return expit(x)
    return expit(x.astype(np.float64)).astype(DTYPE)


def gelu(x):
    x = np.asarray(x)
    if x.dtype == DTYPE:
        return (DTYPE(0.5) * x * (DTYPE(1.0) + erf(x * DTYPE(0.7071067811865476)))).astype(DTYPE)
    x64 = x.astype(np.float64)
    return (0.5 * x64 * (1.0 + erf(x64 / np.sqrt(2.0)))).astype(DTYPE)


def relu(x):
    return np.maximum(np.asarray(x, DTYPE), DTYPE(0))


def global_avg_pool(x):
    """(B, C, H, W) -> (B, C) spatial mean."""
    if x.ndim != 4:
        raise ShapeError(f"expected rank-4 map, got rank {x.ndim}")
    return np.asarray(x, np.float64).mean(axis=(2, 3)).astype(DTYPE)


def global_max_pool(x):
    """(B, C, H, W) -> (B, C) spatial max."""
    if x.ndim != 4:
        raise ShapeError(f"expected rank-4 map, got rank {x.ndim}")
    return np.asarray(x).max(axis=(2, 3)).astype(DTYPE)


def linear(t, w, b=None):
    """Token-wise affine map: (..., Cin) @ (Cin, Cout) + b."""
    out = np.matmul(np.asarray(t, np.float64), np.asarray(w, np.float64))
    if b is not None:
        out += np.asarray(b, np.float64)
    return out.astype(DTYPE)


def attention(q, k, v, scale, chunk=2048):
    """Scaled dot-product attention, chunked over queries to bound memory.

    q: (B, Nq, d), k: (B, Nk, d), v: (B, Nk, dv) -> (B, Nq, dv).
    """
    q64 = np.asarray(q, np.float64)
    k64 = np.asarray(k, np.float64)
    v64 = np.asarray(v, np.float64)
    bsz, nq, _ = q64.shape
    out = np.empty((bsz, nq, v64.shape[-1]), np.float64)
    kt = k64.transpose(0, 2, 1)
    for lo in range(0, nq, chunk):
        hi = min(lo + chunk, nq)
        scores = np.matmul(q64[:, lo:hi], kt) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=-1, keepdims=True)
        out[:, lo:hi] = np.matmul(scores, v64)
    return out.astype(DTYPE)


# ---------------------------------------------------------------------------
# parameter store


@dataclass(frozen=True)
class ParamSpec:
    """Declares one named parameter: shape plus initialization kind."""

    name: str
    shape: tuple
    kind: str  # weight | bias | scale

    @property
    def size(self):
        return int(np.prod(self.shape)) if self.shape else 1


class ParamStore:
    """Immutable mapping of parameter name -> float32 array.

    Initialization is seeded per-parameter from (seed, crc32(name)), so the
    values of any given parameter do not depend on declaration order and two
    stores built from the same (specs, seed) are bitwise identical.
    """

    def __init__(self, arrays):
        self._arrays = dict(arrays)
        for a in self._arrays.values():
            a.setflags(write=False)

    def __getitem__(self, name):
        try:
            return self._arrays[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def __contains__(self, name):
        return name in self._arrays

    def __len__(self):
        return len(self._arrays)

    def names(self):
        return sorted(self._arrays)

    def total_size(self):
        return sum(a.size for a in self._arrays.values())


def trunc_normal(rng, shape, std=0.02, bound=2.0):
    """Normal(0, std) resampled until all draws fall inside +-bound*std."""
    out = rng.standard_normal(shape)
    for _ in range(64):
        bad = np.abs(out) > bound
        if not bad.any():
            break
        out[bad] = rng.standard_normal(int(bad.sum()))
    return (out * std).astype(DTYPE)


def init_params(specs, seed):
    """Materialize a :class:`ParamStore` from a list of :class:`ParamSpec`."""
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ConfigError(f"duplicate parameter names: {dup}")
    arrays = {}
    for s in specs:
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(s.name.encode())])
        if s.kind == "weight":
            arrays[s.name] = trunc_normal(rng, s.shape)
        elif s.kind == "bias":
            arrays[s.name] = np.zeros(s.shape, DTYPE)
        elif s.kind == "scale":
            arrays[s.name] = np.ones(s.shape, DTYPE)
        else:
            raise ConfigError(f"unknown parameter kind {s.kind!r} for {s.name!r}")
    return ParamStore(arrays)


def param_count(specs):
    """Total scalar count of a spec list, without allocating anything."""
    return sum(s.size for s in specs)

"""Independent brute-force oracles used by the tests.

These deliberately avoid the library's vectorized code paths: direct loops
and textbook formulas only, so they stay independent of what they check.
"""

import numpy as np


def conv2d_loops(x, w, b=None, stride=1, pad=0, groups=1):
    """Six-loop direct convolution in float64."""
    bsz, cin, h, wid = x.shape
    cout, cin_g, kh, kw = w.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wid + 2 * pad - kw) // stride + 1
    out = np.zeros((bsz, cout, ho, wo))
    cg, og = cin // groups, cout // groups
    for n in range(bsz):
        for o in range(cout):
            g = o // og
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin_g):
                        for ky in range(kh):
                            for kx in range(kw):
                                acc += (
                                    xp[n, g * cg + c, i * stride + ky, j * stride + kx]
                                    * float(w[o, c, ky, kx])
                                )
                    out[n, o, i, j] = acc + (float(b[o]) if b is not None else 0.0)
    return out


def matmul_loops(a, b):
    """Triple-loop matrix product in float64."""
    n, k = a.shape
    k2, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for l in range(k):
                out[i, j] += float(a[i, l]) * float(b[l, j])
    return out


def softmax_rows_direct(m):
    """Exp-normalize evaluated row by row in float64."""
    m = np.asarray(m, np.float64)
    out = np.zeros_like(m)
    for i in range(m.shape[0]):
        e = np.array([np.exp(v) for v in m[i]])
        out[i] = e / e.sum()
    return out


def attention_naive(q, k, v, scale):
    """Full O(N^2) attention without chunking; float64 throughout."""
    q = np.asarray(q, np.float64)
    k = np.asarray(k, np.float64)
    v = np.asarray(v, np.float64)
    out = np.zeros((q.shape[0], q.shape[1], v.shape[2]))
    for n in range(q.shape[0]):
        scores = q[n] @ k[n].T * scale
        for i in range(scores.shape[0]):
            row = scores[i] - scores[i].max()
            e = np.exp(row)
            out[n, i] = (e / e.sum()) @ v[n]
    return out


def layer_norm_two_pass(t, gamma, beta, eps):
    """Two-pass mean/variance normalization in float64."""
    t = np.asarray(t, np.float64)
    out = np.zeros_like(t)
    flat = t.reshape(-1, t.shape[-1])
    res = np.zeros_like(flat)
    for i, row in enumerate(flat):
        mu = row.sum() / len(row)
        var = ((row - mu) ** 2).sum() / len(row)
        res[i] = (row - mu) / np.sqrt(var + eps) * gamma + beta
    return res.reshape(t.shape)


def bin_events_loops(t_us, x, y, p, sensor_size, center_t, delta_t):
    """Per-pixel counting oracle for event binning."""
    h, w = sensor_size
    counts = np.zeros((h, w))
    lo = center_t - delta_t / 2.0
    hi = center_t + delta_t / 2.0
    for i in range(len(t_us)):
        ts = t_us[i] * 1e-6
        if lo <= ts < hi:
            counts[y[i], x[i]] += p[i]
    peak = np.abs(counts).max()
    return counts / peak if peak > 0 else counts


def iou_direct(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter) if inter > 0 else 0.0


def average_precision_staircase(dets, gts, thresh):
    """Independent AP: explicit greedy matching then a literal walk of the
    101 recall points over the precision staircase."""
    n_gt = len(gts)
    if n_gt == 0:
        return 0.0
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    matched = set()
    flags = []
    for i in order:
        d = dets[i]
        best_j, best_v = None, -1.0
        for j, g in enumerate(gts):
            if j in matched or g.image_id != d.image_id:
                continue
            v = iou_direct(d.box, g.box)
            if v >= thresh and v > best_v:
                best_j, best_v = j, v
        if best_j is not None:
            matched.add(best_j)
            flags.append(1)
        else:
            flags.append(0)
    if not flags:
        return 0.0
    precisions, recalls = [], []
    tp = fp = 0
    for f in flags:
        tp += f
        fp += 1 - f
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gt)
    total = 0.0
    for ri in range(101):
        r = ri / 100.0
        best = 0.0
        for pr, rc in zip(precisions, recalls):
            if rc >= r - 1e-12 and pr > best:
                best = pr
        total += best
    return total / 101.0

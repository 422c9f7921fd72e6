"""Hot numeric kernels: numba-jitted with a pure-numpy/python fallback.

The backend is picked once at import time. Numba is used when importable
unless ``STREAMEVAL_PURE_NUMPY=1`` (or any value other than ``0``/empty)
forces the fallback. Both paths implement the exact same comparison logic,
so every discrete decision (greedy matching, threshold tests) agrees
bit-for-bit between backends; only long float accumulations may differ in
the last bits.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("STREAMEVAL_PURE_NUMPY", "0")
FORCE_NUMPY = _flag not in ("", "0")

try:
    if FORCE_NUMPY:
        raise ImportError("pure-numpy backend forced by STREAMEVAL_PURE_NUMPY")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False
    njit = None


def _conv2d_direct_loops(x, w, b, out):
    # Same-padding, stride-1 direct convolution. Shapes:
    # x (n, cin, h, wd), w (cout, cin, k, k), b (cout,), out (n, cout, h, wd).
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    k = w.shape[2]
    pad = k // 2
    for im in range(n):
        for oc in range(cout):
            for oy in range(h):
                for ox in range(wd):
                    acc = b[oc]
                    for ic in range(cin):
                        for ky in range(k):
                            iy = oy + ky - pad
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(k):
                                ix = ox + kx - pad
                                if ix < 0 or ix >= wd:
                                    continue
                                acc += x[im, ic, iy, ix] * w[oc, ic, ky, kx]
                    out[im, oc, oy, ox] = acc


def conv2d_direct_numpy(x, w, b):
    """Fallback direct convolution: accumulate one kernel offset at a time."""
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    k = w.shape[2]
    pad = k // 2
    xp = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    out = np.zeros((n, cout, h, wd), dtype=np.float64)
    for ky in range(k):
        for kx in range(k):
            patch = xp[:, :, ky : ky + h, kx : kx + wd]
            out += np.einsum("nchw,oc->nohw", patch, w[:, :, ky, kx])
    out += b.reshape(1, cout, 1, 1)
    return out


def pairwise_iou_numpy(a, b):
    """IoU matrix between two [x, y, w, h] box arrays; shape (len(a), len(b))."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1 = a[:, None, 0]
    ay1 = a[:, None, 1]
    ax2 = ax1 + a[:, None, 2]
    ay2 = ay1 + a[:, None, 3]
    bx1 = b[None, :, 0]
    by1 = b[None, :, 1]
    bx2 = bx1 + b[None, :, 2]
    by2 = by1 + b[None, :, 3]
    iw = np.maximum(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0)
    ih = np.maximum(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0)
    inter = iw * ih
    union = a[:, None, 2] * a[:, None, 3] + b[None, :, 2] * b[None, :, 3] - inter
    safe = np.where(union > 0.0, union, 1.0)
    return np.where(union > 0.0, inter / safe, 0.0)


def _pairwise_iou_loops(a, b, out):
    na = a.shape[0]
    nb = b.shape[0]
    for i in range(na):
        ax1 = a[i, 0]
        ay1 = a[i, 1]
        ax2 = ax1 + a[i, 2]
        ay2 = ay1 + a[i, 3]
        for j in range(nb):
            bx1 = b[j, 0]
            by1 = b[j, 1]
            bx2 = bx1 + b[j, 2]
            by2 = by1 + b[j, 3]
            iw = max(min(ax2, bx2) - max(ax1, bx1), 0.0)
            ih = max(min(ay2, by2) - max(ay1, by1), 0.0)
            inter = iw * ih
            union = a[i, 2] * a[i, 3] + b[j, 2] * b[j, 3] - inter
            out[i, j] = inter / union if union > 0.0 else 0.0


def _greedy_match_loops(ious, thresholds, gt_ignore, det_match, gt_match):
    # Reference-evaluator matching: detections arrive sorted by score,
    # ground truths sorted unignored-first. A detection takes the best-IoU
    # unmatched gt at or above the threshold; an equal IoU later in scan
    # order replaces the current candidate; once a real (unignored) match
    # is held, the ignored section is not entered.
    nthr = thresholds.shape[0]
    ndet = ious.shape[0]
    ngt = ious.shape[1]
    for t in range(nthr):
        for d in range(ndet):
            best = -1
            best_iou = thresholds[t]
            for g in range(ngt):
                if gt_match[t, g] >= 0:
                    continue
                if best >= 0 and gt_ignore[best] == 0 and gt_ignore[g] == 1:
                    break
                if ious[d, g] < best_iou:
                    continue
                best_iou = ious[d, g]
                best = g
            if best >= 0:
                det_match[t, d] = best
                gt_match[t, best] = d


if HAS_NUMBA:
    _conv2d_direct_compiled = njit(cache=True)(_conv2d_direct_loops)
    _pairwise_iou_compiled = njit(cache=True)(_pairwise_iou_loops)
    _greedy_match_compiled = njit(cache=True)(_greedy_match_loops)

    def conv2d_direct_kernel(x, w, b):
        out = np.empty((x.shape[0], w.shape[0], x.shape[2], x.shape[3]), dtype=np.float64)
        _conv2d_direct_compiled(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64),
            out,
        )
        return out

    def pairwise_iou(a, b):
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(-1, 4))
        b = np.ascontiguousarray(np.asarray(b, dtype=np.float64).reshape(-1, 4))
        out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
        _pairwise_iou_compiled(a, b, out)
        return out

    def greedy_match(ious, thresholds, gt_ignore):
        nthr = thresholds.shape[0]
        det_match = np.full((nthr, ious.shape[0]), -1, dtype=np.int64)
        gt_match = np.full((nthr, ious.shape[1]), -1, dtype=np.int64)
        _greedy_match_compiled(
            np.ascontiguousarray(ious),
            np.ascontiguousarray(thresholds),
            np.ascontiguousarray(gt_ignore),
            det_match,
            gt_match,
        )
        return det_match, gt_match

else:
    conv2d_direct_kernel = conv2d_direct_numpy

    def pairwise_iou(a, b):
        return pairwise_iou_numpy(a, b)

    def greedy_match(ious, thresholds, gt_ignore):
        nthr = thresholds.shape[0]
        det_match = np.full((nthr, ious.shape[0]), -1, dtype=np.int64)
        gt_match = np.full((nthr, ious.shape[1]), -1, dtype=np.int64)
        _greedy_match_loops(ious, thresholds, gt_ignore, det_match, gt_match)
        return det_match, gt_match


def active_backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"

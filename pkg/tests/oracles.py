"""Independent reference implementations used to check the library.

Everything here is written the slow, obvious way (explicit loops, manual
padding, pairwise comparisons) so it shares no code path with the package.
"""

import math

import numpy as np


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def naive_conv1d(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None, padding: str) -> np.ndarray:
    """Cross-correlation of a 1-D signal with an (F, k) kernel bank."""
    length = len(x)
    n_feat, k = w.shape
    if padding == "same":
        left, right = (k - 1) // 2, k // 2
    else:
        left = right = 0
    out_len = length + left + right - k + 1
    out = np.zeros((out_len, n_feat))
    for t in range(out_len):
        for f in range(n_feat):
            acc = 0.0
            for j in range(k):
                src = t + j - left
                if 0 <= src < length:
                    acc += x[src] * w[f, j]
            out[t, f] = acc + (bias[f] if bias is not None else 0.0)
    return out


def naive_conv2d(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation over (H, W) with features along the last axis."""
    h, w, d = x.shape
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            for c in range(d):
                acc = 0.0
                for a in range(kh):
                    for b in range(kw):
                        si, sj = i + a - ph, j + b - pw
                        if 0 <= si < h and 0 <= sj < w:
                            acc += kernel[a, b] * x[si, sj, c]
                out[i, j, c] = acc
    return out


def pairwise_roc_auc(scores, labels) -> float:
    """O(N^2) Mann-Whitney: concordant pairs plus half the ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    concordant = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                concordant += 1.0
            elif sp == sn:
                concordant += 0.5
    return concordant / (len(pos) * len(neg))


def sweep_pr_auc(scores, labels) -> float:
    """Average precision by enumerating every distinct score as a threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    thresholds = sorted(set(scores.tolist()), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for theta in thresholds:
        predicted = scores >= theta
        tp = int(np.sum(predicted & (labels == 1)))
        fp = int(np.sum(predicted & (labels == 0)))
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def plain_bce(probs, labels) -> float:
    """Unweighted mean binary cross-entropy via math.log."""
    total = 0.0
    for p, y in zip(probs, labels):
        total += y * math.log(p) + (1 - y) * math.log(1 - p)
    return -total / len(probs)

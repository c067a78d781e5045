"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_numba``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _columns(x, kernel_size, stride, pad):
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    lout = (xp.shape[2] - kernel_size) // stride + 1
    win = sliding_window_view(xp, kernel_size, axis=2)[:, :, : (lout - 1) * stride + 1 : stride]
    # (B, lout, C, K) -> rows of the im2col matrix
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3))
    return cols.reshape(x.shape[0] * lout, -1), lout


def conv1d_forward(x, w, b, stride, pad):
    """x: (B, C, L), w: (F, C, K), b: (F,) -> (B, F, Lout)."""
    n = x.shape[0]
    f, c, k = w.shape
    cols, lout = _columns(x, k, stride, pad)
    out = cols @ w.reshape(f, c * k).T
    out += b
    return np.ascontiguousarray(out.reshape(n, lout, f).transpose(0, 2, 1))


def conv1d_backward(x, w, gout, stride, pad):
    """Gradients of conv1d_forward w.r.t. (x, w, b) given upstream ``gout``."""
    n, c, length = x.shape
    f, _, k = w.shape
    cols, lout = _columns(x, k, stride, pad)
    g = np.ascontiguousarray(gout.transpose(0, 2, 1)).reshape(n * lout, f)
    dw = (g.T @ cols).reshape(f, c, k)
    db = gout.sum(axis=(0, 2))
    dcols = (g @ w.reshape(f, c * k)).reshape(n, lout, c, k)
    dxp = np.zeros((n, c, length + 2 * pad), dtype=x.dtype)
    span = (lout - 1) * stride + 1
    for j in range(k):
        dxp[:, :, j : j + span : stride] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, pad : pad + length], dw, db


def smo_solve(x, gamma, upper, tol, max_iter):
    """Pairwise coordinate descent for min 1/2 a'Ka, 0 <= a <= upper, sum(a) = 1.

    Kernel rows are computed on demand (RBF). Returns (alpha, grad, iterations)
    where grad = K @ alpha.
    """
    n = x.shape[0]
    sq = np.einsum("ij,ij->i", x, x)

    def row(i):
        d2 = sq + sq[i] - 2.0 * (x @ x[i])
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-gamma * d2)

    alpha = np.zeros(n)
    full = int(np.floor(1.0 / upper + 1e-12))
    full = min(full, n)
    alpha[:full] = upper
    if full < n:
        alpha[full] = 1.0 - full * upper
    grad = np.zeros(n)
    for i in np.flatnonzero(alpha > 0.0):
        grad += alpha[i] * row(i)

    it = 0
    while it < max_iter:
        up = alpha < upper
        down = alpha > 0.0
        gi = np.where(up, grad, np.inf)
        gj = np.where(down, grad, -np.inf)
        i = int(np.argmin(gi))
        j = int(np.argmax(gj))
        if gj[j] - gi[i] < tol:
            break
        ki = row(i)
        kj = row(j)
        eta = ki[i] + kj[j] - 2.0 * ki[j]
        if eta <= 0.0:
            eta = 1e-12
        delta = (grad[j] - grad[i]) / eta
        delta = min(delta, upper - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        grad += delta * (ki - kj)
        it += 1
    return alpha, grad, it


def semi_hard_select(dist, labels, margin):
    """Return (T, 3) int64 triplets; see ``contrastive.mine_semi_hard``."""
    n = dist.shape[0]
    same = labels[:, None] == labels[None, :]
    anchors, positives = np.nonzero(same & ~np.eye(n, dtype=bool))
    if anchors.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    d_ap = dist[anchors, positives][:, None]
    d_an = dist[anchors]
    neg = ~same[anchors]
    keep = neg.any(axis=1)
    anchors, positives, d_ap, d_an, neg = anchors[keep], positives[keep], d_ap[keep], d_an[keep], neg[keep]
    if anchors.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    semi = neg & (d_an > d_ap) & (d_an < d_ap + margin)
    masked_semi = np.where(semi, d_an, np.inf)
    masked_all = np.where(neg, d_an, np.inf)
    # argmin returns the first (lowest) index on ties
    pick = np.where(semi.any(axis=1), np.argmin(masked_semi, axis=1), np.argmin(masked_all, axis=1))
    return np.stack([anchors, positives, pick], axis=1).astype(np.int64)


def first_median_exceed(values, window, threshold):
    """Index of the last element of the first window whose median > threshold, or -1."""
    if values.shape[0] < window:
        return -1
    med = np.median(sliding_window_view(values, window), axis=1)
    hit = np.flatnonzero(med > threshold)
    return int(hit[0]) + window - 1 if hit.size else -1

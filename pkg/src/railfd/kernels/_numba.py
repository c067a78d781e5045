"""Numba-compiled twins of the kernels in ``_numpy``.

Reductions run in a fixed order so results are reproducible run to run;
they are not bit-identical to the numpy path (different summation order).
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _im2col(x, k, stride, pad, lout):
    n, c, length = x.shape
    cols = np.zeros((n * lout, c * k), dtype=x.dtype)
    for b in range(n):
        for t in range(lout):
            r = b * lout + t
            start = t * stride - pad
            for ci in range(c):
                for j in range(k):
                    p = start + j
                    if p >= 0 and p < length:
                        cols[r, ci * k + j] = x[b, ci, p]
    return cols


@njit(cache=True)
def _conv1d_forward(x, w, b, stride, pad):
    n, c, length = x.shape
    f, _, k = w.shape
    lout = (length + 2 * pad - k) // stride + 1
    cols = _im2col(x, k, stride, pad, lout)
    wt = np.ascontiguousarray(w.reshape(f, c * k).T)
    prod = np.dot(cols, wt)
    out = np.empty((n, f, lout), dtype=x.dtype)
    for bi in range(n):
        for t in range(lout):
            r = bi * lout + t
            for fi in range(f):
                out[bi, fi, t] = prod[r, fi] + b[fi]
    return out


@njit(cache=True)
def _conv1d_backward(x, w, gout, stride, pad):
    n, c, length = x.shape
    f, _, k = w.shape
    lout = gout.shape[2]
    cols = _im2col(x, k, stride, pad, lout)
    g = np.empty((n * lout, f), dtype=x.dtype)
    db = np.zeros(f, dtype=x.dtype)
    for bi in range(n):
        for fi in range(f):
            for t in range(lout):
                v = gout[bi, fi, t]
                g[bi * lout + t, fi] = v
                db[fi] += v
    gt = np.ascontiguousarray(g.T)
    dw = np.dot(gt, cols).reshape(f, c, k)
    dcols = np.dot(g, np.ascontiguousarray(w.reshape(f, c * k)))
    dx = np.zeros((n, c, length), dtype=x.dtype)
    for bi in range(n):
        for t in range(lout):
            r = bi * lout + t
            start = t * stride - pad
            for ci in range(c):
                for j in range(k):
                    p = start + j
                    if p >= 0 and p < length:
                        dx[bi, ci, p] += dcols[r, ci * k + j]
    return dx, dw, db


def conv1d_forward(x, w, b, stride, pad):
    return _conv1d_forward(np.ascontiguousarray(x), np.ascontiguousarray(w), b, stride, pad)


def conv1d_backward(x, w, gout, stride, pad):
    return _conv1d_backward(
        np.ascontiguousarray(x), np.ascontiguousarray(w), np.ascontiguousarray(gout), stride, pad
    )


@njit(cache=True)
def _rbf_row(x, sq, i, gamma, out):
    n, d = x.shape
    for r in range(n):
        dot = 0.0
        for c in range(d):
            dot += x[r, c] * x[i, c]
        d2 = sq[r] + sq[i] - 2.0 * dot
        if d2 < 0.0:
            d2 = 0.0
        out[r] = np.exp(-gamma * d2)


@njit(cache=True)
def _smo_solve(x, gamma, upper, tol, max_iter):
    n, d = x.shape
    sq = np.empty(n)
    for r in range(n):
        s = 0.0
        for c in range(d):
            s += x[r, c] * x[r, c]
        sq[r] = s
    alpha = np.zeros(n)
    full = int(np.floor(1.0 / upper + 1e-12))
    if full > n:
        full = n
    for r in range(full):
        alpha[r] = upper
    if full < n:
        alpha[full] = 1.0 - full * upper
    grad = np.zeros(n)
    ki = np.empty(n)
    kj = np.empty(n)
    for r in range(n):
        if alpha[r] > 0.0:
            _rbf_row(x, sq, r, gamma, ki)
            for q in range(n):
                grad[q] += alpha[r] * ki[q]

    it = 0
    while it < max_iter:
        i = -1
        j = -1
        gmin = np.inf
        gmax = -np.inf
        for r in range(n):
            if alpha[r] < upper and grad[r] < gmin:
                gmin = grad[r]
                i = r
            if alpha[r] > 0.0 and grad[r] > gmax:
                gmax = grad[r]
                j = r
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        _rbf_row(x, sq, i, gamma, ki)
        _rbf_row(x, sq, j, gamma, kj)
        eta = ki[i] + kj[j] - 2.0 * ki[j]
        if eta <= 0.0:
            eta = 1e-12
        delta = (grad[j] - grad[i]) / eta
        if delta > upper - alpha[i]:
            delta = upper - alpha[i]
        if delta > alpha[j]:
            delta = alpha[j]
        alpha[i] += delta
        alpha[j] -= delta
        for q in range(n):
            grad[q] += delta * (ki[q] - kj[q])
        it += 1
    return alpha, grad, it


def smo_solve(x, gamma, upper, tol, max_iter):
    return _smo_solve(np.ascontiguousarray(x, dtype=np.float64), float(gamma), float(upper), float(tol), int(max_iter))


@njit(cache=True)
def _semi_hard_select(dist, labels, margin):
    n = dist.shape[0]
    out = np.empty((n * n, 3), dtype=np.int64)
    t = 0
    for a in range(n):
        for p in range(n):
            if p == a or labels[p] != labels[a]:
                continue
            d_ap = dist[a, p]
            best_semi = -1
            best_semi_d = np.inf
            best_any = -1
            best_any_d = np.inf
            for q in range(n):
                if labels[q] == labels[a]:
                    continue
                d_an = dist[a, q]
                if d_an < best_any_d:
                    best_any_d = d_an
                    best_any = q
                if d_an > d_ap and d_an < d_ap + margin and d_an < best_semi_d:
                    best_semi_d = d_an
                    best_semi = q
            if best_any < 0:
                continue
            out[t, 0] = a
            out[t, 1] = p
            out[t, 2] = best_semi if best_semi >= 0 else best_any
            t += 1
    return out[:t].copy()


def semi_hard_select(dist, labels, margin):
    return _semi_hard_select(np.ascontiguousarray(dist, dtype=np.float64), np.ascontiguousarray(labels, dtype=np.int64), float(margin))


@njit(cache=True)
def _first_median_exceed(values, window, threshold):
    n = values.shape[0]
    buf = np.empty(window)
    for end in range(window - 1, n):
        for q in range(window):
            v = values[end - window + 1 + q]
            r = q
            while r > 0 and buf[r - 1] > v:
                buf[r] = buf[r - 1]
                r -= 1
            buf[r] = v
        h = window // 2
        med = buf[h] if window % 2 == 1 else 0.5 * (buf[h - 1] + buf[h])
        if med > threshold:
            return end
    return -1


def first_median_exceed(values, window, threshold):
    return int(_first_median_exceed(np.ascontiguousarray(values, dtype=np.float64), int(window), float(threshold)))

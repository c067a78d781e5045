"""Independent reference implementations used as test oracles.

Nothing here imports the code under test; each routine is the plainest
possible restatement of the math.
"""

import numpy as np


def conv1d_loops(x, w, b, stride, pad):
    """Direct zero-padded cross-correlation, one output element at a time."""
    n, c, length = x.shape
    f, _, k = w.shape
    lout = (length + 2 * pad - k) // stride + 1
    out = np.zeros((n, f, lout))
    for s in range(n):
        for o in range(f):
            for t in range(lout):
                acc = b[o]
                for ch in range(c):
                    for j in range(k):
                        pos = t * stride + j - pad
                        if 0 <= pos < length:
                            acc += w[o, ch, j] * x[s, ch, pos]
                out[s, o, t] = acc
    return out


def forward_straight(layers, params, x):
    """Re-run a network from raw layer tuples (kind, attrs) and weight arrays."""
    for (kind, attrs), p in zip(layers, params):
        if kind == "shift":
            x = x - attrs["offset"]
        elif kind == "conv1d":
            x = conv1d_loops(x, p[0], p[1], attrs["stride"], attrs["kernel_size"] // 2)
        elif kind == "dense":
            x = x.reshape(x.shape[0], -1) @ p[0].T + p[1]
        elif kind == "leaky-relu":
            x = np.where(x > 0, x, attrs["slope"] * x)
        elif kind == "relu":
            x = np.maximum(x, 0)
        elif kind == "softmax":
            e = np.exp(x - x.max(axis=1, keepdims=True))
            x = e / e.sum(axis=1, keepdims=True)
    return x


def semi_hard_exhaustive(features, labels, margin):
    """Enumerate every (anchor, positive) pair and every negative."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    n = len(labels)
    out = []
    for a in range(n):
        for p in range(n):
            if a == p or labels[a] != labels[p]:
                continue
            d_ap = np.sqrt(np.sum((f[a] - f[p]) ** 2))
            best, best_d = None, np.inf
            close, close_d = None, np.inf
            for m in range(n):
                if labels[m] == labels[a]:
                    continue
                d_an = np.sqrt(np.sum((f[a] - f[m]) ** 2))
                if d_ap < d_an < d_ap + margin and d_an < best_d:
                    best, best_d = m, d_an
                if d_an < close_d:
                    close, close_d = m, d_an
            if close is None:
                continue
            out.append((a, p, best if best is not None else close))
    return out


def _project_capped_simplex(v, upper):
    """Exact Euclidean projection onto {0 <= a <= upper, sum a = 1}.

    sum(clip(v - t, 0, upper)) is piecewise linear and non-increasing in t
    with breakpoints at v and v - upper; find the piece hitting 1 and solve.
    """
    bps = np.unique(np.concatenate([v, v - upper]))
    vals = np.clip(v[None, :] - bps[:, None], 0.0, upper).sum(axis=1)
    k = int(np.searchsorted(-vals, -1.0, side="left"))
    if k == 0:
        return np.clip(v - bps[0], 0.0, upper)
    t0, t1 = bps[k - 1], bps[k]
    m0, m1 = vals[k - 1], vals[k]
    t = t0 + (m0 - 1.0) * (t1 - t0) / (m0 - m1) if m0 != m1 else t0
    return np.clip(v - t, 0.0, upper)


def ocsvm_dual_pg(x, gamma, nu, iters=1_000_000, tol=1e-9):
    """Dense nu-OCSVM dual by accelerated projected gradient; returns (alpha, rho).

    Stops when the projected-gradient fixed-point residual drops below ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    k = np.exp(-gamma * d2)
    upper = 1.0 / (nu * n)
    step = 1.0 / np.linalg.eigvalsh(k)[-1]
    a = _project_capped_simplex(np.full(n, 1.0 / n), upper)
    y, t = a.copy(), 1.0
    obj_a = 0.5 * a @ k @ a
    for _ in range(iters):
        nxt = _project_capped_simplex(y - step * (k @ y), upper)
        obj_n = 0.5 * nxt @ k @ nxt
        if obj_n > obj_a and t > 1.0:  # restart momentum, then take a plain step
            y, t = a, 1.0
            nxt = _project_capped_simplex(a - step * (k @ a), upper)
            obj_n = 0.5 * nxt @ k @ nxt
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = nxt + (t - 1) / t_next * (nxt - a)
        a, t, obj_a = nxt, t_next, obj_n
        resid = np.max(np.abs(a - _project_capped_simplex(a - step * (k @ a), upper)))
        if resid < tol:
            break
    g = k @ a
    eps = 1e-9 * upper
    free = (a > eps) & (a < upper - eps)
    if free.any():
        rho = g[free].mean()
    else:
        lo = g[a >= upper - eps].max() if (a >= upper - eps).any() else g.min()
        hi = g[a <= eps].min() if (a <= eps).any() else g.max()
        rho = 0.5 * (lo + hi)
    return a, rho


def ocsvm_decision(x_train, alpha, rho, gamma, x):
    d2 = ((np.asarray(x)[:, None, :] - np.asarray(x_train)[None, :, :]) ** 2).sum(-1)
    return np.exp(-gamma * d2) @ alpha - rho

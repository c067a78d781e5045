"""nu-one-class SVM with an RBF kernel, solved in the dual by SMO.

Dual::

    min_a  1/2 a' K a   s.t.  0 <= a_i <= 1 / (nu n),  sum_i a_i = 1

Decision ``g(x) = sum_i a_i k(x_i, x) - rho`` is positive inside the healthy
region. The health index is ``-g(x) / s`` where ``s`` is the 99th percentile
of ``|g|`` over the training set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .checkpoint import pack_arrays, unpack_arrays
from .errors import DataError, DimensionError, FormatError

log = logging.getLogger(__name__)

SECTION_TAG = "OCSV"
MEDIAN_SAMPLE = 2000


@dataclass(frozen=True)
class OcSvmModel:
    support_vectors: np.ndarray
    alpha: np.ndarray
    rho: float
    gamma: float
    scale: float
    nu: float
    n_train: int
    iterations: int = 0
    kkt_violation: float = 0.0
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def to_section(self) -> bytes:
        scalars = np.array([self.rho, self.gamma, self.scale, self.nu, self.kkt_violation], dtype=np.float64)
        ints = np.array([self.n_train, self.iterations, int(self.degenerate)], dtype=np.int64)
        return pack_arrays({"support_vectors": self.support_vectors, "alpha": self.alpha, "scalars": scalars, "ints": ints})

    @classmethod
    def from_section(cls, payload: bytes) -> OcSvmModel:
        arr = unpack_arrays(payload)
        try:
            rho, gamma, scale, nu, kkt = (float(v) for v in arr["scalars"])
            n_train, iters, degen = (int(v) for v in arr["ints"])
            return cls(arr["support_vectors"], arr["alpha"], rho, gamma, scale, nu, n_train, iters, kkt, bool(degen))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad {SECTION_TAG} section: {exc}") from exc


@dataclass(frozen=True)
class HealthIndex:
    value: float
    timestamp: int | None = None


def rbf_kernel(a, b, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


def median_heuristic(x) -> float:
    """``1 / median`` of squared pairwise distances (distinct pairs).

    Large sets are thinned to an evenly spaced subset of ``MEDIAN_SAMPLE``
    points. Returns 1.0 when the median distance is zero.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] > MEDIAN_SAMPLE:
        x = x[np.linspace(0, x.shape[0] - 1, MEDIAN_SAMPLE).astype(int)]
    sq = (x * x).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    med = float(np.median(d2[np.triu_indices(x.shape[0], k=1)]))
    return 1.0 / med if med > 0 else 1.0


def _rho_from_gradient(alpha, grad, upper):
    eps = 1e-12 * max(upper, 1.0)
    free = (alpha > eps) & (alpha < upper - eps)
    if free.any():
        return float(grad[free].mean())
    at_upper = alpha >= upper - eps
    at_zero = ~at_upper
    hi = grad[at_zero].min() if at_zero.any() else grad.max()
    lo = grad[at_upper].max() if at_upper.any() else grad.min()
    return float(0.5 * (hi + lo))


def fit_ocsvm(features, nu: float = 0.05, gamma: float | str = "median", tol: float = 1e-4, max_iter: int = 10_000_000) -> OcSvmModel:
    """Fit on healthy-only features."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError(f"need >= 2 feature vectors, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("features contain non-finite values")
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    n = x.shape[0]
    g = median_heuristic(x) if isinstance(gamma, str) else float(gamma)
    if not g > 0:
        raise ValueError("gamma must be positive")
    upper = 1.0 / (nu * n)
    if np.all(x == x[0]):
        log.warning("all training features identical; boundary has zero width")
        return OcSvmModel(x[:1].copy(), np.array([1.0]), 1.0, g, 1.0, nu, n, 0, 0.0, True)
    alpha, grad, iters = kernels.smo_solve(x, g, upper, tol, max_iter)
    if iters >= max_iter:
        log.warning("SMO hit max_iter=%d before reaching tol=%g", max_iter, tol)
    rho = _rho_from_gradient(alpha, grad, upper)
    up = alpha < upper
    down = alpha > 0
    viol = float(grad[down].max() - grad[up].min()) if up.any() and down.any() else 0.0
    sv = alpha > 0
    decision = grad - rho
    scale = float(np.percentile(np.abs(decision), 99))
    if not scale > 0:
        scale = 1.0
    return OcSvmModel(x[sv].copy(), alpha[sv].copy(), rho, g, scale, nu, n, int(iters), max(viol, 0.0))


def decision_function(model: OcSvmModel, features) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[None]
    if f.shape[1] != model.dim:
        raise DimensionError(f"model expects {model.dim}-dim features, got {f.shape[1]}")
    out = np.empty(f.shape[0])
    for s in range(0, f.shape[0], 4096):
        out[s : s + 4096] = rbf_kernel(f[s : s + 4096], model.support_vectors, model.gamma) @ model.alpha - model.rho
    return out


def health_values(model: OcSvmModel, features) -> np.ndarray:
    return -decision_function(model, features) / model.scale


def health_index(model: OcSvmModel, feature, timestamp: int | None = None) -> HealthIndex:
    f = np.asarray(feature, dtype=np.float64)
    if f.ndim != 1:
        raise DimensionError("health_index takes a single feature vector")
    return HealthIndex(float(health_values(model, f)[0]), timestamp)

"""Hierarchical extreme learning machine baseline.

Each autoencoder layer draws fixed random input weights, then learns sparse
output weights ``beta`` by L1-regularised least squares (ISTA); the encoded
representation ``act(Z @ beta.T)`` feeds the next layer. A final random
expansion with a ridge-regression output targets the constant 1 on healthy
data; the health index is ``|1 - output| / s``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import pack_arrays, unpack_arrays
from .errors import ConfigError, DataError, DimensionError, FormatError, NumericError

SECTION_TAG = "HELM"


@dataclass(frozen=True)
class HelmConfig:
    layer_sizes: tuple[int, ...] = (30, 30, 30, 30, 30)
    occ_units: int = 100
    ridge_c: float = 1e-5
    l1_lambda: float = 1e-3
    slope: float = 0.1
    ista_max_iter: int = 500
    ista_tol: float = 1e-7

    def validate(self) -> None:
        if not self.layer_sizes or min(self.layer_sizes) < 1 or self.occ_units < 1:
            raise ConfigError("HELM layer sizes must be >= 1")
        if self.ridge_c < 0 or self.l1_lambda < 0:
            raise ConfigError("regularisation constants must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d


@dataclass
class HelmModel:
    config: HelmConfig
    input_mean: np.ndarray
    weights: list[np.ndarray]  # random, (units, d_in)
    biases: list[np.ndarray]
    betas: list[np.ndarray]  # learned, (units, d_in)
    occ_weights: np.ndarray
    occ_bias: np.ndarray
    occ_output: np.ndarray  # ridge solution, (occ_units,)
    scale: float

    def to_section(self) -> bytes:
        arrays = {"input_mean": self.input_mean, "occ_weights": self.occ_weights, "occ_bias": self.occ_bias, "occ_output": self.occ_output}
        for i, (w, b, beta) in enumerate(zip(self.weights, self.biases, self.betas)):
            arrays[f"w{i}"], arrays[f"b{i}"], arrays[f"beta{i}"] = w, b, beta
        c = self.config
        arrays["scalars"] = np.array([self.scale, c.ridge_c, c.l1_lambda, c.slope, c.ista_tol], dtype=np.float64)
        arrays["ints"] = np.array([c.occ_units, c.ista_max_iter, *c.layer_sizes], dtype=np.int64)
        return pack_arrays(arrays)

    @classmethod
    def from_section(cls, payload: bytes) -> HelmModel:
        a = unpack_arrays(payload)
        try:
            scale, ridge_c, lam, slope, tol = (float(v) for v in a["scalars"])
            occ_units, max_iter, *sizes = (int(v) for v in a["ints"])
            cfg = HelmConfig(tuple(sizes), occ_units, ridge_c, lam, slope, max_iter, tol)
            n = len(sizes)
            return cls(cfg, a["input_mean"], [a[f"w{i}"] for i in range(n)], [a[f"b{i}"] for i in range(n)], [a[f"beta{i}"] for i in range(n)], a["occ_weights"], a["occ_bias"], a["occ_output"], scale)
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad {SECTION_TAG} section: {exc}") from exc


def soft_threshold(v, lam: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def ista_l1_solve(h, x, lam: float, max_iter: int = 500, tol: float = 1e-7, history: list | None = None) -> np.ndarray:
    """Minimise ``1/2 ||H beta - X||^2 + lam ||beta||_1`` by ISTA with step ``1 / ||H'H||_2``.

    ``X`` may be a vector or a matrix (one column per target). Objective values
    are appended to ``history`` when given; they never increase.
    """
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or x.shape[0] != h.shape[0]:
        raise DimensionError(f"incompatible shapes H {h.shape}, X {x.shape}")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(x))):
        raise NumericError("non-finite input to ista_l1_solve")
    gram = h.T @ h
    hx = h.T @ x
    xx = float(np.sum(x * x))
    lip = float(np.linalg.eigvalsh(gram)[-1])
    beta = np.zeros(hx.shape)
    if lip <= 0:
        return beta

    def objective(b):
        return 0.5 * (float(np.sum(b * (gram @ b))) - 2.0 * float(np.sum(b * hx)) + xx) + lam * float(np.abs(b).sum())

    prev = objective(beta)
    if history is not None:
        history.append(prev)
    for _ in range(max_iter):
        beta = soft_threshold(beta - (gram @ beta - hx) / lip, lam / lip)
        cur = objective(beta)
        if not np.isfinite(cur):
            raise NumericError("ISTA objective became non-finite")
        if history is not None:
            history.append(cur)
        if abs(prev - cur) <= tol * max(abs(prev), 1e-300):
            break
        prev = cur
    return beta


def ridge_solve(h, target, c: float) -> np.ndarray:
    """``argmin ||H w - t||^2 + c ||w||^2 = (H'H + c I)^-1 H' t``."""
    h = np.asarray(h, dtype=np.float64)
    return np.linalg.solve(h.T @ h + c * np.eye(h.shape[1]), h.T @ np.asarray(target, dtype=np.float64))


def _act(z, slope):
    return np.where(z > 0, z, slope * z)


def _random_layer(rng, units, d_in):
    w = rng.uniform(-1.0, 1.0, size=(units, d_in))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return w, rng.uniform(-1.0, 1.0, size=units)


def _encode(model: HelmModel, signals) -> np.ndarray:
    z = np.asarray(signals, dtype=np.float64)
    if z.ndim == 1:
        z = z[None]
    if z.shape[1] != model.input_mean.size:
        raise DimensionError(f"HELM expects signals of length {model.input_mean.size}, got {z.shape[1]}")
    z = z - model.input_mean
    for beta in model.betas:
        z = _act(z @ beta.T, model.config.slope)
    return _act(z @ model.occ_weights.T + model.occ_bias, model.config.slope)


def occ_output(model: HelmModel, signals) -> np.ndarray:
    return _encode(model, signals) @ model.occ_output


def fit_helm(signals, config: HelmConfig | None = None, seed: int = 0, ista_histories: list | None = None) -> HelmModel:
    """Fit the stacked autoencoder layers and the one-class output layer.

    When ``ista_histories`` is given, one objective trace per layer is appended.
    """
    cfg = config or HelmConfig()
    cfg.validate()
    z = np.asarray(signals, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise DataError(f"HELM needs a non-empty (N, L) training set, got shape {z.shape}")
    rng = np.random.default_rng(seed)
    mean = z.mean(axis=0)
    z = z - mean
    weights, biases, betas = [], [], []
    for units in cfg.layer_sizes:
        w, b = _random_layer(rng, units, z.shape[1])
        hidden = _act(z @ w.T + b, cfg.slope)
        trace = [] if ista_histories is not None else None
        beta = ista_l1_solve(hidden, z, cfg.l1_lambda, cfg.ista_max_iter, cfg.ista_tol, history=trace)
        if trace is not None:
            ista_histories.append(trace)
        weights.append(w)
        biases.append(b)
        betas.append(beta)
        z = _act(z @ beta.T, cfg.slope)
    w_occ, b_occ = _random_layer(rng, cfg.occ_units, z.shape[1])
    hidden = _act(z @ w_occ.T + b_occ, cfg.slope)
    w_out = ridge_solve(hidden, np.ones(hidden.shape[0]), cfg.ridge_c)
    resid = np.abs(1.0 - hidden @ w_out)
    scale = float(np.percentile(resid, 99))
    if not scale > 0:
        scale = 1.0
    return HelmModel(cfg, mean, weights, biases, betas, w_occ, b_occ, w_out, scale)


def helm_health_values(model: HelmModel, signals) -> np.ndarray:
    return np.abs(1.0 - occ_output(model, signals)) / model.scale


def helm_health(model: HelmModel, signal, timestamp: int | None = None):
    from .occ import HealthIndex

    return HealthIndex(float(helm_health_values(model, signal)[0]), timestamp)

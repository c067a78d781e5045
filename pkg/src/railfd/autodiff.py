"""Minimal layer-level reverse-mode differentiation.

Supports exactly the layer kinds the encoders need: ``shift`` (subtract a
fixed constant), ``conv1d``, ``dense``, ``leaky-relu``, ``relu`` and
``softmax``. A :class:`Network` holds frozen
layer specs plus parameter tensors; :func:`forward` returns the output
together with a per-call :class:`Tape`, so concurrent forwards on a shared
network never touch each other's state.

Training math runs in float32. :func:`grad_check` casts a copy to float64
and compares against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError, StateError

KINDS = ("shift", "conv1d", "dense", "leaky-relu", "relu", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel_size: int = 0
    stride: int = 1
    in_dim: int = 0
    out_dim: int = 0
    slope: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d" and min(self.filters, self.kernel_size, self.stride) < 1:
            raise ValueError("conv1d filters, kernel_size and stride must be >= 1")
        if self.kind == "dense" and min(self.in_dim, self.out_dim) < 1:
            raise ValueError("dense in_dim and out_dim must be >= 1")
        if self.kind == "leaky-relu" and not 0.0 < self.slope < 1.0:
            raise ValueError("leaky-relu slope must lie in (0, 1)")

    @property
    def padding(self) -> int:
        return self.kernel_size // 2


def shift(offset: float) -> LayerSpec:
    """Parameter-free ``x - offset``; used to centre load-normalised signals."""
    return LayerSpec("shift", offset=float(offset))


def conv1d(filters: int, kernel_size: int, stride: int = 1) -> LayerSpec:
    return LayerSpec("conv1d", filters=filters, kernel_size=kernel_size, stride=stride)


def dense(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec("dense", in_dim=in_dim, out_dim=out_dim)


def leaky_relu(slope: float = 0.1) -> LayerSpec:
    return LayerSpec("leaky-relu", slope=slope)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def softmax() -> LayerSpec:
    return LayerSpec("softmax")


def conv_output_length(length: int, kernel_size: int, stride: int, pad: int | None = None) -> int:
    if pad is None:
        pad = kernel_size // 2
    return (length + 2 * pad - kernel_size) // stride + 1


class Tensor:
    """Named parameter buffer with an optional gradient of the same shape."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, data, name: str = "", grad=None):
        data = np.ascontiguousarray(data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float32)
        if data.ndim == 0 or 0 in data.shape:
            raise DimensionError(f"tensor {name!r} must have a non-empty shape, got {data.shape}")
        self.name = name
        self.data = data
        self.grad = None
        if grad is not None:
            self.set_grad(grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def set_grad(self, grad) -> None:
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            raise DimensionError(f"gradient for {self.name!r} has shape {grad.shape}, expected {self.data.shape}")
        self.grad = grad

    def __repr__(self):
        return f"Tensor({self.name!r}, shape={self.shape}, dtype={self.data.dtype})"


@dataclass
class Network:
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]
    params: list[list[Tensor]]
    shapes: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1] if self.shapes else self.input_shape

    @property
    def dtype(self):
        for group in self.params:
            for t in group:
                return t.data.dtype
        return np.dtype(np.float32)

    def parameters(self) -> list[Tensor]:
        return [t for group in self.params for t in group]

    def copy(self, dtype=None) -> Network:
        params = [
            [Tensor(t.data.astype(dtype or t.data.dtype, copy=True), t.name) for t in group]
            for group in self.params
        ]
        return Network(self.layers, self.input_shape, params, list(self.shapes))

    def astype(self, dtype) -> Network:
        return self.copy(dtype=dtype)

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.parameters())


def _infer_shapes(layers, input_shape):
    shapes = []
    shape = tuple(input_shape)
    for idx, spec in enumerate(layers):
        if spec.kind == "conv1d":
            if len(shape) != 2:
                raise DimensionError(f"layer {idx} (conv1d) expects (channels, length) input, got {shape}")
            lout = conv_output_length(shape[1], spec.kernel_size, spec.stride)
            if lout < 1:
                raise DimensionError(f"layer {idx} (conv1d) output length {lout} < 1 for input {shape}")
            shape = (spec.filters, lout)
        elif spec.kind == "dense":
            flat = int(np.prod(shape))
            if flat != spec.in_dim:
                raise DimensionError(f"layer {idx} (dense) expects {spec.in_dim} inputs, got {flat} from shape {shape}")
            shape = (spec.out_dim,)
        elif spec.kind == "softmax" and len(shape) != 1:
            raise DimensionError(f"layer {idx} (softmax) expects a flat input, got {shape}")
        shapes.append(shape)
    return shapes


def build_network(layers, input_shape, seed: int, dtype=np.float32) -> Network:
    """Create a network with Glorot-uniform weights and zero biases."""
    layers = tuple(layers)
    input_shape = tuple(int(s) for s in input_shape)
    shapes = _infer_shapes(layers, input_shape)
    rng = np.random.default_rng(seed)
    params: list[list[Tensor]] = []
    shape = input_shape
    for idx, spec in enumerate(layers):
        if spec.kind == "conv1d":
            c = shape[0]
            fan_in, fan_out = c * spec.kernel_size, spec.filters * spec.kernel_size
            w_shape, b_len = (spec.filters, c, spec.kernel_size), spec.filters
        elif spec.kind == "dense":
            fan_in, fan_out = spec.in_dim, spec.out_dim
            w_shape, b_len = (spec.out_dim, spec.in_dim), spec.out_dim
        else:
            params.append([])
            shape = shapes[idx]
            continue
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=w_shape).astype(dtype)
        params.append([
            Tensor(w, f"{idx}.{spec.kind}.weight"),
            Tensor(np.zeros(b_len, dtype=dtype), f"{idx}.{spec.kind}.bias"),
        ])
        shape = shapes[idx]
    return Network(layers, input_shape, params, shapes)


def stack(first: Network, second: Network) -> Network:
    """Compose two networks into one (parameters are shared, not copied)."""
    if tuple(first.output_shape) != tuple(second.input_shape):
        if int(np.prod(first.output_shape)) != int(np.prod(second.input_shape)):
            raise DimensionError(f"cannot stack {first.output_shape} onto {second.input_shape}")
    layers = first.layers + second.layers
    shapes = _infer_shapes(layers, first.input_shape)
    return Network(layers, first.input_shape, first.params + second.params, shapes)


class Tape:
    """Activations recorded by one forward call."""

    def __init__(self):
        self.inputs: list[np.ndarray] = []
        self.outputs: list[np.ndarray] = []
        self.batched = True
        self.owner: int | None = None

    @property
    def filled(self) -> bool:
        return self.owner is not None


def _layer_forward(spec, params, x):
    if spec.kind == "shift":
        return x - x.dtype.type(spec.offset)
    if spec.kind == "conv1d":
        w, b = params
        return kernels.conv1d_forward(x, w.data, b.data, spec.stride, spec.padding)
    if spec.kind == "dense":
        w, b = params
        return x.reshape(x.shape[0], -1) @ w.data.T + b.data
    if spec.kind == "leaky-relu":
        return np.where(x > 0, x, x * x.dtype.type(spec.slope))
    if spec.kind == "relu":
        return np.maximum(x, 0)
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_backward(spec, params, x, y, g):
    """Return (dx, [dparams])."""
    if spec.kind == "shift":
        return g, []
    if spec.kind == "conv1d":
        w, _ = params
        dx, dw, db = kernels.conv1d_backward(x, w.data, g, spec.stride, spec.padding)
        return dx, [dw, db]
    if spec.kind == "dense":
        w, _ = params
        x2 = x.reshape(x.shape[0], -1)
        return (g @ w.data).reshape(x.shape), [g.T @ x2, g.sum(axis=0)]
    if spec.kind == "leaky-relu":
        return np.where(x > 0, g, g * g.dtype.type(spec.slope)), []
    if spec.kind == "relu":
        return np.where(x > 0, g, 0).astype(g.dtype), []
    return y * (g - (g * y).sum(axis=-1, keepdims=True)), []


def forward(network: Network, x) -> tuple[np.ndarray, Tape]:
    """Run the network; returns ``(output, tape)``.

    ``x`` is either a batch ``(B, *input_shape)`` or one sample ``input_shape``.
    """
    x = np.asarray(x, dtype=network.dtype)
    tape = Tape()
    if x.shape == network.input_shape:
        x = x[None]
        tape.batched = False
    if x.shape[1:] != network.input_shape:
        raise DimensionError(f"layer 0 ({network.layers[0].kind}) expects input {network.input_shape}, got {x.shape[1:]}")
    for spec, params in zip(network.layers, network.params):
        tape.inputs.append(x)
        x = _layer_forward(spec, params, x)
        tape.outputs.append(x)
    tape.owner = id(network)
    return (x if tape.batched else x[0]), tape


def predict(network: Network, x) -> np.ndarray:
    return forward(network, x)[0]


@dataclass
class Gradients:
    params: list[np.ndarray]
    input: np.ndarray


def backward(network: Network, tape: Tape, upstream) -> Gradients:
    """Back-propagate ``upstream`` (d loss / d output) through the recorded tape.

    Fills ``Tensor.grad`` on every parameter and returns the same arrays.
    """
    if not tape.filled:
        raise StateError("backward called before forward: tape is empty")
    if tape.owner != id(network):
        raise StateError("tape was recorded on a different network")
    g = np.asarray(upstream, dtype=network.dtype)
    if not tape.batched:
        g = g[None]
    if g.shape != tape.outputs[-1].shape:
        raise DimensionError(f"upstream gradient shape {g.shape[1:]} != output shape {tape.outputs[-1].shape[1:]}")
    per_layer: list[list[np.ndarray]] = [[] for _ in network.layers]
    for idx in range(len(network.layers) - 1, -1, -1):
        spec = network.layers[idx]
        g, grads = _layer_backward(spec, network.params[idx], tape.inputs[idx], tape.outputs[idx], g)
        per_layer[idx] = grads
    flat = []
    for group, grads in zip(network.params, per_layer):
        for t, gr in zip(group, grads):
            t.set_grad(gr)
            flat.append(t.grad)
    return Gradients(flat, g if tape.batched else g[0])


def softmax_probs(logits) -> np.ndarray:
    """Numerically stable softmax along the last axis (log-sum-exp form)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return np.exp(z - np.log(np.exp(z).sum(axis=-1, keepdims=True)))


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    loss = float(np.mean(lse - z[np.arange(n), labels]))
    grad = np.exp(z - lse[:, None])
    grad[np.arange(n), labels] -= 1.0
    return loss, (grad / n).astype(logits.dtype)


# -- optimizers ---------------------------------------------------------------


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def make_optimizer(kind: str, parameters, learning_rate: float) -> OptimizerState:
    if kind not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {kind!r}")
    if not learning_rate > 0:
        raise ValueError("learning rate must be positive")
    state = OptimizerState(kind, float(learning_rate))
    if kind == "adam":
        state.m = [np.zeros_like(p.data) for p in parameters]
        state.v = [np.zeros_like(p.data) for p in parameters]
    return state


def step(state: OptimizerState, parameters, gradients=None) -> None:
    """Apply one in-place update. ``gradients`` defaults to each ``Tensor.grad``."""
    parameters = list(parameters)
    if gradients is None:
        gradients = [p.grad for p in parameters]
    if len(gradients) != len(parameters):
        raise DimensionError(f"{len(gradients)} gradients for {len(parameters)} parameters")
    for p, g in zip(parameters, gradients):
        if g is None or g.shape != p.data.shape:
            raise DimensionError(f"gradient for {p.name!r} missing or misshaped")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
    state.step_count += 1
    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(parameters, gradients):
            p.data -= p.data.dtype.type(lr) * g
        return
    t = state.step_count
    corr1 = 1.0 - state.beta1**t
    corr2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(parameters, gradients, state.m, state.v):
        dt = p.data.dtype.type
        m *= dt(state.beta1)
        m += dt(1.0 - state.beta1) * g
        v *= dt(state.beta2)
        v += dt(1.0 - state.beta2) * g * g
        p.data -= dt(lr) * (m / dt(corr1)) / (np.sqrt(v / dt(corr2)) + dt(state.eps))


# -- gradient check -----------------------------------------------------------


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    input_error: float
    tolerance: float
    kink_steps: int = 0  # coordinates whose step was shrunk to avoid a kink

    @property
    def max_error(self) -> float:
        return max([*self.errors.values(), self.input_error])

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    @property
    def failing(self) -> list[str]:
        return [name for name, e in self.errors.items() if not e < self.tolerance]


def _rel_error(a, n) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-8)
    return float(np.linalg.norm(a - n)) / scale


def _kink_pattern(network: Network, tape: Tape) -> bytes:
    masks = [np.packbits(x > 0) for spec, x in zip(network.layers, tape.inputs) if spec.kind in ("relu", "leaky-relu")]
    return b"".join(m.tobytes() for m in masks)


def grad_check(network: Network, x, h: float = 1e-3, tolerance: float = 1e-4, seed: int = 0, backward_fn=None) -> GradCheckReport:
    """Compare analytic gradients with central differences in float64.

    The scalar objective is ``sum(R * forward(x))`` for a fixed random ``R``,
    so every output component contributes. Errors are per parameter tensor:
    ``||analytic - numeric|| / max(||analytic||, ||numeric||)``.

    A central difference straddling a (leaky) ReLU kink measures the average
    of two slopes, not the derivative. When a +-h probe flips any activation
    sign, the step is divided by 10 (down to ``h * 1e-4``) until it no longer
    does; ``kink_steps`` counts such coordinates.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    backward_fn = backward_fn or backward
    net = network.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    out, tape = forward(net, x)
    base = _kink_pattern(net, tape)
    r = np.random.default_rng(seed).standard_normal(out.shape)
    grads = backward_fn(net, tape, r)
    kinks = 0

    def objective(inp):
        y, t = forward(net, inp)
        return float(np.sum(y * r)), _kink_pattern(net, t)

    def central(flat, e, inp):
        nonlocal kinks
        orig = flat[e]
        step_h = h
        while True:
            flat[e] = orig + step_h
            up, pu = objective(inp)
            flat[e] = orig - step_h
            down, pd = objective(inp)
            flat[e] = orig
            if (pu == base and pd == base) or step_h <= h * 1e-4:
                break
            step_h /= 10.0
        kinks += step_h < h
        return (up - down) / (2 * step_h)

    errors = {}
    for t, analytic in zip(net.parameters(), grads.params):
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for e in range(flat.size):
            nflat[e] = central(flat, e, x)
        errors[t.name] = _rel_error(analytic, numeric)

    numeric_x = np.zeros_like(x)
    xf = x.reshape(-1)
    nxf = numeric_x.reshape(-1)
    for e in range(xf.size):
        nxf[e] = central(xf, e, x)
    return GradCheckReport(errors, _rel_error(grads.input, numeric_x), tolerance, kinks)

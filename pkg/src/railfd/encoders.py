"""Network definitions for the wheel task and the supervised toy task."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError, NumericError


@dataclass(frozen=True)
class WheelEncoderConfig:
    conv_layers: int = 5
    filters: int = 10
    kernel_size: int = 16
    stride: int = 2
    activation_slope: float = 0.1
    feature_dim: int = 4
    input_length: int = 1024
    input_offset: float = 1.0  # load-normalised signals have mean 1

    def validate(self) -> None:
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be >= 2")
        if min(self.conv_layers, self.filters, self.kernel_size, self.stride, self.input_length) < 1:
            raise ConfigError("encoder dimensions must be >= 1")
        if not 0 < self.activation_slope < 1:
            raise ConfigError("activation_slope must lie in (0, 1)")

    def conv_output_length(self) -> int:
        length = self.input_length
        for _ in range(self.conv_layers):
            length = ad.conv_output_length(length, self.kernel_size, self.stride)
        return length

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SupervisedHeadConfig:
    hidden_dims: tuple[int, ...] = (64, 32, 16, 8)
    triplet_dim: int = 8
    categories: int = 3

    def validate(self) -> None:
        if not self.hidden_dims or self.hidden_dims[-1] != self.triplet_dim:
            raise ConfigError("triplet_dim must equal the last hidden dimension")
        if list(self.hidden_dims) != sorted(self.hidden_dims, reverse=True):
            raise ConfigError("hidden_dims must be descending")
        if self.categories < 2:
            raise ConfigError("categories must be >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


def _conv_stack(cfg: WheelEncoderConfig) -> list[ad.LayerSpec]:
    layers = [ad.shift(cfg.input_offset)] if cfg.input_offset else []
    for _ in range(cfg.conv_layers):
        layers += [ad.conv1d(cfg.filters, cfg.kernel_size, cfg.stride), ad.leaky_relu(cfg.activation_slope)]
    return layers


def build_wheel_encoder(config: WheelEncoderConfig | None = None, seed: int = 0) -> ad.Network:
    """Input centring, five strided conv layers with leaky activations, then
    one dense layer to ``feature_dim``."""
    cfg = config or WheelEncoderConfig()
    cfg.validate()
    flat = cfg.filters * cfg.conv_output_length()
    layers = _conv_stack(cfg) + [ad.dense(flat, cfg.feature_dim)]
    return ad.build_network(layers, (1, cfg.input_length), seed)


def build_supervised_encoder(backbone: WheelEncoderConfig, head: SupervisedHeadConfig, seed: int = 0) -> ad.Network:
    """Conv backbone plus the dense stack ending in the (linear) triplet layer."""
    backbone.validate()
    head.validate()
    dims = [backbone.filters * backbone.conv_output_length(), *head.hidden_dims]
    layers = _conv_stack(backbone)
    for i in range(len(dims) - 1):
        if i:
            layers.append(ad.relu())
        layers.append(ad.dense(dims[i], dims[i + 1]))
    return ad.build_network(layers, (1, backbone.input_length), seed)


def build_classifier_head(head: SupervisedHeadConfig, seed: int = 0) -> ad.Network:
    """ReLU on the triplet layer followed by the category logits."""
    head.validate()
    return ad.build_network([ad.relu(), ad.dense(head.triplet_dim, head.categories)], (head.triplet_dim,), seed)


def _check_signals(network: ad.Network, signals) -> np.ndarray:
    x = np.asarray(signals, dtype=np.float32)
    length = network.input_shape[-1]
    if x.ndim == 1:
        x = x[None]
    if x.ndim == 3 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 2 or x.shape[1] != length:
        raise DimensionError(f"encoder expects signals of length {length}, got shape {np.shape(signals)}")
    if not np.all(np.isfinite(x)):
        raise NumericError("signal contains non-finite values")
    return x


def encode(network: ad.Network, signal) -> np.ndarray:
    """Feature vector for one prepared signal."""
    x = _check_signals(network, signal)
    if x.shape[0] != 1:
        raise DimensionError("encode takes one signal; use encode_batch for many")
    return ad.predict(network, x[:, None, :])[0]


def encode_batch(network: ad.Network, signals, batch_size: int = 512) -> np.ndarray:
    x = _check_signals(network, signals)
    out = np.empty((x.shape[0], *network.output_shape), dtype=network.dtype)
    for s in range(0, x.shape[0], batch_size):
        out[s : s + batch_size] = ad.predict(network, x[s : s + batch_size, None, :])
    return out


def classify(head: ad.Network, feature) -> np.ndarray:
    """Category distribution(s) for one feature vector or a batch."""
    f = np.asarray(feature, dtype=head.dtype)
    if f.shape[-1:] != head.input_shape:
        raise DimensionError(f"head expects features of dimension {head.input_shape[0]}, got {f.shape[-1:]}")
    return ad.softmax_probs(ad.predict(head, f))

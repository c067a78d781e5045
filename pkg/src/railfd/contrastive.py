"""Triplet loss, semi-hard mining, pair labelling and the training loops."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import ConfigError, DataError, DimensionError

log = logging.getLogger(__name__)

DAY = 86400


class Triplet(NamedTuple):
    anchor: int
    positive: int
    negative: int


@dataclass(frozen=True)
class PairLabel:
    """Opaque group identity; only equality matters to the miner."""

    group: tuple
    before_first_visit: bool = field(default=False, compare=False)


@dataclass
class TrainSpec:
    margin: float = 1.0
    epochs: int = 50
    batch_size: int = 48
    optimizer: str = "sgd"
    learning_rate: float = 0.001
    seed: int = 0
    samples_per_group: int | None = None
    steps_per_epoch: int | None = None

    def validate(self) -> None:
        if not self.margin > 0:
            raise ConfigError("margin must be positive")
        if self.epochs < 0 or self.batch_size < 2:
            raise ConfigError("need epochs >= 0 and batch_size >= 2")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    active_fraction: float
    batches: int


def triplet_loss(fa, fp, fn, margin: float = 1.0):
    """``max(0, |fa - fp| - |fa - fn| + margin)`` and its (sub)gradients.

    Returns ``(loss, (d_fa, d_fp, d_fn))``. A zero distance contributes a zero
    subgradient, and so does the hinge point itself.
    """
    fa, fp, fn = (np.asarray(v, dtype=np.float64) for v in (fa, fp, fn))
    if not fa.shape == fp.shape == fn.shape or fa.ndim != 1:
        raise DimensionError(f"feature shapes differ: {fa.shape}, {fp.shape}, {fn.shape}")
    if not margin > 0:
        raise ValueError("margin must be positive")
    u, w = fa - fp, fa - fn
    d_ap, d_an = float(np.linalg.norm(u)), float(np.linalg.norm(w))
    value = d_ap - d_an + margin
    if value <= 0:
        z = np.zeros_like(fa)
        return 0.0, (z, z.copy(), z.copy())
    gu = u / d_ap if d_ap > 0 else np.zeros_like(u)
    gw = w / d_an if d_an > 0 else np.zeros_like(w)
    return value, (gu - gw, -gu, gw)


def pairwise_distances(features) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    diff = f[:, None, :] - f[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def group_codes(labels) -> np.ndarray:
    """Map arbitrary hashable labels to int codes in order of first appearance."""
    table: dict = {}
    return np.array([table.setdefault(lab, len(table)) for lab in labels], dtype=np.int64)


def _mine_array(features, codes, margin) -> np.ndarray:
    return kernels.semi_hard_select(pairwise_distances(features), codes, margin)


def mine_semi_hard(features, labels, margin: float = 1.0) -> list[Triplet]:
    """Pick one negative per ordered anchor-positive pair.

    Prefers the closest negative with ``d_ap < d_an < d_ap + margin``; when
    none exists, falls back to the closest negative overall. Ties go to the
    lowest index. A single-group batch yields no triplets.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    if len(labels) != f.shape[0]:
        raise DimensionError(f"{len(labels)} labels for {f.shape[0]} features")
    codes = group_codes(labels)
    return [Triplet(int(a), int(p), int(n)) for a, p, n in _mine_array(f, codes, margin)]


def batch_triplet_loss(features, triplets: np.ndarray, margin: float):
    """Mean triplet loss over ``triplets`` plus d(mean)/d(features)."""
    f = np.asarray(features, dtype=np.float64)
    a, p, n = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    u = f[a] - f[p]
    w = f[a] - f[n]
    d_ap = np.sqrt((u * u).sum(axis=1))
    d_an = np.sqrt((w * w).sum(axis=1))
    losses = d_ap - d_an + margin
    active = losses > 0
    grad = np.zeros_like(f)
    if active.any():
        with np.errstate(invalid="ignore", divide="ignore"):
            gu = np.where((d_ap > 0)[:, None], u / d_ap[:, None], 0.0) * active[:, None]
            gw = np.where((d_an > 0)[:, None], w / d_an[:, None], 0.0) * active[:, None]
        np.add.at(grad, a, gu - gw)
        np.add.at(grad, p, -gu)
        np.add.at(grad, n, gw)
    t = len(triplets)
    return float(np.maximum(losses, 0).sum() / t), grad / t, float(active.mean())


def temporal_pair_labels(timeline, bucket_days: float = 30.0) -> list[PairLabel]:
    """Group id = (wheel, workshop interval, rolling bucket of days since the visit).

    Measurements before the first recorded visit are put in interval 0 and
    flagged via ``before_first_visit``.
    """
    ts = [m.timestamp for m in timeline.measurements]
    return temporal_labels(timeline.wheel_id, ts, timeline.visits, bucket_days)


def temporal_labels(wheel_id, timestamps, visits, bucket_days: float = 30.0) -> list[PairLabel]:
    """:func:`temporal_pair_labels` on bare timestamps and visit times (seconds)."""
    if not bucket_days > 0:
        raise ConfigError("bucket_days must be positive")
    visits = sorted(int(v) for v in visits)
    if not visits:
        raise DataError(f"wheel {wheel_id}: no workshop visits recorded")
    ts = [int(t) for t in timestamps]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise DataError(f"wheel {wheel_id}: measurements are not time-sorted")
    labels = []
    width = bucket_days * DAY
    for t in ts:
        idx = int(np.searchsorted(visits, t, side="right")) - 1
        flagged = idx < 0
        idx = max(idx, 0)
        bucket = math.floor((t - visits[idx]) / width)
        labels.append(PairLabel((int(wheel_id), idx, bucket), flagged))
    if any(lab.before_first_visit for lab in labels):
        log.warning("wheel %s: measurements before the first workshop visit", wheel_id)
    return labels


def _group_batches(codes, batch_size, rng, samples_per_group, steps):
    members = {}
    for i, c in enumerate(codes):
        members.setdefault(int(c), []).append(i)
    multi = sorted(g for g, idx in members.items() if len(idx) >= 2)
    n_groups = len(members)
    if not multi or n_groups < 2:
        return
    k = samples_per_group or max(2, batch_size // min(len(multi), max(1, batch_size // 4)))
    p = max(1, min(len(multi), batch_size // k))
    arrays = {g: np.asarray(members[g]) for g in multi}
    for _ in range(steps):
        chosen = rng.choice(len(multi), size=p, replace=False)
        parts = []
        for gi in np.sort(chosen):
            idx = arrays[multi[gi]]
            parts.append(rng.choice(idx, size=min(k, idx.size), replace=False))
        batch = np.concatenate(parts)
        if p == 1 or len(set(codes[batch].tolist())) < 2:
            # a lone group still needs negatives: borrow from other groups
            others = np.flatnonzero(codes != codes[batch[0]])
            extra = rng.choice(others, size=min(batch_size - batch.size or 1, others.size), replace=False)
            batch = np.concatenate([batch, extra])
        yield batch


def train_contrastive(encoder: ad.Network, signals, groups, spec: TrainSpec, callback=None):
    """Triplet training with semi-hard mining on grouped batches.

    ``groups`` is one hashable label per signal (class labels for the
    supervised task, :func:`temporal_pair_labels` for the wheel task).
    Returns a trained copy of ``encoder`` and the per-epoch history.
    """
    spec.validate()
    x = np.asarray(signals, dtype=np.float32)
    if x.shape[0] == 0:
        raise DataError("empty dataset")
    if x.ndim == 2:
        x = x[:, None, :]
    codes = group_codes(groups)
    if len(codes) != x.shape[0]:
        raise DimensionError(f"{len(codes)} labels for {x.shape[0]} signals")
    if len(set(codes.tolist())) < 2 or np.bincount(codes).max() < 2:
        raise ConfigError("need >= 2 groups and a group with >= 2 members to form triplets")
    net = encoder.copy()
    history: list[EpochRecord] = []
    if spec.epochs == 0:
        return net, history
    params = net.parameters()
    opt = ad.make_optimizer(spec.optimizer, params, spec.learning_rate)
    rng = np.random.default_rng(spec.seed)
    steps = spec.steps_per_epoch or max(1, math.ceil(x.shape[0] / spec.batch_size))
    total_triplets = 0
    for epoch in range(spec.epochs):
        losses, actives, n_batches = [], [], 0
        for batch in _group_batches(codes, spec.batch_size, rng, spec.samples_per_group, steps):
            feats, tape = ad.forward(net, x[batch])
            trip = _mine_array(feats, codes[batch], spec.margin)
            if trip.shape[0] == 0:
                continue
            total_triplets += trip.shape[0]
            loss, grad, active = batch_triplet_loss(feats, trip, spec.margin)
            ad.backward(net, tape, grad.astype(np.float32))
            ad.step(opt, params)
            losses.append(loss)
            actives.append(active)
            n_batches += 1
        if n_batches:
            history.append(EpochRecord(epoch, float(np.mean(losses)), float(np.mean(actives)), n_batches))
            log.info("epoch %d: loss %.4f active %.3f", epoch, history[-1].mean_loss, history[-1].active_fraction)
            if callback is not None:
                callback(history[-1])
    if total_triplets == 0:
        raise ConfigError("no valid triplet in the entire dataset")
    return net, history


def _check_class_labels(labels, categories):
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= categories):
        raise DataError(f"labels must lie in [0, {categories}), got range [{y.min()}, {y.max()}]")
    if np.unique(y).size < 2:
        raise DataError("cross-entropy training needs at least two categories present")
    return y


def _fit_cross_entropy(net, x, y, spec, trainable):
    opt = ad.make_optimizer(spec.optimizer, trainable, spec.learning_rate)
    rng = np.random.default_rng(spec.seed)
    n = x.shape[0]
    history = []
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, spec.batch_size):
            idx = order[s : s + spec.batch_size]
            logits, tape = ad.forward(net, x[idx])
            loss, grad = ad.softmax_cross_entropy(logits, y[idx])
            ad.backward(net, tape, grad)
            ad.step(opt, trainable)
            losses.append(loss)
        acc = float(np.mean(np.argmax(ad.predict(net, x), axis=1) == y))
        history.append(EpochRecord(epoch, float(np.mean(losses)), acc, len(losses)))
    return history


def train_supervised_classifier(encoder: ad.Network, head: ad.Network, signals, labels, spec: TrainSpec):
    """Second step: freeze the encoder, train the head with cross-entropy.

    Returns ``(trained_head, history)``; ``EpochRecord.active_fraction`` holds
    training accuracy here.
    """
    spec.validate()
    y = _check_class_labels(labels, head.output_shape[0])
    x = np.asarray(signals, dtype=np.float32)
    if x.ndim == 2:
        x = x[:, None, :]
    feats = np.concatenate([ad.predict(encoder, x[s : s + 512]) for s in range(0, x.shape[0], 512)])
    trained = head.copy()
    history = _fit_cross_entropy(trained, feats, y, spec, trained.parameters())
    return trained, history


def train_cross_entropy(encoder: ad.Network, head: ad.Network, signals, labels, spec: TrainSpec):
    """Comparison model: same architecture trained end to end with cross-entropy only."""
    spec.validate()
    y = _check_class_labels(labels, head.output_shape[0])
    x = np.asarray(signals, dtype=np.float32)
    if x.ndim == 2:
        x = x[:, None, :]
    enc, hd = encoder.copy(), head.copy()
    full = ad.stack(enc, hd)
    history = _fit_cross_entropy(full, x, y, spec, full.parameters())
    return enc, hd, history

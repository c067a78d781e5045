"""Seeded 3-category 1-D dataset with a confounding nuisance factor.

Categories mirror the sleeper task: 0 healthy, 1 crack (narrow notch),
2 spalling (broad bump). Every sample is also tagged with one of three
"scanners", each adding its own oscillating texture. In the training split
the scanner agrees with the category most of the time, so the texture is a
shortcut; the test split rotates that association, so a model that relies
on the scanner texture loses accuracy there.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

CATEGORIES = ("healthy", "crack", "spalling")
SCANNER_CYCLES = (3.0, 7.0, 13.0)


@dataclass(frozen=True)
class ToyConfig:
    length: int = 256
    train_per_category: int = 1000
    test_per_category: int = 100
    noise: float = 0.05
    texture_amplitude: float = 0.3
    defect_amplitude: float = 0.4
    confounding: float = 0.8  # P(scanner agrees with the category-linked scanner)
    test_shift: int = 1  # test split links category k to scanner k + shift

    def validate(self) -> None:
        if self.length < 32:
            raise ConfigError("toy signal length must be >= 32")
        if min(self.train_per_category, self.test_per_category) < 1:
            raise ConfigError("need at least one sample per category in each split")
        if not 0.0 <= self.confounding <= 1.0:
            raise ConfigError("confounding must lie in [0, 1]")
        if self.noise < 0 or self.texture_amplitude < 0 or self.defect_amplitude <= 0:
            raise ConfigError("amplitudes must be non-negative (defect amplitude positive)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ToySplit:
    signals: np.ndarray  # (n, length) float32
    labels: np.ndarray  # (n,) int64
    scanners: np.ndarray  # (n,) int64


def _scanner_for(labels, shift, confounding, rng):
    linked = (labels + shift) % len(SCANNER_CYCLES)
    other = (linked + rng.integers(1, len(SCANNER_CYCLES), labels.size)) % len(SCANNER_CYCLES)
    return np.where(rng.random(labels.size) < confounding, linked, other)


def _render(labels, scanners, cfg: ToyConfig, rng) -> np.ndarray:
    n, length = labels.size, cfg.length
    t = np.arange(length) / length
    cycles = np.asarray(SCANNER_CYCLES)[scanners]
    phase = rng.uniform(0.0, 2 * np.pi, n)
    x = 1.0 + cfg.texture_amplitude * np.sin(2 * np.pi * cycles[:, None] * t + phase[:, None])
    centre = rng.uniform(0.1, 0.9, n)
    amp = cfg.defect_amplitude * rng.uniform(0.6, 1.0, n)
    d = (t[None, :] - centre[:, None]) * length
    notch = -np.exp(-0.5 * (d / 2.0) ** 2)
    bump = np.exp(-0.5 * (d / 12.0) ** 2)
    x += np.where((labels == 1)[:, None], amp[:, None] * notch, 0.0)
    x += np.where((labels == 2)[:, None], amp[:, None] * bump, 0.0)
    x += cfg.noise * rng.standard_normal((n, length))
    return x.astype(np.float32)


def make_split(cfg: ToyConfig, per_category: int, shift: int, rng) -> ToySplit:
    labels = np.repeat(np.arange(len(CATEGORIES)), per_category)
    labels = labels[rng.permutation(labels.size)]
    scanners = _scanner_for(labels, shift, cfg.confounding, rng)
    return ToySplit(_render(labels, scanners, cfg, rng), labels.astype(np.int64), scanners.astype(np.int64))


def make_toyset(config: ToyConfig | None = None, seed: int = 0) -> tuple[ToySplit, ToySplit]:
    """Return ``(train, test)``; the test split uses the shifted scanner link."""
    cfg = config or ToyConfig()
    cfg.validate()
    rng_train = np.random.default_rng([seed, 1])
    rng_test = np.random.default_rng([seed, 2])
    train = make_split(cfg, cfg.train_per_category, 0, rng_train)
    test = make_split(cfg, cfg.test_per_category, cfg.test_shift, rng_test)
    return train, test

"""Experiment configuration: a strict JSON file mapped onto dataclasses.

Unknown keys anywhere in the file are errors, so a misspelt threshold name
fails loudly instead of silently falling back to a default.

Top-level keys::

    task            "wheel-unsupervised" | "supervised-toy"
    seed            int (required unless given on the command line)
    dataset         path to a dataset directory/manifest, or null to simulate
    output_dir      run directory (``--out`` overrides)
    detectors       subset of contrastive-ocsvm, helm, dyncoeff, ensemble
    thresholds      {detector: float}
    window          detection window (5)
    bucket_days     temporal grouping width in days (30)
    fleet           experiment_fleet arguments and FleetConfig fields
    encoder         WheelEncoderConfig fields
    head            SupervisedHeadConfig fields (supervised task)
    train           TrainSpec fields except ``seed``
    ocsvm           {"nu", "gamma", "tol"}
    helm            HelmConfig fields
    toy             ToyConfig fields (the backbone takes ``toy.length`` inputs)
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .contrastive import TrainSpec
from .detection import DEFAULT_THRESHOLDS, DEFAULT_WINDOW
from .encoders import SupervisedHeadConfig, WheelEncoderConfig
from .errors import ConfigError
from .helm import HelmConfig
from .toyset import ToyConfig
from .wheelsim import FleetConfig

TASKS = ("wheel-unsupervised", "supervised-toy")
DETECTORS = ("contrastive-ocsvm", "helm", "dyncoeff", "ensemble")
ENSEMBLE_MEMBERS = ("contrastive-ocsvm", "helm")
DEFAULT_SEED = 7

FLEET_EXTRA = {"n_train": 16, "n_healthy_test": 10, "n_shelling": 10, "n_crack": 10}
FLEET_FIELDS = {f.name for f in dataclasses.fields(FleetConfig)} - {"faults", "n_wheels", "train_wheels"}


@dataclass(frozen=True)
class OcSvmSettings:
    nu: float = 0.05
    gamma: float | str = "median"
    tol: float = 1e-4

    def validate(self) -> None:
        if not 0 < self.nu <= 1:
            raise ConfigError("ocsvm.nu must lie in (0, 1]")
        if isinstance(self.gamma, str) and self.gamma != "median":
            raise ConfigError("ocsvm.gamma must be a positive number or \"median\"")
        if not isinstance(self.gamma, str) and not self.gamma > 0:
            raise ConfigError("ocsvm.gamma must be positive")
        if not self.tol > 0:
            raise ConfigError("ocsvm.tol must be positive")


@dataclass
class ExperimentConfig:
    task: str = "wheel-unsupervised"
    seed: int | None = DEFAULT_SEED
    dataset: str | None = None
    output_dir: str = "runs/default"
    detectors: tuple[str, ...] = DETECTORS
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    window: int = DEFAULT_WINDOW
    bucket_days: float = 30.0
    fleet: dict = field(default_factory=dict)
    encoder: WheelEncoderConfig = field(default_factory=WheelEncoderConfig)
    head: SupervisedHeadConfig = field(default_factory=SupervisedHeadConfig)
    train: TrainSpec = field(default_factory=lambda: TrainSpec(optimizer="adam"))
    ocsvm: OcSvmSettings = field(default_factory=OcSvmSettings)
    helm: HelmConfig = field(default_factory=HelmConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.seed is None:
            raise ConfigError("seed is mandatory (config key `seed` or --seed)")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        unknown = [d for d in self.detectors if d not in DETECTORS]
        if unknown:
            raise ConfigError(f"unknown detector(s) {unknown}; choose from {DETECTORS}")
        if not self.detectors:
            raise ConfigError("select at least one detector")
        if "ensemble" in self.detectors:
            missing = [m for m in ENSEMBLE_MEMBERS if m not in self.detectors]
            if missing:
                raise ConfigError(f"ensemble needs both members selected; missing {missing}")
        bad = [k for k in self.thresholds if k not in DETECTORS or k == "ensemble"]
        if bad:
            raise ConfigError(f"unknown threshold key(s) {bad}")
        if self.window < 1 or not self.bucket_days > 0:
            raise ConfigError("window must be >= 1 and bucket_days > 0")
        bad = sorted(set(self.fleet) - FLEET_FIELDS - set(FLEET_EXTRA))
        if bad:
            raise ConfigError(f"unknown fleet key(s) {bad}")
        if self.dataset is not None and not Path(self.dataset).exists():
            raise ConfigError(f"dataset path {self.dataset} does not exist")
        self.encoder.validate()
        self.head.validate()
        self.train.validate()
        self.ocsvm.validate()
        self.helm.validate()
        self.toy.validate()

    def threshold(self, detector: str) -> float:
        return float(self.thresholds.get(detector, DEFAULT_THRESHOLDS[detector]))

    def train_spec(self) -> TrainSpec:
        return dataclasses.replace(self.train, seed=int(self.seed))

    def fleet_args(self) -> tuple[dict, dict]:
        """Split ``fleet`` into experiment_fleet counts and FleetConfig overrides."""
        counts = {k: int(self.fleet.get(k, v)) for k, v in FLEET_EXTRA.items()}
        overrides = {k: v for k, v in self.fleet.items() if k not in FLEET_EXTRA}
        return counts, overrides

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "dataset": self.dataset,
            "output_dir": self.output_dir,
            "detectors": list(self.detectors),
            "thresholds": dict(sorted(self.thresholds.items())),
            "window": self.window,
            "bucket_days": self.bucket_days,
            "fleet": dict(sorted(self.fleet.items())),
            "encoder": self.encoder.to_dict(),
            "head": self.head.to_dict(),
            "train": {k: v for k, v in dataclasses.asdict(self.train).items() if k != "seed"},
            "ocsvm": dataclasses.asdict(self.ocsvm),
            "helm": self.helm.to_dict(),
            "toy": self.toy.to_dict(),
        }


def _section(cls, data, name, tuple_fields=(), exclude=()):
    if not isinstance(data, dict):
        raise ConfigError(f"`{name}` must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(cls)} - set(exclude)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in `{name}`: {unknown}; allowed: {sorted(allowed)}")
    data = {k: tuple(v) if k in tuple_fields else v for k, v in data.items()}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad `{name}` section: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {unknown}; allowed: {sorted(top)}")
    kw = dict(data)
    if "seed" not in kw:
        kw["seed"] = None
    if "detectors" in kw:
        kw["detectors"] = tuple(kw["detectors"])
    if "thresholds" in kw:
        kw["thresholds"] = {**DEFAULT_THRESHOLDS, **kw["thresholds"]}
        bad = [k for k in data["thresholds"] if k not in DEFAULT_THRESHOLDS]
        if bad:
            raise ConfigError(f"unknown threshold key(s) {bad}; allowed: {sorted(DEFAULT_THRESHOLDS)}")
    if "encoder" in kw:
        kw["encoder"] = _section(WheelEncoderConfig, kw["encoder"], "encoder")
    if "head" in kw:
        kw["head"] = _section(SupervisedHeadConfig, kw["head"], "head", tuple_fields=("hidden_dims",))
    if "train" in kw:
        kw["train"] = _section(TrainSpec, {"optimizer": "adam", **kw["train"]}, "train", exclude=("seed",))
    if "ocsvm" in kw:
        kw["ocsvm"] = _section(OcSvmSettings, kw["ocsvm"], "ocsvm")
    if "helm" in kw:
        kw["helm"] = _section(HelmConfig, kw["helm"], "helm", tuple_fields=("layer_sizes",))
    if "toy" in kw:
        kw["toy"] = _section(ToyConfig, kw["toy"], "toy")
    if "fleet" in kw and not isinstance(kw["fleet"], dict):
        raise ConfigError("`fleet` must be a JSON object")
    cfg = ExperimentConfig(**kw)
    return cfg


def load_config(path=None, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Read a config file (or the built-in defaults) and apply CLI overrides."""
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = config_from_dict(data)
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.output_dir = str(out)
    cfg.validate()
    return cfg

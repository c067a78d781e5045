"""Seeded synthetic fleet of wheels passing wayside load checkpoints.

Signal model per pass (force at wheel angle ``theta`` in revolutions)::

    load * gain[checkpoint, sensor] * (1 + s * (roundness(theta) + fault(theta)))
        + load * noise * N(0, 1)

``roundness`` is a sum of 1st-3rd order harmonics (order ``h`` scaled by
``h ** -harmonic_decay``) whose amplitudes grow with days since the last
re-profiling; ``s`` is a mild speed factor. Each of the
eight sensors sees one eighth of the revolution starting at a random phase,
sampled at 10 kHz, so segment lengths shrink with speed.

Every wheel draws from its own RNG stream ``(seed, wheel_id)`` so the result
does not depend on generation order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .signal_prep import N_SENSORS, Measurement

FAULT_KINDS = ("shelling", "crack", "flat")
DAY = 86400
SAMPLE_RATE_HZ = 10_000.0
CIRCUMFERENCE_M = 2.89
DEFAULT_ORIGIN = 1_609_459_200  # 2021-01-01T00:00:00Z

# shape constants of the fault signatures (widths in revolutions)
SHELLING_OFFSETS = (0.0, 0.055, 0.12)
SHELLING_WEIGHTS = (1.0, 0.75, 0.55)
SHELLING_SIGMA = 0.05 / 2.355
CRACK_SIGMA = 0.012
FLAT_SIGMA = 0.0012


@dataclass(frozen=True)
class FaultAssignment:
    wheel_id: int
    kind: str
    onset_day: float
    manifest_day: float


@dataclass(frozen=True)
class ZoneAnnotation:
    """Ground-truth zones in days relative to ``origin`` (the monitoring start).

    green: [0, onset_day), orange: [onset_day, manifest_day),
    red: [manifest_day, end_day].
    """

    origin: int
    onset_day: float
    manifest_day: float
    end_day: float

    def __post_init__(self):
        if not self.onset_day <= self.manifest_day <= self.end_day:
            raise ConfigError(f"invalid zones: onset {self.onset_day}, manifest {self.manifest_day}, end {self.end_day}")

    @property
    def green_end(self) -> float:
        return self.onset_day

    @property
    def red_start(self) -> float:
        return self.manifest_day


@dataclass
class FleetConfig:
    n_wheels: int = 46
    train_wheels: int = 16
    monitoring_days: int = 120
    passes_per_day: float = 5.0
    speed_range: tuple[float, float] = (60.0, 140.0)
    load_range: tuple[float, float] = (55.0, 85.0)
    n_checkpoints: int = 4
    calibration_sigma: float = 0.02
    noise_level: float = 0.015
    visit_interval_days: int = 120
    harmonic_base: float = 0.03
    degradation_per_100_days: float = 0.05
    wheel_spread: float = 0.2
    harmonic_decay: float = 2.0
    shelling_amplitude: float = 0.5
    crack_ratio: float = 0.4
    flat_amplitude: float = 1.6
    faults: tuple[FaultAssignment, ...] = ()
    origin: int = DEFAULT_ORIGIN

    def __post_init__(self):
        self.speed_range = tuple(self.speed_range)
        self.load_range = tuple(self.load_range)
        self.faults = tuple(f if isinstance(f, FaultAssignment) else FaultAssignment(**f) for f in self.faults)

    def visit_days(self) -> list[int]:
        """Workshop visits; monitoring end counts as the final visit."""
        days = list(range(0, self.monitoring_days, self.visit_interval_days))
        return days + [self.monitoring_days]

    def validate(self) -> None:
        if self.n_wheels < 1 or not 0 <= self.train_wheels <= self.n_wheels:
            raise ConfigError("need n_wheels >= 1 and 0 <= train_wheels <= n_wheels")
        if self.monitoring_days < 1 or self.visit_interval_days < 1:
            raise ConfigError("monitoring_days and visit_interval_days must be >= 1")
        if not 0 < self.speed_range[0] <= self.speed_range[1]:
            raise ConfigError(f"bad speed range {self.speed_range}")
        if not 0 < self.load_range[0] <= self.load_range[1]:
            raise ConfigError(f"bad load range {self.load_range}")
        if self.n_checkpoints < 1 or self.passes_per_day < 0:
            raise ConfigError("need n_checkpoints >= 1 and passes_per_day >= 0")
        if not 0 <= self.wheel_spread < 1:
            raise ConfigError("wheel_spread must lie in [0, 1)")
        if not 0 <= self.crack_ratio <= 0.4:
            raise ConfigError("crack_ratio must be within [0, 0.4]")
        visits = self.visit_days()
        seen = set()
        for f in self.faults:
            if f.kind not in FAULT_KINDS:
                raise ConfigError(f"unknown fault kind {f.kind!r}")
            if not 0 <= f.wheel_id < self.n_wheels:
                raise ConfigError(f"fault wheel {f.wheel_id} not in fleet")
            if f.wheel_id < self.train_wheels:
                raise ConfigError(f"fault wheel {f.wheel_id} lies in the healthy training split")
            if f.wheel_id in seen:
                raise ConfigError(f"wheel {f.wheel_id} has more than one fault")
            seen.add(f.wheel_id)
            nxt = next((v for v in visits if v > f.onset_day), None)
            if nxt is None or not 0 <= f.onset_day < f.manifest_day < nxt:
                raise ConfigError(f"wheel {f.wheel_id}: need onset < manifest < next visit, got {f.onset_day}, {f.manifest_day}, {nxt}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["faults"] = [asdict(f) for f in self.faults]
        d["speed_range"] = list(self.speed_range)
        d["load_range"] = list(self.load_range)
        return d


@dataclass
class WheelTimeline:
    wheel_id: int
    measurements: list[Measurement]
    visits: list[int]  # timestamps of workshop visits (the first one starts monitoring)
    split: str = "test"
    fault: FaultAssignment | None = None
    annotation: ZoneAnnotation | None = None
    severities: np.ndarray | None = None  # per measurement, for diagnostics

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([m.timestamp for m in self.measurements], dtype=np.int64)

    @property
    def defective(self) -> bool:
        return self.fault is not None


@dataclass
class FleetDataset:
    config: FleetConfig
    seed: int
    timelines: list[WheelTimeline] = field(default_factory=list)

    def split(self, name: str) -> list[WheelTimeline]:
        return [t for t in self.timelines if t.split == name]


def experiment_fleet(seed: int = 7, n_train: int = 16, n_healthy_test: int = 10, n_shelling: int = 10, n_crack: int = 10, monitoring_days: int = 120, **overrides) -> FleetConfig:
    """Fleet used by the end-to-end experiment: healthy training wheels first,
    then healthy, shelling and crack test wheels."""
    rng = np.random.default_rng([seed, 9_999_991])
    faults = []
    wid = n_train + n_healthy_test
    for kind, count in (("shelling", n_shelling), ("crack", n_crack)):
        for _ in range(count):
            onset = float(np.round(rng.uniform(0.2, 0.5) * monitoring_days, 2))
            manifest = float(np.round(onset + rng.uniform(0.12, 0.25) * monitoring_days, 2))
            faults.append(FaultAssignment(wid, kind, onset, manifest))
            wid += 1
    cfg = FleetConfig(n_wheels=wid, train_wheels=n_train, monitoring_days=monitoring_days, faults=tuple(faults), **overrides)
    cfg.validate()
    return cfg


def _circ_dist(theta, center):
    d = (theta - center) % 1.0
    return np.minimum(d, 1.0 - d)


def fault_profile(theta, kind: str, severity: float, position: float) -> np.ndarray:
    """Relative dynamic-load change caused by a fault at wheel angle ``theta``."""
    if kind not in FAULT_KINDS:
        raise ConfigError(f"unknown fault kind {kind!r}")
    theta = np.asarray(theta, dtype=np.float64)
    if severity == 0:
        return np.zeros_like(theta)
    if kind == "shelling":
        out = np.zeros_like(theta)
        for off, wgt in zip(SHELLING_OFFSETS, SHELLING_WEIGHTS):
            out += wgt * np.exp(-0.5 * (_circ_dist(theta, position + off) / SHELLING_SIGMA) ** 2)
        return severity * out
    if kind == "crack":
        return -severity * np.exp(-0.5 * (_circ_dist(theta, position) / CRACK_SIGMA) ** 2)
    return severity * np.exp(-0.5 * (_circ_dist(theta, position) / FLAT_SIGMA) ** 2)


def segment_angles(lengths, phase: float = 0.0) -> list[np.ndarray]:
    """Wheel angle (revolutions) of every sample; sensor i covers [i/8, (i+1)/8)."""
    out = []
    for i, n in enumerate(lengths):
        out.append(phase + (i + (np.arange(n) + 0.5) / n) / N_SENSORS)
    return out


def fault_amplitude(kind: str, config: FleetConfig | None = None) -> float:
    cfg = config or FleetConfig()
    if kind == "shelling":
        return cfg.shelling_amplitude
    if kind == "crack":
        return cfg.crack_ratio * cfg.shelling_amplitude
    if kind == "flat":
        return cfg.flat_amplitude
    raise ConfigError(f"unknown fault kind {kind!r}")


def inject_fault(segments, kind: str, severity: float, rng, position: float | None = None, phase: float = 0.0, scale=1.0, config: FleetConfig | None = None):
    """Add a fault signature to eight segments; returns new float32 segments.

    ``scale`` (scalar or one value per segment) converts the relative profile
    to force units, typically ``load * gain * speed_factor``. Severity 0
    returns copies of the input unchanged.
    """
    if kind not in FAULT_KINDS:
        raise ConfigError(f"unknown fault kind {kind!r}")
    if not 0.0 <= severity <= 1.0:
        raise ConfigError(f"severity must be in [0, 1], got {severity}")
    if position is None:
        position = float(rng.uniform(0.0, 1.0))
    segs = [np.array(s, dtype=np.float32, copy=True) for s in segments]
    if severity == 0:
        return segs
    amp = fault_amplitude(kind, config)
    scales = np.broadcast_to(np.asarray(scale, dtype=np.float64), (len(segs),))
    for seg, theta, sc in zip(segs, segment_angles([s.size for s in segs], phase), scales):
        seg += (sc * amp * fault_profile(theta, kind, severity, position)).astype(np.float32)
    return segs


def severity_at(day: float, fault: FaultAssignment | None) -> float:
    """Linear ramp from 0 at onset to 1 at manifestation, then constant."""
    if fault is None or day < fault.onset_day:
        return 0.0
    if day >= fault.manifest_day:
        return 1.0
    return (day - fault.onset_day) / (fault.manifest_day - fault.onset_day)


def _checkpoint_gains(config: FleetConfig, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 1_000_003])
    return 1.0 + config.calibration_sigma * rng.standard_normal((config.n_checkpoints, N_SENSORS))


def simulate_wheel(config: FleetConfig, seed: int, wheel_id: int, gains: np.ndarray | None = None, force_fault: FaultAssignment | None | bool = True) -> WheelTimeline:
    """Generate one wheel's timeline. ``force_fault=None`` simulates a healthy twin."""
    if gains is None:
        gains = _checkpoint_gains(config, seed)
    fault = next((f for f in config.faults if f.wheel_id == wheel_id), None)
    if force_fault is None:
        fault = None
    elif isinstance(force_fault, FaultAssignment):
        fault = force_fault
    rng = np.random.default_rng([seed, wheel_id])
    fault_rng = np.random.default_rng([seed, wheel_id, 77])
    fault_pos = float(fault_rng.uniform(0.0, 1.0))
    visits = config.visit_days()

    n_h = 3
    orders = np.arange(1, n_h + 1)
    measurements, severities = [], []
    for v_idx in range(len(visits) - 1):
        start, stop = visits[v_idx], visits[v_idx + 1]
        lo, hi = 1.0 - config.wheel_spread, 1.0 + config.wheel_spread
        decay = orders ** -config.harmonic_decay
        base = rng.uniform(lo, hi, n_h) * config.harmonic_base * decay
        rate = rng.uniform(lo, hi, n_h) * config.degradation_per_100_days / 100.0 * np.sqrt(decay)
        phases = rng.uniform(0.0, 2 * np.pi, n_h)
        for day in range(start, stop):
            n_pass = int(rng.poisson(config.passes_per_day))
            offsets = np.sort(rng.integers(0, DAY, n_pass))
            for off in offsets:
                t_day = day + off / DAY
                age = t_day - start
                speed = float(rng.uniform(*config.speed_range))
                load = float(rng.uniform(*config.load_range))
                cp = int(rng.integers(config.n_checkpoints))
                phase = float(rng.uniform(0.0, 1.0))
                n = max(8, int(round(SAMPLE_RATE_HZ * (CIRCUMFERENCE_M / N_SENSORS) / (speed / 3.6))))
                sf = 0.7 + 0.3 * speed / 100.0
                amps = base + rate * age
                sev = severity_at(t_day, fault)
                segs = []
                for i, theta in enumerate(segment_angles([n] * N_SENSORS, phase)):
                    ang = 2 * np.pi * np.outer(theta, orders) + phases
                    rough = np.cos(ang) @ amps
                    clean = load * gains[cp, i] * (1.0 + sf * rough)
                    noise = load * config.noise_level * rng.standard_normal(n)
                    segs.append((clean + noise).astype(np.float32))
                if fault is not None and sev > 0:
                    segs = inject_fault(segs, fault.kind, sev, fault_rng, position=fault_pos, phase=phase, scale=load * gains[cp] * sf, config=config)
                measurements.append(Measurement(wheel_id, cp, int(config.origin + day * DAY + off), round(speed, 3), round(load, 3), tuple(segs)))
                severities.append(sev)
    # speed/load pass through float32 in WLC1 files; keep in-memory values identical
    measurements = [
        Measurement(m.wheel_id, m.checkpoint_id, m.timestamp, float(np.float32(m.speed)), float(np.float32(m.load)), m.segments)
        for m in measurements
    ]
    annotation = None
    if fault is not None:
        end = next(v for v in visits if v > fault.onset_day)
        annotation = ZoneAnnotation(config.origin, fault.onset_day, fault.manifest_day, float(end))
    return WheelTimeline(
        wheel_id=wheel_id,
        measurements=measurements,
        visits=[config.origin + v * DAY for v in visits[:-1]],
        split="train" if wheel_id < config.train_wheels else "test",
        fault=fault,
        annotation=annotation,
        severities=np.asarray(severities),
    )


def simulate_fleet(config: FleetConfig, seed: int) -> FleetDataset:
    config.validate()
    gains = _checkpoint_gains(config, seed)
    timelines = [simulate_wheel(config, seed, w, gains) for w in range(config.n_wheels)]
    return FleetDataset(config, seed, timelines)

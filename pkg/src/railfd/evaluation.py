"""Detection-time metrics, confusion matrices and report assembly."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, MetricError

DAY = 86400
ZONES = ("green", "orange", "red")
DR_BUCKETS = ("dr<0.1", "dr<=0.5", "dr>0.5")


@dataclass(frozen=True)
class DelayMetrics:
    wheel_id: int
    zone: str  # green | orange | red | missed
    dt: int | None = None
    dr: float | None = None


def _day(ts: int, origin: int) -> int:
    return math.floor((ts - origin) / DAY)


def delay_metrics(detection, annotation) -> DelayMetrics:
    """Place a detection in the green/orange/red zone of a defective wheel.

    Days are whole calendar days since ``annotation.origin``. A detection on
    the red-start day itself has ``dt = 0`` and therefore counts as orange.
    """
    if annotation is None:
        raise DataError(f"wheel {detection.wheel_id} has no zone annotation; score it as a healthy wheel")
    if not detection.flagged:
        return DelayMetrics(detection.wheel_id, "missed")
    day = _day(detection.detection_timestamp, annotation.origin)
    onset = math.floor(annotation.onset_day)
    red = math.floor(annotation.manifest_day)
    end = math.floor(annotation.end_day)
    if day < onset:
        return DelayMetrics(detection.wheel_id, "green", day - onset)
    if day <= red:
        return DelayMetrics(detection.wheel_id, "orange", 0)
    dt = day - red
    total = end - red
    return DelayMetrics(detection.wheel_id, "red", dt, dt / total if total > 0 else 1.0)


def balanced_accuracy(confusion) -> float:
    """Mean per-category recall of a square confusion matrix (rows = actual).

    For the 2x2 layout ``[[TP, FN], [FP, TN]]`` this is ``(TPR + TNR) / 2``.
    """
    cm = np.asarray(confusion, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] < 2:
        raise MetricError(f"need a square confusion matrix, got shape {cm.shape}")
    support = cm.sum(axis=1)
    if np.any(support == 0):
        raise MetricError("balanced accuracy undefined: an actual category is empty")
    return float(np.mean(np.diag(cm) / support))


def confusion_matrix(y_true, y_pred, categories: int) -> np.ndarray:
    cm = np.zeros((categories, categories), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def dr_bucket(dr: float) -> str:
    if dr < 0.1:
        return "dr<0.1"
    if dr <= 0.5:
        return "dr<=0.5"
    return "dr>0.5"


@dataclass
class KindSummary:
    tp: int = 0
    fn: int = 0
    zones: dict = field(default_factory=lambda: dict.fromkeys(ZONES, 0))
    dr_buckets: dict = field(default_factory=lambda: dict.fromkeys(DR_BUCKETS, 0))


@dataclass
class DetectorSummary:
    name: str
    tp: int
    fn: int
    fp: int
    tn: int
    balanced_accuracy: float | None
    recall: float | None
    specificity: float | None
    by_kind: dict[str, KindSummary]
    wheels: list[dict]

    @property
    def confusion(self) -> list[list[int]]:
        return [[self.tp, self.fn], [self.fp, self.tn]]


@dataclass
class EvalReport:
    detectors: dict[str, DetectorSummary]
    ensemble_members: list[str] = field(default_factory=list)
    classification: dict | None = None

    def to_dict(self) -> dict:
        out = {"detectors": {}, "ensemble": None, "classification": self.classification}
        for name, s in self.detectors.items():
            d = asdict(s)
            d["confusion"] = s.confusion
            d["balanced_accuracy"] = "n/a" if s.balanced_accuracy is None else s.balanced_accuracy
            out["detectors"][name] = d
        if self.ensemble_members:
            out["ensemble"] = {"members": list(self.ensemble_members), "name": "ensemble"}
        return out


def summarize_detector(name, results, ground_truth, annotations) -> DetectorSummary:
    tp = fn = fp = tn = 0
    by_kind: dict[str, KindSummary] = {}
    wheels = []
    for r in sorted(results, key=lambda r: r.wheel_id):
        if r.wheel_id not in ground_truth:
            raise DataError(f"{name}: wheel {r.wheel_id} is missing from the ground truth")
        kind = ground_truth[r.wheel_id]
        rec = {"wheel_id": r.wheel_id, "fault": kind, "flagged": r.flagged, "detection_timestamp": r.detection_timestamp, "zone": None, "dt": None, "dr": None}
        if kind is None:
            fp += r.flagged
            tn += not r.flagged
        else:
            ks = by_kind.setdefault(kind, KindSummary())
            dm = delay_metrics(r, annotations.get(r.wheel_id))
            rec.update(zone=dm.zone, dt=dm.dt, dr=dm.dr)
            if r.flagged:
                tp += 1
                ks.tp += 1
                ks.zones[dm.zone] += 1
                if dm.dr is not None:
                    ks.dr_buckets[dr_bucket(dm.dr)] += 1
            else:
                fn += 1
                ks.fn += 1
        wheels.append(rec)
    pos, neg = tp + fn, fp + tn
    ba = balanced_accuracy([[tp, fn], [fp, tn]]) if pos and neg else None
    return DetectorSummary(
        name, tp, fn, fp, tn, ba,
        tp / pos if pos else None,
        tn / neg if neg else None,
        dict(sorted(by_kind.items())),
        wheels,
    )


def build_report(detections: dict, ground_truth: dict, annotations: dict, ensemble_members=(), classification: dict | None = None) -> EvalReport:
    """Assemble an :class:`EvalReport`.

    ``detections`` maps detector name -> list of DetectionResult;
    ``ground_truth`` maps wheel id -> fault kind (``None`` for healthy);
    ``annotations`` maps defective wheel id -> ZoneAnnotation.
    """
    summaries = {name: summarize_detector(name, res, ground_truth, annotations) for name, res in detections.items()}
    return EvalReport(summaries, list(ensemble_members), classification)


def classification_summary(y_true, y_pred, categories: int, names=None) -> dict:
    cm = confusion_matrix(y_true, y_pred, categories)
    try:
        ba = balanced_accuracy(cm)
    except MetricError:
        ba = None
    return {
        "categories": list(names) if names else list(range(categories)),
        "confusion": cm.tolist(),
        "balanced_accuracy": "n/a" if ba is None else ba,
        "accuracy": float(np.trace(cm) / max(cm.sum(), 1)),
    }


def _pct(v) -> str:
    return "n/a" if v is None or v == "n/a" else f"{100 * v:.1f}%"


def format_text(report: EvalReport) -> str:
    """Plain-text summary laid out like the detection and timing tables."""
    lines = []
    if report.detectors:
        names = list(report.detectors)
        lines.append("Detection results (rows: actual, columns: predicted Defect / Healthy)")
        lines.append(f"{'':10}" + "".join(f"{n:>24}" for n in names))
        lines.append(f"{'Defect':10}" + "".join(f"{report.detectors[n].tp:>12}{report.detectors[n].fn:>12}" for n in names))
        lines.append(f"{'Healthy':10}" + "".join(f"{report.detectors[n].fp:>12}{report.detectors[n].tn:>12}" for n in names))
        lines.append(f"{'Bal. acc.':10}" + "".join(f"{_pct(report.detectors[n].balanced_accuracy):>24}" for n in names))
        if report.ensemble_members:
            lines.append(f"ensemble = OR({', '.join(report.ensemble_members)})")
        lines.append("")
        kinds = sorted({k for s in report.detectors.values() for k in s.by_kind})
        header = f"{'Method':20}{'FN':>5}{'TP':>5}{'dt<0':>7}{'dt=0':>7}{'dt>0':>7}{'dr<0.1':>9}{'dr<=0.5':>9}{'dr>0.5':>9}"
        for kind in kinds:
            lines.append(f"Detection time: {kind}")
            lines.append(header)
            for n, s in report.detectors.items():
                ks = s.by_kind.get(kind, KindSummary())
                z, b = ks.zones, ks.dr_buckets
                lines.append(f"{n:20}{ks.fn:>5}{ks.tp:>5}{z['green']:>7}{z['orange']:>7}{z['red']:>7}{b['dr<0.1']:>9}{b['dr<=0.5']:>9}{b['dr>0.5']:>9}")
            lines.append("")
    if report.classification:
        for name, c in report.classification.items():
            if not isinstance(c, dict) or "confusion" not in c:
                continue
            lines.append(f"Classification: {name} (rows: actual, columns: predicted)")
            cats = c["categories"]
            lines.append(f"{'':10}" + "".join(f"{str(k):>10}" for k in cats))
            for k, row in zip(cats, c["confusion"]):
                lines.append(f"{str(k):10}" + "".join(f"{v:>10}" for v in row))
            lines.append(f"{'Bal. acc.':10}{_pct(c['balanced_accuracy']):>10}")
            lines.append("")
    return "\n".join(lines).rstrip() + "\n"

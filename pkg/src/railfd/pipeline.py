"""End-to-end experiment stages and the ``run`` pipeline.

Every stage reads its inputs from, and writes its outputs to, the run
directory, so the CLI commands can be chained one at a time or all at once::

    dataset/            manifest.json + measurements/*.wlc   (simulate)
    prepared.npz        prepared signals of every wheel       (prep)
    model.rhm           encoder + OCSV + HELM sections        (train, fit-occ, fit-helm)
    loss_history.csv                                          (train)
    health_<det>.csv    test-wheel health series              (score)
    detections.json                                           (detect)
    report.json, report.txt                                   (evaluate)
    timings.json        wall-clock per stage (run only; kept out of the report)
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from . import contrastive, detection, encoders, evaluation, helm, occ, wheelsim
from . import io as rio
from . import signal_prep as sp
from .autodiff import stack
from .config import ENSEMBLE_MEMBERS, ExperimentConfig
from .errors import FormatError, RailFDError, StageError
from .toyset import CATEGORIES, make_toyset

log = logging.getLogger(__name__)

INCOMPLETE = "INCOMPLETE"
SCORED = ("contrastive-ocsvm", "helm", "dyncoeff")


def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir)


def _dataset_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.dataset) if cfg.dataset else _out(cfg) / "dataset"


def _load_model(cfg) -> ckpt_mod.Checkpoint:
    path = _out(cfg) / "model.rhm"
    if not path.exists():
        raise FormatError(f"no model checkpoint at {path}; run `train` first")
    return ckpt_mod.load(path)


def _prepared(cfg) -> dict:
    return rio.read_prepared(_out(cfg) / "prepared.npz")


def _rows(prep, split: int):
    return np.flatnonzero(prep["splits"] == split)


# -- wheel stages -----------------------------------------------------------

def stage_simulate(cfg: ExperimentConfig) -> Path:
    counts, overrides = cfg.fleet_args()
    fleet = wheelsim.experiment_fleet(cfg.seed, **counts, **overrides)
    dataset = wheelsim.simulate_fleet(fleet, cfg.seed)
    return rio.write_dataset(_out(cfg) / "dataset", dataset)


def stage_prep(cfg: ExperimentConfig) -> Path:
    dataset = rio.read_dataset(_dataset_path(cfg))
    signals, wheels, stamps, splits = [], [], [], []
    for tl in dataset.timelines:
        signals.append(sp.prepare_many(tl.measurements, cfg.encoder.input_length))
        wheels += [tl.wheel_id] * len(tl.measurements)
        stamps += [m.timestamp for m in tl.measurements]
        splits += [0 if tl.split == "train" else 1] * len(tl.measurements)
    path = _out(cfg) / "prepared.npz"
    rio.write_prepared(path, np.concatenate(signals), wheels, stamps, splits)
    return path


def _train_labels(cfg, prep, manifest):
    visits = {w["wheel_id"]: w["visits"] for w in manifest["wheels"]}
    rows = _rows(prep, 0)
    labels = []
    for wid in dict.fromkeys(prep["wheel_ids"][rows].tolist()):
        sel = rows[prep["wheel_ids"][rows] == wid]
        labels += contrastive.temporal_labels(wid, prep["timestamps"][sel], visits[wid], cfg.bucket_days)
    return rows, labels


def stage_train(cfg: ExperimentConfig):
    prep = _prepared(cfg)
    manifest = rio.read_manifest(_dataset_path(cfg))
    rows, labels = _train_labels(cfg, prep, manifest)
    net = encoders.build_wheel_encoder(cfg.encoder, cfg.seed)
    net, history = contrastive.train_contrastive(net, prep["signals"][rows], labels, cfg.train_spec())
    out = _out(cfg)
    ckpt_mod.save(out / "model.rhm", ckpt_mod.Checkpoint(net))
    rio.write_loss_history_csv(out / "loss_history.csv", history)
    return net, history


def stage_fit_occ(cfg: ExperimentConfig) -> occ.OcSvmModel:
    prep = _prepared(cfg)
    ck = _load_model(cfg)
    if ck.network is None:
        raise FormatError("model checkpoint has no encoder; run `train` first")
    feats = encoders.encode_batch(ck.network, prep["signals"][_rows(prep, 0)])
    s = cfg.ocsvm
    model = occ.fit_ocsvm(feats, nu=s.nu, gamma=s.gamma, tol=s.tol)
    ck.sections[occ.SECTION_TAG] = model.to_section()
    ckpt_mod.save(_out(cfg) / "model.rhm", ck)
    return model


def stage_fit_helm(cfg: ExperimentConfig) -> helm.HelmModel:
    prep = _prepared(cfg)
    path = _out(cfg) / "model.rhm"
    ck = ckpt_mod.load(path) if path.exists() else ckpt_mod.Checkpoint()
    model = helm.fit_helm(prep["signals"][_rows(prep, 0)], cfg.helm, cfg.seed)
    ck.sections[helm.SECTION_TAG] = model.to_section()
    ckpt_mod.save(path, ck)
    return model


def _scored_detectors(cfg):
    return [d for d in SCORED if d in cfg.detectors]


def stage_score(cfg: ExperimentConfig) -> dict[str, Path]:
    prep = _prepared(cfg)
    rows = _rows(prep, 1)
    x = prep["signals"][rows]
    wheels, stamps = prep["wheel_ids"][rows], prep["timestamps"][rows]
    need_model = any(d in cfg.detectors for d in ENSEMBLE_MEMBERS)
    ck = _load_model(cfg) if need_model else None
    paths = {}
    for det in _scored_detectors(cfg):
        if det == "contrastive-ocsvm":
            if ck.network is None or occ.SECTION_TAG not in ck.sections:
                raise FormatError("checkpoint lacks the encoder or OC-SVM; run `train` and `fit-occ`")
            model = occ.OcSvmModel.from_section(ck.sections[occ.SECTION_TAG])
            values = occ.health_values(model, encoders.encode_batch(ck.network, x))
        elif det == "helm":
            if helm.SECTION_TAG not in ck.sections:
                raise FormatError("checkpoint lacks the HELM model; run `fit-helm`")
            values = helm.helm_health_values(helm.HelmModel.from_section(ck.sections[helm.SECTION_TAG]), x)
        else:
            values = detection.dyn_coeff_many(x)
        path = _out(cfg) / f"health_{det}.csv"
        rio.write_health_csv(path, zip(wheels.tolist(), stamps.tolist(), [det] * len(rows), values.tolist()))
        paths[det] = path
    return paths


def _series(rows):
    by_wheel: dict[int, list] = {}
    for wheel, ts, _, val in rows:
        by_wheel.setdefault(wheel, []).append((ts, val))
    for wheel, pts in sorted(by_wheel.items()):
        pts.sort(key=lambda p: p[0])
        yield wheel, np.array([p[0] for p in pts], dtype=np.int64), np.array([p[1] for p in pts])


def stage_detect(cfg: ExperimentConfig) -> dict[str, list[detection.DetectionResult]]:
    results: dict[str, list] = {}
    for det in _scored_detectors(cfg):
        path = _out(cfg) / f"health_{det}.csv"
        if not path.exists():
            raise FormatError(f"no health series at {path}; run `score` first")
        thr = cfg.threshold(det)
        results[det] = [
            detection.detect(detection.HealthSeries(w, ts, vals, det), thr, cfg.window)
            for w, ts, vals in _series(rio.read_health_csv(path))
        ]
    if "ensemble" in cfg.detectors:
        members = [results[m] for m in ENSEMBLE_MEMBERS]
        results["ensemble"] = [detection.ensemble_or(group) for group in zip(*members)]
    rio.write_json(_out(cfg) / "detections.json", {
        name: [{"wheel_id": r.wheel_id, "flagged": r.flagged, "detection_timestamp": r.detection_timestamp} for r in res]
        for name, res in results.items()
    })
    return results


def _read_detections(cfg):
    path = _out(cfg) / "detections.json"
    if not path.exists():
        raise FormatError(f"no detections at {path}; run `detect` first")
    raw = json.loads(path.read_text())
    return {
        name: [detection.DetectionResult(r["wheel_id"], r["flagged"], r["detection_timestamp"], name) for r in res]
        for name, res in raw.items()
    }


def _report_header(cfg: ExperimentConfig) -> dict:
    return {"task": cfg.task, "seed": cfg.seed, "config": {k: v for k, v in cfg.to_dict().items() if k not in ("output_dir", "dataset")}}


def stage_evaluate(cfg: ExperimentConfig) -> evaluation.EvalReport:
    from .wheelsim import ZoneAnnotation

    detections = _read_detections(cfg)
    manifest = rio.read_manifest(_dataset_path(cfg))
    test = [w for w in manifest["wheels"] if w["split"] == "test"]
    truth = {w["wheel_id"]: (w["fault"]["kind"] if w["fault"] else None) for w in test}
    annotations = {w["wheel_id"]: ZoneAnnotation(**w["annotation"]) for w in test if w["annotation"]}
    members = list(ENSEMBLE_MEMBERS) if "ensemble" in detections else []
    report = evaluation.build_report(detections, truth, annotations, members)
    extra = {}
    path = _out(cfg) / "model.rhm"
    if path.exists():
        ck = ckpt_mod.load(path)
        if occ.SECTION_TAG in ck.sections:
            m = occ.OcSvmModel.from_section(ck.sections[occ.SECTION_TAG])
            extra["ocsvm"] = {"support_vectors": int(m.alpha.size), "gamma": m.gamma, "rho": m.rho, "scale": m.scale, "iterations": m.iterations}
    _write_report(cfg, report, extra)
    return report


def _write_report(cfg, report: evaluation.EvalReport, extra: dict | None = None) -> None:
    out = _out(cfg)
    body = {**_report_header(cfg), **report.to_dict(), "models": extra or {}}
    rio.write_json(out / "report.json", body)
    rio.atomic_write_text(out / "report.txt", evaluation.format_text(report))


# -- supervised toy task ----------------------------------------------------

def run_supervised(cfg: ExperimentConfig) -> evaluation.EvalReport:
    train, test = make_toyset(cfg.toy, cfg.seed)
    backbone = cfg.encoder.__class__(**{**cfg.encoder.to_dict(), "input_length": cfg.toy.length})
    spec = cfg.train_spec()
    enc0 = encoders.build_supervised_encoder(backbone, cfg.head, cfg.seed)
    head0 = encoders.build_classifier_head(cfg.head, cfg.seed + 1)
    enc, history = contrastive.train_contrastive(enc0, train.signals, train.labels.tolist(), spec)
    head, _ = contrastive.train_supervised_classifier(enc, head0, train.signals, train.labels, spec)
    ce_enc, ce_head, _ = contrastive.train_cross_entropy(enc0, head0, train.signals, train.labels, spec)
    out = _out(cfg)
    ckpt_mod.save(out / "model.rhm", ckpt_mod.Checkpoint(stack(enc, head)))
    ckpt_mod.save(out / "model_cross_entropy.rhm", ckpt_mod.Checkpoint(stack(ce_enc, ce_head)))
    rio.write_loss_history_csv(out / "loss_history.csv", history)
    classification = {}
    for name, (e, h) in (("contrastive", (enc, head)), ("cross-entropy", (ce_enc, ce_head))):
        pred = np.argmax(encoders.classify(h, encoders.encode_batch(e, test.signals)), axis=1)
        classification[name] = evaluation.classification_summary(test.labels, pred, len(CATEGORIES), CATEGORIES)
    report = evaluation.EvalReport({}, [], classification)
    _write_report(cfg, report)
    return report


# -- full run ---------------------------------------------------------------

WHEEL_STAGES = ("simulate", "prep", "train", "fit-occ", "fit-helm", "score", "detect", "evaluate")

STAGE_FUNCS = {
    "simulate": stage_simulate,
    "prep": stage_prep,
    "train": stage_train,
    "fit-occ": stage_fit_occ,
    "fit-helm": stage_fit_helm,
    "score": stage_score,
    "detect": stage_detect,
    "evaluate": stage_evaluate,
}


def run_stage(cfg: ExperimentConfig, stage: str):
    """Run one stage; any failure is re-raised as StageError naming the stage."""
    try:
        return STAGE_FUNCS[stage](cfg)
    except StageError:
        raise
    except (RailFDError, OSError, ValueError, KeyError) as exc:
        raise StageError(stage, exc) from exc


def _wheel_stages(cfg):
    stages = list(WHEEL_STAGES)
    if cfg.dataset:
        stages.remove("simulate")
    if "contrastive-ocsvm" not in cfg.detectors:
        stages.remove("train")
        stages.remove("fit-occ")
    if "helm" not in cfg.detectors:
        stages.remove("fit-helm")
    return stages


def run_pipeline(cfg: ExperimentConfig, plots: bool = False) -> evaluation.EvalReport:
    """Execute every stage in order.

    An ``INCOMPLETE`` marker naming the running stage sits in the output
    directory until the run succeeds; after a failure it stays behind with
    the stage name and cause.
    """
    cfg.validate()
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE
    timings = {}
    stages = ["supervised"] if cfg.task == "supervised-toy" else _wheel_stages(cfg)
    report = None
    for stage in stages:
        rio.atomic_write_text(marker, f"running {stage}\n")
        t0 = time.perf_counter()
        log.info("stage %s", stage)
        try:
            if stage == "supervised":
                report = run_supervised(cfg)
            else:
                report = run_stage(cfg, stage)
        except StageError as exc:
            rio.atomic_write_text(marker, f"failed {exc.stage}: {type(exc.cause).__name__}: {exc.cause}\n")
            raise
        except (RailFDError, OSError, ValueError, KeyError) as exc:
            rio.atomic_write_text(marker, f"failed {stage}: {type(exc).__name__}: {exc}\n")
            raise StageError(stage, exc) from exc
        timings[stage] = round(time.perf_counter() - t0, 3)
    rio.write_json(out / "timings.json", timings)
    if plots:
        from .plots import plot_health_series

        plot_health_series(cfg)
    marker.unlink()
    return report

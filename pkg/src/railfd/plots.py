"""Optional SVG health-series plots with ground-truth zone shading (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import io as rio
from .errors import ConfigError

DAY = 86400


def plot_health_series(cfg) -> list[Path]:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("--plots needs matplotlib (pip install 'artifact[plots]')") from exc
    from .pipeline import SCORED, _dataset_path

    out = Path(cfg.output_dir)
    manifest = rio.read_manifest(_dataset_path(cfg))
    wheels = {w["wheel_id"]: w for w in manifest["wheels"]}
    written = []
    for det in SCORED:
        path = out / f"health_{det}.csv"
        if not path.exists():
            continue
        rows = rio.read_health_csv(path)
        by_wheel: dict[int, list] = {}
        for wheel, ts, _, val in rows:
            by_wheel.setdefault(wheel, []).append((ts, val))
        for wheel, pts in sorted(by_wheel.items()):
            pts.sort()
            ts = np.array([p[0] for p in pts])
            ann = wheels[wheel]["annotation"]
            origin = ann["origin"] if ann else (wheels[wheel]["visits"] or [ts[0]])[0]
            days = (ts - origin) / DAY
            fig, ax = plt.subplots(figsize=(7, 2.5))
            if ann:
                ax.axvspan(ann["onset_day"], ann["manifest_day"], color="orange", alpha=0.25, lw=0)
                ax.axvspan(ann["manifest_day"], ann["end_day"], color="red", alpha=0.2, lw=0)
            ax.plot(days, [p[1] for p in pts], ".", ms=2)
            ax.axhline(cfg.threshold(det), color="k", lw=0.8, ls="--")
            kind = wheels[wheel]["fault"]["kind"] if wheels[wheel]["fault"] else "healthy"
            ax.set_title(f"wheel {wheel} ({kind}) - {det}", fontsize=9)
            ax.set_xlabel("day")
            fig.tight_layout()
            target = out / "plots" / f"{det}_wheel_{wheel:04d}.svg"
            target.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(target, format="svg")
            plt.close(fig)
            written.append(target)
    return written

"""CSV serialization of episode traces and sweep summaries."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .energy import energy_summary
from .episode import EpisodeTrace

CAMERA_COLUMNS = ("slot", "camera_id", "selected", "predicted_iou", "true_iou", "energy_j", "queue_len")
SLOT_COLUMNS = ("slot", "mpjpe_mm", "persons_matched", "estimation_failed")


def fmt(x) -> str:
    """Shortest round-trip text of a number; empty for NaN (no prediction or no estimate)."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def camera_rows(trace: EpisodeTrace):
    for t in range(trace.slots):
        for n, cid in enumerate(trace.camera_ids):
            yield (t, cid, int(trace.selection[t, n]), trace.predicted_iou[t, n], trace.true_iou[t, n],
                   trace.energy_j[t, n], trace.queue[t, n])


def slot_rows(trace: EpisodeTrace):
    for t in range(trace.slots):
        yield t, trace.mpjpe_mm[t], int(trace.persons_matched[t]), bool(trace.estimation_failed[t])


def write_trace(trace: EpisodeTrace, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
    """Write ``<stem>_cameras.csv`` and ``<stem>_slots.csv``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{trace.policy.lower()}_seed{trace.seed}"
    cam_path, slot_path = out / f"{stem}_cameras.csv", out / f"{stem}_slots.csv"
    _write(cam_path, CAMERA_COLUMNS, camera_rows(trace))
    _write(slot_path, SLOT_COLUMNS, slot_rows(trace))
    return cam_path, slot_path


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_columns(n_cameras: int, ap_thresholds: Sequence[float]) -> list[str]:
    cols = ["policy", "C", "E", "V", "tau", "seeds"]
    for m in ["mpjpe_mm", "pcp", "failure_rate", "selected_iou"] + [f"ap_{k:g}" for k in ap_thresholds]:
        cols += [f"{m}_mean", f"{m}_std"]
    cols += ["fleet_power_w", "power_std_w"]
    cols += [f"power_w_cam{n}" for n in range(n_cameras)]
    cols += [f"freq_cam{n}" for n in range(n_cameras)]
    return cols


def summary_row(cell: dict, traces: Sequence[EpisodeTrace]) -> dict:
    """Mean and std over seeds of every summary metric, plus per-camera power and frequency."""
    row = dict(cell)
    row["seeds"] = len(traces)
    sums = [t.summary() for t in traces]
    for key in sums[0]:
        vals = np.array([s[key] for s in sums], dtype=float)
        ok = vals[np.isfinite(vals)]
        row[f"{key}_mean"] = ok.mean() if len(ok) else float("nan")
        row[f"{key}_std"] = ok.std() if len(ok) else float("nan")
    power = np.mean([energy_summary(t).mean_power_w for t in traces], axis=0)
    freq = np.mean([t.selection_frequency() for t in traces], axis=0)
    row["fleet_power_w"] = power.mean()
    row["power_std_w"] = power.std()
    for n, (p, f) in enumerate(zip(power, freq)):
        row[f"power_w_cam{n}"] = p
        row[f"freq_cam{n}"] = f
    return row


def write_summary(rows: Sequence[dict], columns: Sequence[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write(path, columns, ([r.get(c, "") for c in columns] for r in rows))
    return path

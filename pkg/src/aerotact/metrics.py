"""Run logs, their CSV serialization, and performance metrics.

The runner fills four synchronized tables: control and estimator rows
at every 1 ms step, tactile and texture rows at every 1/30 s frame.
Everything a metric needs (true force, reference, anchor position,
switch state, texture truth) is a column, so metrics recomputed from
the emitted CSVs equal the in-run values exactly.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

SETTLE_TOL = 0.2  # N, force band that counts as settled

CONTROL_COLS = (
    "t", "px", "py", "pz", "vx", "vy", "vz", "lam",
    "f_true_x", "f_true_y", "f_true_z", "f_ref",
    "f_est_x", "f_est_y", "f_est_z",
    "op_x", "op_y", "op_z", "sp_x", "sp_y", "sp_z",
    "saturated", "phase",
)
ESTIMATOR_COLS = (
    "t", "f_ft_x", "f_ft_y", "f_ft_z", "f_tac_x", "f_tac_y", "f_tac_z",
    "f_c_x", "f_c_y", "f_c_z", "p_xx", "p_yy", "p_zz",
)
TACTILE_COLS = (
    "t", "mean_disp_mm", "engaged",
    "f_pad_x", "f_pad_y", "f_pad_z", "f_wall_x", "f_wall_y", "f_wall_z",
)
TEXTURE_COLS = (
    "t", "truth", "engaged",
    "p_0", "p_1", "p_2", "p_3", "p_4", "p_5", "p_6",
    "s_0", "s_1", "s_2", "s_3", "s_4", "s_5", "s_6",
    "pred",
)

_FILES = {
    "control": ("control.csv", CONTROL_COLS),
    "estimator": ("estimator.csv", ESTIMATOR_COLS),
    "tactile": ("tactile.csv", TACTILE_COLS),
    "texture": ("texture.csv", TEXTURE_COLS),
}


class NoContactWindowError(RuntimeError):
    """The log never shows the force controller active."""


@dataclass
class RunLogs:
    """Time-series record of one closed-loop run."""

    control: np.ndarray
    estimator: np.ndarray
    tactile: np.ndarray
    texture: np.ndarray
    name: str = "run"
    seed: int = 0
    sensor_mode: str = "fused"

    def __post_init__(self):
        for attr, cols in (
            ("control", CONTROL_COLS), ("estimator", ESTIMATOR_COLS),
            ("tactile", TACTILE_COLS), ("texture", TEXTURE_COLS),
        ):
            arr = np.asarray(getattr(self, attr), dtype=float).reshape(-1, len(cols))
            setattr(self, attr, arr)
        if len(self.control) != len(self.estimator):
            raise ValueError("control and estimator logs must share the step grid")

    def col(self, table: str, name: str) -> np.ndarray:
        """One named column of one table."""
        _, cols = _FILES[table]
        return getattr(self, table)[:, cols.index(name)]


@dataclass
class RunMetrics:
    """Scalar performance summary of one run.

    Force metrics are computed over the contact window only, against
    the reference; ``force_estimate_rmse`` compares the estimator
    output to the simulator's true contact force over the same window.
    Texture accuracies are None when the run classified nothing.
    """

    force_rmse: float = 0.0  # N
    force_overshoot: float = 0.0  # N
    force_undershoot: float = 0.0  # N
    force_estimate_rmse: float = 0.0  # N
    pos_rmse_mm: float = 0.0
    pos_std_mm: float = 0.0
    settling_time_s: float = 0.0
    texture_frame_accuracy: Optional[float] = None
    texture_post_accuracy: Optional[float] = None
    contact_start_s: float = 0.0
    contact_end_s: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value is not None and value < 0.0:
                raise ValueError(f"{name} must be non-negative, got {value}")


def contact_window(logs: RunLogs) -> Tuple[int, int]:
    """Longest contiguous run of active force control, as [start, stop) rows."""
    active = logs.col("control", "lam") == 1.0
    if not np.any(active):
        raise NoContactWindowError("force control never activated")
    padded = np.concatenate([[False], active, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    starts, stops = edges[::2], edges[1::2]
    best = int(np.argmax(stops - starts))
    return int(starts[best]), int(stops[best])


def _texture_accuracies(texture: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    if len(texture) == 0:
        return None, None
    truth = texture[:, TEXTURE_COLS.index("truth")].astype(int)
    pred = texture[:, TEXTURE_COLS.index("pred")].astype(int)
    frame_acc = float(np.mean(pred == truth))
    contact = truth != 0
    if not np.any(contact):
        return frame_acc, None
    padded = np.concatenate([[False], contact, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    segments = list(zip(edges[::2], edges[1::2]))
    hits = sum(1 for a, b in segments if pred[b - 1] == truth[b - 1])
    return frame_acc, float(hits / len(segments))


def compute_metrics(logs: RunLogs, settle_tol: float = SETTLE_TOL) -> RunMetrics:
    """Force-tracking, station-keeping, and recognition metrics.

    Overshoot is max(F_true - F_ref) after the force first crosses the
    reference; undershoot is max(F_ref - F_true) after the first peak
    (the overshoot maximum), floored at zero.  Position errors are
    measured against the anchor frozen at contact onset, in mm.
    """
    i0, i1 = contact_window(logs)
    t = logs.col("control", "t")[i0:i1]
    f_n = logs.col("control", "f_true_z")[i0:i1]
    ref = float(logs.col("control", "f_ref")[i0])
    err = f_n - ref

    force_rmse = float(np.sqrt(np.mean(err**2)))
    crossings = np.flatnonzero(f_n >= ref)
    if len(crossings):
        c = crossings[0]
        overshoot = max(float(np.max(err[c:])), 0.0)
        peak = c + int(np.argmax(f_n[c:]))
        undershoot = max(float(np.max(ref - f_n[peak:])), 0.0)
    else:
        overshoot = 0.0
        undershoot = 0.0

    truth = logs.control[i0:i1, 8:11]
    fused = logs.estimator[i0:i1, 7:10]
    force_estimate_rmse = float(np.sqrt(np.mean((fused - truth) ** 2)))

    p = logs.control[i0:i1, 1:4]
    anchor = logs.control[i0, 15:18]
    pos_rmse_mm = float(np.sqrt(np.mean(np.sum((p - anchor) ** 2, axis=1)))) * 1000.0
    centered = p - p.mean(axis=0)
    pos_std_mm = float(np.sqrt(np.mean(np.sum(centered**2, axis=1)))) * 1000.0

    bad = np.abs(err) > settle_tol
    if not np.any(bad):
        settling = 0.0
    elif bad[-1]:
        settling = float(t[-1] - t[0])
    else:
        settling = float(t[int(np.flatnonzero(bad)[-1]) + 1] - t[0])

    frame_acc, post_acc = _texture_accuracies(logs.texture)
    return RunMetrics(
        force_rmse=force_rmse,
        force_overshoot=overshoot,
        force_undershoot=undershoot,
        force_estimate_rmse=force_estimate_rmse,
        pos_rmse_mm=pos_rmse_mm,
        pos_std_mm=pos_std_mm,
        settling_time_s=settling,
        texture_frame_accuracy=frame_acc,
        texture_post_accuracy=post_acc,
        contact_start_s=float(t[0]),
        contact_end_s=float(t[-1]),
    )


def station_metrics(logs: RunLogs) -> RunMetrics:
    """Metrics for a run that never engages the wall (hover / waypoint).

    Force metrics are zero by definition; position errors are measured
    against the commanded setpoint over the final phase of the flight.
    """
    phase = logs.col("control", "phase")
    rows = phase == phase[-1]
    p = logs.control[rows, 1:4]
    sp = logs.control[rows, 18:21]
    pos_rmse_mm = float(np.sqrt(np.mean(np.sum((p - sp) ** 2, axis=1)))) * 1000.0
    centered = p - p.mean(axis=0)
    pos_std_mm = float(np.sqrt(np.mean(np.sum(centered**2, axis=1)))) * 1000.0
    frame_acc, post_acc = _texture_accuracies(logs.texture)
    return RunMetrics(
        pos_rmse_mm=pos_rmse_mm,
        pos_std_mm=pos_std_mm,
        texture_frame_accuracy=frame_acc,
        texture_post_accuracy=post_acc,
    )


def run_metrics(logs: RunLogs) -> RunMetrics:
    """Contact metrics when the force controller ever engaged, station
    metrics otherwise."""
    try:
        return compute_metrics(logs)
    except NoContactWindowError:
        return station_metrics(logs)


def write_logs(logs: RunLogs, out_dir: str, metrics: Optional[RunMetrics] = None) -> None:
    """Emit the four CSV tables (and the metrics summary) into a directory.

    Floats print as %.17g, which round-trips float64 exactly: reading
    the CSVs back and recomputing metrics reproduces them bit for bit,
    and identical runs produce byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    for attr, (fname, cols) in _FILES.items():
        arr = getattr(logs, attr)
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for row in arr:
                fh.write(",".join("%.17g" % v for v in row) + "\n")
    if metrics is not None:
        payload = {
            "run": {"name": logs.name, "seed": logs.seed, "sensor_mode": logs.sensor_mode},
            "metrics": asdict(metrics),
        }
        with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_logs(run_dir: str) -> RunLogs:
    """Load a run directory written by write_logs."""
    tables = {}
    for attr, (fname, cols) in _FILES.items():
        path = os.path.join(run_dir, fname)
        with open(path, "r", encoding="utf-8") as fh:
            parts = fh.read().split("\n", 1)
        body = parts[1] if len(parts) > 1 else ""
        if body.strip():
            arr = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        else:
            arr = np.empty((0, len(cols)))  # a table with no rows is legitimate
        tables[attr] = arr.reshape(-1, len(cols))
    meta = {"name": "run", "seed": 0, "sensor_mode": "fused"}
    mpath = os.path.join(run_dir, "metrics.json")
    if os.path.exists(mpath):
        with open(mpath, "r", encoding="utf-8") as fh:
            meta.update(json.load(fh).get("run", {}))
    return RunLogs(
        tables["control"], tables["estimator"], tables["tactile"], tables["texture"],
        name=str(meta["name"]), seed=int(meta["seed"]), sensor_mode=str(meta["sensor_mode"]),
    )

"""Closed-loop mission runner: 1 kHz physics and control, 30 Hz tactile.

One run is a deterministic lockstep loop.  Each millisecond step, in
order: the tactile frame fires if due (marker field, feature, contact
detector, force regression, texture classification), the disturbance
and F/T measurement streams advance, the Kalman filter predicts and
absorbs whatever the sensor mode admits, the hybrid switch picks the
controller, the wrench is allocated, and the physics steps.  All
randomness comes from four named substreams of the scenario seed
(world disturbance, F/T noise, marker noise, pixel noise), drawn
unconditionally, so two runs differing only in sensor mode share the
same world and the same sensor realizations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .allocation import allocate, allocation_matrix
from .control import HybridConfig, Setpoint, feedback_linearize, force_wrench, hybrid_combine, motion_wrench, push_frame
from .dynamics import DivergenceError, SimState, VehicleParams, WallModel, contact_wrench, step
from .frames import Wrench, so3_exp
from .forceknn import KnnConfig, TrainingSet, generate_dataset, knn_estimate
from .fusion import ContactDetector, FusionState, kf_predict, kf_update, mean_marker_displacement
from .gelpad import GelPadModel, marker_displacements, render_tactile_image
from .metrics import RunLogs, RunMetrics, run_metrics
from .recognition import (
    ClassifierModel,
    ScoreState,
    accumulate,
    classify,
    confusion_matrix,
    contact_disk_mask,
    extract_descriptor,
    generate_texture_dataset,
    predict,
    train_classifier,
)
from .scenario import GotoPhase, PushPhase, Scenario
from .textures import TextureClass, synth_texture
from .tracking import feature_vector, track_markers

DT = 1e-3
FRAME_DT = 1.0 / 30.0
SCORE_RESET_S = 0.5  # s without contact before the texture evidence resets

_DATASET_CACHE: Dict[tuple, TrainingSet] = {}
_MODEL_CACHE: Dict[tuple, ClassifierModel] = {}


class MissionError(RuntimeError):
    """A phase failed its completion predicate within its timeout."""


def _pad_key(pad: GelPadModel) -> tuple:
    return (pad.rows, pad.cols, pad.pitch_mm, pad.c_n, pad.c_t, pad.rho, pad.sigma_m)


def load_force_model(scn: Scenario) -> Tuple[TrainingSet, KnnConfig]:
    """Training set + query config for the tactile force regressor.

    Generation is deterministic in (protocol, pad), so results are
    cached per process; repeated runs and mode sweeps pay once.
    """
    key = (scn.knn.n, scn.knn.seed) + _pad_key(scn.pad)
    if key not in _DATASET_CACHE:
        _DATASET_CACHE[key] = generate_dataset(scn.pad, n=scn.knn.n, seed=scn.knn.seed)
    return _DATASET_CACHE[key], KnnConfig(k=scn.knn.k, weighted=scn.knn.weighted)


def load_texture_model(scn: Scenario) -> ClassifierModel:
    """Texture classifier trained on the forward model (process-cached)."""
    tt = scn.texture_training
    key = (tt.per_class, tt.seed, tt.texture_seeds, tt.k_tex) + _pad_key(scn.pad) + (
        scn.pad.dot_depth, scn.pad.texture_gain, scn.pad.pixel_noise,
    )
    if key not in _MODEL_CACHE:
        desc, labels = generate_texture_dataset(
            scn.pad, per_class=tt.per_class, seed=tt.seed, texture_seeds=tt.texture_seeds
        )
        _MODEL_CACHE[key] = train_classifier(desc, labels, k_tex=tt.k_tex)
    return _MODEL_CACHE[key]


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (handles exactly-zero noise)."""
    w, v = np.linalg.eigh(np.asarray(mat, dtype=float))
    return v @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ v.T


def _align_rot(axis_from: np.ndarray, axis_to: np.ndarray) -> np.ndarray:
    """Minimal rotation taking one unit vector onto another."""
    a = axis_from / np.linalg.norm(axis_from)
    b = axis_to / np.linalg.norm(axis_to)
    cross = np.cross(a, b)
    s, c = float(np.linalg.norm(cross)), float(a @ b)
    if s < 1e-12:
        return np.eye(3) if c > 0.0 else so3_exp(np.pi * _any_orthogonal(a))
    return so3_exp(np.arctan2(s, c) * cross / s)


def _any_orthogonal(a: np.ndarray) -> np.ndarray:
    seed = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    out = np.cross(a, seed)
    return out / np.linalg.norm(out)


@dataclass
class _PhaseRun:
    """Execution state of the active phase."""

    phase: object
    setpoint: Setpoint
    start_k: int
    timeout_steps: int
    need_steps: int
    counter: int = 0  # consecutive in-tolerance steps (goto) or contact steps (push)


def _face_wall_attitude(wall: Optional[WallModel], params: VehicleParams) -> np.ndarray:
    if wall is None:
        return np.eye(3)
    tool_axis_body = params.rot_be @ np.array([0.0, 0.0, 1.0])
    return _align_rot(tool_axis_body, -wall.normal)


def _begin_phase(phase, k: int, hold: np.ndarray, wall: Optional[WallModel], params: VehicleParams) -> _PhaseRun:
    rot_d = _face_wall_attitude(wall, params)
    if isinstance(phase, GotoPhase):
        sp = Setpoint(position=phase.position, rot=rot_d)
        need = max(1, int(round(phase.dwell_s / DT)))
    else:
        push_dir = -wall.normal
        tip_at_hold = hold + rot_d @ params.r_tool
        gap = float((wall.point - tip_at_hold) @ push_dir)
        sp = Setpoint(position=hold + (gap + phase.bias_m) * push_dir, rot=rot_d)
        need = int(round(phase.duration_s / DT))
    return _PhaseRun(
        phase=phase,
        setpoint=sp,
        start_k=k,
        timeout_steps=int(round(phase.timeout_s / DT)),
        need_steps=need,
    )


def run_scenario(
    scn: Scenario,
    image_path: Optional[bool] = None,
    frame_sink=None,
) -> Tuple[RunLogs, RunMetrics]:
    """Fly one scenario and return its logs and metrics.

    ``image_path`` overrides the scenario flag: when true, tactile
    features come from rendering each frame and re-tracking the dots
    instead of reading the marker field directly.  ``frame_sink``, if
    given, receives (frame_index, TactileImage) for every rendered
    frame.  Raises MissionError when a phase cannot complete and
    re-raises simulator divergence with run context attached.
    """
    params, wall, pad = scn.vehicle, scn.wall, scn.pad
    use_images = scn.image_path if image_path is None else image_path
    use_ft = scn.sensor_mode in ("ft-only", "fused")
    use_tac = scn.sensor_mode in ("tactile-only", "fused")

    ou_rng = np.random.default_rng([scn.seed, 0])
    ft_rng = np.random.default_rng([scn.seed, 1])
    marker_rng = np.random.default_rng([scn.seed, 2])
    pixel_rng = np.random.default_rng([scn.seed, 3])

    train, knn_cfg = load_force_model(scn)
    has_textures = any(isinstance(p, PushPhase) and p.texture is not None for p in scn.phases)
    model = load_texture_model(scn) if has_textures else None
    texture_maps: Dict[int, Optional[np.ndarray]] = {}
    for i, phase in enumerate(scn.phases):
        if isinstance(phase, PushPhase) and phase.texture is not None:
            texture_maps[i] = synth_texture(phase.texture, phase.texture_seed, pad)
        else:
            texture_maps[i] = None

    rot_iw = push_frame(wall.normal) if wall is not None else np.eye(3)
    f_ref = np.array([0.0, 0.0, scn.force_ref])
    alloc_inv = np.linalg.inv(allocation_matrix(params))
    sqrt_rft = _psd_sqrt(scn.noise.r_ft)
    ft_tau = scn.disturbance.ft_tau_s
    ft_decay = float(np.exp(-DT / ft_tau)) if ft_tau > 0.0 else 0.0
    ft_drive = sqrt_rft * np.sqrt(max(0.0, 1.0 - ft_decay**2))
    ft_err = np.zeros(3)
    ft_bias = np.array([0.0, 0.0, scn.disturbance.ft_bias_n])
    ou_decay = float(np.exp(-DT / scn.disturbance.tau_s))
    ou_drive = np.array([scn.disturbance.sigma_force] * 3 + [scn.disturbance.sigma_torque] * 3)
    ou_drive = ou_drive * np.sqrt(max(0.0, 1.0 - ou_decay**2))
    central = pad.central_indices()

    state = SimState.at_rest(scn.start_position, rot=_face_wall_attitude(wall, params))
    kf = FusionState()
    detector = ContactDetector()
    score = ScoreState()
    integral = np.zeros(3)
    lam = 0.0
    op_pos = np.zeros(3)
    engaged = False
    ou = np.zeros(6)
    f_tac_w = np.zeros(3)
    last_engaged_tf = -np.inf
    prev_field = None
    ref_image = None
    if use_images:
        rest = marker_displacements(Wrench.zero("E"), replace(pad, sigma_m=0.0), np.zeros(2))
        ref_image = render_tactile_image(rest, None, pad)

    cap = int(round(scn.duration_s / DT)) + 8
    ctl = np.empty((cap, 23))
    est = np.empty((cap, 13))
    tac_rows: List[list] = []
    tex_rows: List[list] = []

    hold = scn.start_position.copy()
    phase_idx = 0
    cur = _begin_phase(scn.phases[0], 0, hold, wall, params)
    frame_idx = 0
    k = 0

    while phase_idx < len(scn.phases):
        if k >= cap:
            raise MissionError(f"scenario {scn.name!r}: ran past the summed phase timeouts")
        t = k * DT
        cw = contact_wrench(state, wall, params) if wall is not None else Wrench.zero("B")
        f_push_body = -cw.force  # tool-on-wall reaction, body frame
        f_true_w = rot_iw.T @ (state.rot @ f_push_body)

        frame_fired = t + 1e-9 >= frame_idx * FRAME_DT
        if frame_fired:
            tf = frame_idx * FRAME_DT
            f_pad_e = params.rot_be.T @ f_push_body
            f_pad_e[2] = max(f_pad_e[2], 0.0)
            field = marker_displacements(Wrench(f_pad_e, np.zeros(3), "E"), pad, np.zeros(2), rng=marker_rng)
            field.t = tf

            active_map = texture_maps[phase_idx]
            image = None
            if use_images or model is not None:
                image = render_tactile_image(field, active_map, pad, rng=pixel_rng)
                if frame_sink is not None:
                    frame_sink(frame_idx, image)
            if use_images:
                tracked = track_markers(ref_image, image, pad, prior=prev_field)
                prev_field = tracked
                feature = feature_vector(tracked, pad)
            else:
                feature = field.displacement[central].ravel()

            engaged = detector.update(feature)
            f_tac_e = knn_estimate(feature, train, knn_cfg)
            f_tac_w = rot_iw.T @ (state.rot @ (params.rot_be @ f_tac_e))
            tac_rows.append([tf, mean_marker_displacement(feature), float(engaged), *f_tac_e, *f_tac_w])

            if model is not None:
                if engaged:
                    last_engaged_tf = tf
                elif score.k > 0 and tf - last_engaged_tf > SCORE_RESET_S:
                    score = ScoreState()
                mask = contact_disk_mask(pad, np.zeros(2), float(f_tac_e[2])) if engaged else None
                p_vec = classify(extract_descriptor(image, mask), model)
                score = accumulate(score, p_vec)
                if engaged and isinstance(cur.phase, PushPhase):
                    truth = int(cur.phase.texture) if cur.phase.texture is not None else int(TextureClass.PRINTED_FLAT_PAPER)
                elif engaged and phase_idx > 0 and isinstance(scn.phases[phase_idx - 1], PushPhase):
                    prev_push = scn.phases[phase_idx - 1]
                    truth = int(prev_push.texture) if prev_push.texture is not None else int(TextureClass.PRINTED_FLAT_PAPER)
                else:
                    truth = int(TextureClass.NON_CONTACT)
                tex_rows.append([tf, float(truth), float(engaged), *p_vec, *score.scores, float(predict(score))])
            frame_idx += 1

        ou = ou_decay * ou + ou_drive * ou_rng.standard_normal(6)
        ft_err = ft_decay * ft_err + ft_drive @ ft_rng.standard_normal(3)
        f_ft = f_true_w + ft_bias + ft_err
        kf = kf_predict(kf, scn.noise, DT)
        if use_ft:
            kf = kf_update(kf, f_ft, "ft", scn.noise)
        if frame_fired and use_tac:
            kf = kf_update(kf, f_tac_w, "tac", scn.noise)

        is_push = isinstance(cur.phase, PushPhase)
        want_force = engaged and is_push
        if want_force and lam == 0.0:
            op_pos = state.p.copy()
            integral = np.zeros(3)
        lam = 1.0 if want_force else 0.0

        tau_p = motion_wrench(state, cur.setpoint, scn.motion_gains, params)
        if lam == 1.0:
            cfg = HybridConfig(rot_iw, f_ref, rot_be=params.rot_be, lam=1.0, operating_position=op_pos)
            tau_f, integral, _ = force_wrench(kf.force, cfg, scn.force_gains, state, integral, DT)
            tau = hybrid_combine(tau_p, tau_f, cfg)
        else:
            tau = tau_p
        tau_rotor = feedback_linearize(tau, state, params)
        thrusts, _, saturated = allocate(tau_rotor, params, alloc_inv)

        v_inertial = state.rot @ state.v[:3]
        ctl[k] = (
            t, state.p[0], state.p[1], state.p[2],
            v_inertial[0], v_inertial[1], v_inertial[2], lam,
            f_true_w[0], f_true_w[1], f_true_w[2], scn.force_ref,
            kf.force[0], kf.force[1], kf.force[2],
            op_pos[0], op_pos[1], op_pos[2],
            cur.setpoint.position[0], cur.setpoint.position[1], cur.setpoint.position[2],
            float(saturated), float(phase_idx),
        )
        est[k] = (
            t, f_ft[0], f_ft[1], f_ft[2], f_tac_w[0], f_tac_w[1], f_tac_w[2],
            kf.force[0], kf.force[1], kf.force[2], kf.cov[0, 0], kf.cov[1, 1], kf.cov[2, 2],
        )

        try:
            state = step(state, thrusts, wall, params, DT, extra_wrench=ou)
        except DivergenceError as exc:
            raise DivergenceError(
                f"scenario {scn.name!r} seed {scn.seed} phase {phase_idx} ({type(cur.phase).__name__}): {exc}"
            ) from exc
        k += 1

        if is_push:
            if lam == 1.0:
                cur.counter += 1
        else:
            tol = cur.phase.tolerance_mm * 1e-3
            if float(np.linalg.norm(state.p - cur.phase.position)) <= tol:
                cur.counter += 1
            else:
                cur.counter = 0
        if cur.counter >= cur.need_steps:
            if isinstance(cur.phase, GotoPhase):
                hold = cur.phase.position.copy()
            phase_idx += 1
            if phase_idx < len(scn.phases):
                cur = _begin_phase(scn.phases[phase_idx], k, hold, wall, params)
        elif k - cur.start_k > cur.timeout_steps:
            kind = "push" if is_push else "goto"
            raise MissionError(
                f"scenario {scn.name!r} seed {scn.seed}: {kind} phase {phase_idx} "
                f"timed out at t={k * DT:.3f} s (progress {cur.counter}/{cur.need_steps} steps)"
            )

    logs = RunLogs(
        ctl[:k], est[:k],
        np.asarray(tac_rows, dtype=float).reshape(-1, 9),
        np.asarray(tex_rows, dtype=float).reshape(-1, 18),
        name=scn.name, seed=scn.seed, sensor_mode=scn.sensor_mode,
    )
    return logs, run_metrics(logs)


def compare_sensor_modes(scn: Scenario, image_path: Optional[bool] = None):
    """Run the same mission once per sensor mode.

    All four random streams derive from the same scenario seed, so the
    three runs share one world-disturbance realization and one
    realization of each sensor's noise; only what the filter consumes
    differs.  Returns {mode: (logs, metrics)} in a fixed order.
    """
    out = {}
    for mode in ("ft-only", "tactile-only", "fused"):
        out[mode] = run_scenario(replace(scn, sensor_mode=mode), image_path=image_path)
    return out


def texture_flight(scn: Scenario, image_path: Optional[bool] = None, frame_sink=None):
    """Fly a texture-sequence mission and summarize recognition.

    Returns (logs, metrics, confusion, segments) where confusion is the
    per-frame truth-vs-prediction matrix and segments lists one
    (texture, final prediction, correct) triple per contact engagement.
    """
    if not scn.texture_sequence():
        raise MissionError("texture flight needs at least one push phase with a texture")
    logs, metrics = run_scenario(scn, image_path=image_path, frame_sink=frame_sink)
    tex = logs.texture
    truth = tex[:, 1].astype(int)
    pred = tex[:, 17].astype(int)
    conf = confusion_matrix(truth, pred)
    segments = []
    contact = truth != 0
    padded = np.concatenate([[False], contact, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    for a, b in zip(edges[::2], edges[1::2]):
        segments.append((TextureClass(truth[b - 1]), TextureClass(pred[b - 1]), bool(pred[b - 1] == truth[b - 1])))
    return logs, metrics, conf, segments

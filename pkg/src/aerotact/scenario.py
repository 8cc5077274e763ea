"""Mission configuration: phase scripts, scenario schema, strict loading.

A scenario is the complete recipe for one closed-loop run: vehicle,
wall, pad, noise levels, gains, sensor mode, and an ordered list of
flight phases.  Config files are YAML mappings carrying a mandatory
``schema_version``; every mapping level is checked against its schema
and unknown keys raise ConfigError, so typos fail loudly instead of
silently running defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .control import ForceGains, MotionGains
from .dynamics import VehicleParams, WallModel
from .fusion import NoiseConfig
from .gelpad import GelPadModel
from .textures import TextureClass

SCHEMA_VERSION = 1
SENSOR_MODES = ("ft-only", "tactile-only", "fused")


class ConfigError(ValueError):
    """A scenario description failed validation."""


@dataclass
class DisturbanceConfig:
    """Colored disturbances: world turbulence and F/T sensor corruption.

    Wind and unmodeled drag act as a body wrench whose axes are
    Ornstein-Uhlenbeck processes with stationary standard deviation
    ``sigma_force`` / ``sigma_torque`` and correlation time ``tau_s``;
    zero sigmas give a disturbance-free run.

    ``ft_tau_s`` shapes the F/T sensor error in time.  At 0 the error
    is white, sample covariance R_ft.  Positive values make it an
    Ornstein-Uhlenbeck process with the same marginal covariance R_ft:
    a base-mounted sensor reads the contact force through the arm, so
    vibration and inertial coupling show up as slowly varying error
    rather than independent per-sample noise, and high rate alone no
    longer averages it away.

    ``ft_bias_n`` adds a constant offset to the wall-normal component
    of the F/T reading, the signature of a miscalibrated or
    arm-loaded base sensor.  Unlike the zero-mean terms above it never
    averages out, so it sets where a force loop fed by this channel
    actually settles.
    """

    sigma_force: float = 0.15  # N per axis
    sigma_torque: float = 0.01  # N m per axis
    tau_s: float = 0.3  # s
    ft_tau_s: float = 0.0  # s, 0 = white F/T error
    ft_bias_n: float = 0.0  # N along the wall normal

    def __post_init__(self):
        if self.sigma_force < 0.0 or self.sigma_torque < 0.0:
            raise ConfigError("disturbance sigmas must be non-negative")
        if self.tau_s <= 0.0:
            raise ConfigError("disturbance correlation time must be positive")
        if self.ft_tau_s < 0.0:
            raise ConfigError("ft_tau_s must be non-negative")


@dataclass
class KnnSettings:
    """Training protocol for the tactile force regressor."""

    n: int = 10000
    seed: int = 1
    k: int = 50
    weighted: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("knn training size must be at least 1")
        if not 1 <= self.k <= self.n:
            raise ConfigError("knn k must satisfy 1 <= k <= n")


@dataclass
class TextureTraining:
    """Training protocol for the texture classifier."""

    per_class: int = 300
    seed: int = 0
    texture_seeds: int = 10
    k_tex: int = 5

    def __post_init__(self):
        if self.per_class < self.k_tex:
            raise ConfigError("need at least k_tex exemplars per class")
        if self.texture_seeds < 1:
            raise ConfigError("texture_seeds must be at least 1")


@dataclass
class GotoPhase:
    """Fly to a waypoint and hold until settled.

    Completes once the vehicle stays within ``tolerance_mm`` of the
    target for ``dwell_s`` of contiguous time.  Exceeding ``timeout_s``
    aborts the run: a mission that cannot reach its waypoint is a
    configuration problem, not something to paper over.
    """

    position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    tolerance_mm: float = 20.0
    dwell_s: float = 0.5
    timeout_s: float = 15.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.position)):
            raise ConfigError("goto position must be finite")
        if self.tolerance_mm <= 0.0:
            raise ConfigError("goto tolerance must be positive")
        if self.dwell_s < 0.0 or self.timeout_s <= 0.0:
            raise ConfigError("goto dwell must be >= 0 and timeout > 0")


@dataclass
class PushPhase:
    """Press the tool against the wall and hold a normal-force reference.

    The wall-axis setpoint is biased ``bias_m`` beyond the surface so
    the motion controller builds enough contact force to trip the
    tactile detector; the force loop then owns the wall axis.  The
    phase completes after ``duration_s`` of accumulated contact time
    and aborts at ``timeout_s`` if contact never establishes.
    ``texture`` optionally names the wall covering felt by the pad.
    """

    duration_s: float = 10.0
    bias_m: float = 0.5
    texture: Optional[TextureClass] = None
    texture_seed: int = 100
    timeout_s: Optional[float] = None

    def __post_init__(self):
        if self.duration_s <= 0.0:
            raise ConfigError("push duration must be positive")
        if self.bias_m <= 0.0:
            raise ConfigError("push bias must be positive")
        if self.texture is not None:
            self.texture = TextureClass(self.texture)
            if self.texture == TextureClass.NON_CONTACT:
                raise ConfigError("push texture cannot be the no-contact class")
        if self.timeout_s is None:
            self.timeout_s = self.duration_s + 20.0
        if self.timeout_s < self.duration_s:
            raise ConfigError("push timeout must cover the required duration")


Phase = Union[GotoPhase, PushPhase]


@dataclass
class Scenario:
    """Everything one deterministic closed-loop run needs."""

    name: str = "run"
    seed: int = 0
    sensor_mode: str = "fused"
    force_ref: float = 5.0  # N, commanded push along the wall normal
    start_position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    image_path: bool = False
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    wall: Optional[WallModel] = field(default_factory=WallModel)
    pad: GelPadModel = field(default_factory=GelPadModel)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    motion_gains: MotionGains = field(default_factory=MotionGains)
    force_gains: ForceGains = field(default_factory=ForceGains)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    knn: KnnSettings = field(default_factory=KnnSettings)
    texture_training: TextureTraining = field(default_factory=TextureTraining)
    phases: Tuple[Phase, ...] = ()

    def __post_init__(self):
        self.start_position = np.asarray(self.start_position, dtype=float).reshape(3)
        if self.sensor_mode not in SENSOR_MODES:
            raise ConfigError(f"sensor_mode must be one of {SENSOR_MODES}, got {self.sensor_mode!r}")
        if self.force_ref < 0.0:
            raise ConfigError("force_ref must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not self.phases:
            raise ConfigError("scenario needs at least one phase")
        self.phases = tuple(self.phases)
        if any(isinstance(p, PushPhase) for p in self.phases) and self.wall is None:
            raise ConfigError("push phases need a wall")

    @property
    def duration_s(self) -> float:
        """Upper bound on mission length: the sum of phase timeouts."""
        return float(sum(p.timeout_s for p in self.phases))

    def texture_sequence(self) -> Tuple[TextureClass, ...]:
        return tuple(p.texture for p in self.phases if isinstance(p, PushPhase) and p.texture is not None)


def _check_keys(mapping: dict, allowed: Sequence[str], ctx: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {ctx}: {', '.join(unknown)}")


def _section(cls, mapping: Optional[dict], ctx: str, scalars: Sequence[str]):
    """Build a config dataclass from a mapping of scalar overrides."""
    if mapping is None:
        return cls()
    if not isinstance(mapping, dict):
        raise ConfigError(f"{ctx} must be a mapping")
    _check_keys(mapping, scalars, ctx)
    try:
        return cls(**mapping)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad {ctx}: {exc}") from exc


def _vector(value, n: int, ctx: str) -> np.ndarray:
    try:
        vec = np.asarray(value, dtype=float).reshape(n)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{ctx} must be a {n}-vector") from exc
    if not np.all(np.isfinite(vec)):
        raise ConfigError(f"{ctx} must be finite")
    return vec


def _parse_vehicle(mapping: Optional[dict]) -> VehicleParams:
    if mapping is None:
        return VehicleParams()
    if not isinstance(mapping, dict):
        raise ConfigError("vehicle must be a mapping")
    allowed = (
        "mass", "inertia_diag", "arm_length", "tilt_angle_deg",
        "k_f", "k_m_over_k_f", "rotor_speed_min", "rotor_speed_max", "tool_length",
    )
    _check_keys(mapping, allowed, "vehicle")
    kwargs = {}
    for key in ("mass", "arm_length", "k_f", "k_m_over_k_f", "rotor_speed_min", "rotor_speed_max"):
        if key in mapping:
            kwargs[key] = float(mapping[key])
    if "inertia_diag" in mapping:
        kwargs["inertia"] = np.diag(_vector(mapping["inertia_diag"], 3, "vehicle.inertia_diag"))
    if "tilt_angle_deg" in mapping:
        kwargs["tilt_angle"] = float(np.deg2rad(float(mapping["tilt_angle_deg"])))
    if "tool_length" in mapping:
        kwargs["r_tool"] = np.array([float(mapping["tool_length"]), 0.0, 0.0])
    try:
        return VehicleParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad vehicle: {exc}") from exc


def _parse_wall(mapping) -> Optional[WallModel]:
    if mapping is None:
        return None
    if not isinstance(mapping, dict):
        raise ConfigError("wall must be a mapping or null")
    allowed = ("point", "normal", "stiffness", "damping", "friction")
    _check_keys(mapping, allowed, "wall")
    kwargs = {}
    if "point" in mapping:
        kwargs["point"] = _vector(mapping["point"], 3, "wall.point")
    if "normal" in mapping:
        kwargs["normal"] = _vector(mapping["normal"], 3, "wall.normal")
    for key in ("stiffness", "damping", "friction"):
        if key in mapping:
            kwargs[key] = float(mapping[key])
    try:
        return WallModel(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad wall: {exc}") from exc


def _parse_phase(mapping: dict, index: int) -> Phase:
    if not isinstance(mapping, dict):
        raise ConfigError(f"phase {index} must be a mapping")
    kind = mapping.get("type")
    ctx = f"phase {index} ({kind})"
    if kind == "goto":
        _check_keys(mapping, ("type", "position", "tolerance_mm", "dwell_s", "timeout_s"), ctx)
        if "position" not in mapping:
            raise ConfigError(f"{ctx} needs a position")
        kwargs = {"position": _vector(mapping["position"], 3, f"{ctx}.position")}
        for key in ("tolerance_mm", "dwell_s", "timeout_s"):
            if key in mapping:
                kwargs[key] = float(mapping[key])
        return GotoPhase(**kwargs)
    if kind == "push":
        _check_keys(mapping, ("type", "duration_s", "bias_m", "texture", "texture_seed", "timeout_s"), ctx)
        kwargs = {}
        for key in ("duration_s", "bias_m", "timeout_s"):
            if key in mapping:
                kwargs[key] = float(mapping[key])
        if "texture_seed" in mapping:
            kwargs["texture_seed"] = int(mapping["texture_seed"])
        if mapping.get("texture") is not None:
            name = str(mapping["texture"]).upper()
            try:
                kwargs["texture"] = TextureClass[name]
            except KeyError:
                choices = ", ".join(t.name for t in list(TextureClass)[1:])
                raise ConfigError(f"{ctx}: unknown texture {name!r} (choices: {choices})") from None
        return PushPhase(**kwargs)
    raise ConfigError(f"phase {index}: type must be 'goto' or 'push', got {kind!r}")


_TOP_KEYS = (
    "schema_version", "name", "seed", "sensor_mode", "force_ref", "start_position",
    "image_path", "vehicle", "wall", "pad", "noise", "motion_gains", "force_gains",
    "disturbance", "knn", "texture_training", "phases",
)

_PAD_KEYS = (
    "pitch_mm", "rows", "cols", "tracked_count", "image_width", "image_height",
    "px_per_mm", "c_n", "c_t", "rho", "sigma_m", "dot_sigma_px", "dot_depth",
    "texture_gain", "disk_coeff", "pixel_noise",
)


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a parsed config mapping and build the Scenario."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, _TOP_KEYS, "config root")
    if "schema_version" not in raw:
        raise ConfigError("config needs a schema_version")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version {raw['schema_version']!r} not supported (this build reads {SCHEMA_VERSION})"
        )
    if "phases" not in raw or not isinstance(raw["phases"], list) or not raw["phases"]:
        raise ConfigError("config needs a non-empty phases list")

    kwargs = {
        "phases": tuple(_parse_phase(p, i) for i, p in enumerate(raw["phases"])),
        "vehicle": _parse_vehicle(raw.get("vehicle")),
        "pad": _section(GelPadModel, raw.get("pad"), "pad", _PAD_KEYS),
        "noise": _section(NoiseConfig, raw.get("noise"), "noise", ("q", "r_ft", "r_tac")),
        "motion_gains": _section(MotionGains, raw.get("motion_gains"), "motion_gains", ("kp", "kv", "kr", "komega")),
        "force_gains": _section(
            ForceGains, raw.get("force_gains"), "force_gains",
            ("ksp", "ksd", "kfp", "kfi", "integral_clamp", "mass_ratio"),
        ),
        "disturbance": _section(
            DisturbanceConfig, raw.get("disturbance"), "disturbance",
            ("sigma_force", "sigma_torque", "tau_s", "ft_tau_s", "ft_bias_n"),
        ),
        "knn": _section(KnnSettings, raw.get("knn"), "knn", ("n", "seed", "k", "weighted")),
        "texture_training": _section(
            TextureTraining, raw.get("texture_training"), "texture_training",
            ("per_class", "seed", "texture_seeds", "k_tex"),
        ),
    }
    if "wall" in raw:
        kwargs["wall"] = _parse_wall(raw["wall"])
    if "name" in raw:
        kwargs["name"] = str(raw["name"])
    if "seed" in raw:
        kwargs["seed"] = int(raw["seed"])
    if "sensor_mode" in raw:
        kwargs["sensor_mode"] = str(raw["sensor_mode"])
    if "force_ref" in raw:
        kwargs["force_ref"] = float(raw["force_ref"])
    if "start_position" in raw:
        kwargs["start_position"] = _vector(raw["start_position"], 3, "start_position")
    if "image_path" in raw:
        if not isinstance(raw["image_path"], bool):
            raise ConfigError("image_path must be a boolean")
        kwargs["image_path"] = raw["image_path"]
    return Scenario(**kwargs)


def load_scenario(path: str) -> Scenario:
    """Read and validate a YAML scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return scenario_from_dict(raw)


def hover_scenario(seed: int = 0, duration_s: float = 10.0) -> Scenario:
    """Wall-free hover hold: the controller keeps station in turbulence."""
    return Scenario(
        name="hover",
        seed=seed,
        wall=None,
        phases=(
            GotoPhase(
                position=np.array([0.0, 0.0, 1.0]),
                tolerance_mm=1000.0,
                dwell_s=duration_s,
                timeout_s=duration_s + 1e-3,
            ),
        ),
    )


def nominal_push_scenario(
    seed: int = 0,
    sensor_mode: str = "fused",
    push_s: float = 16.0,
    texture: Optional[TextureClass] = None,
) -> Scenario:
    """Approach the wall, push at the force reference, retreat."""
    approach = np.array([0.46, 0.0, 1.0])
    return Scenario(
        name="push",
        seed=seed,
        sensor_mode=sensor_mode,
        phases=(
            GotoPhase(position=approach, tolerance_mm=25.0, dwell_s=0.4, timeout_s=12.0),
            PushPhase(duration_s=push_s, texture=texture),
            GotoPhase(position=np.array([0.2, 0.0, 1.0]), tolerance_mm=60.0, dwell_s=0.2, timeout_s=12.0),
        ),
    )


def comparison_scenario(seed: int = 0, push_s: float = 12.0) -> Scenario:
    """Push mission tuned so sensor quality decides the metrics.

    The wall is genuinely compliant, so where the force loop settles
    becomes position error at 1/150 m per N, and each sensor channel
    carries a systematic error of opposite sign: the base-mounted F/T
    sensor reads the contact through the arm and over-reports the
    push force, while the tactile regressor smooths toward its
    training mass and under-reports it.  Either channel alone parks
    the vehicle a couple of millimetres off the contact depth; fused,
    the two offsets largely cancel.  Per-sample F/T noise is matched
    in information rate to the tactile channel (1000/27 vs 30/0.81
    per N^2 s), so neither stream dominates the filter.  A gentle
    engagement (short tip gap, small setpoint bias, light wall
    damping) ramps the contact force slowly through the detector
    threshold, so the frozen operating position lands near the steady
    push depth instead of at the surface where an impact spike would
    put it.
    """
    approach = np.array([0.495, 0.0, 1.0])
    return Scenario(
        name="compare",
        seed=seed,
        force_ref=1.9,
        start_position=np.array([0.48, 0.0, 1.0]),
        wall=WallModel(stiffness=150.0, damping=16.0),
        noise=NoiseConfig(r_ft=27.0),
        motion_gains=MotionGains(kv=30.0),
        disturbance=DisturbanceConfig(sigma_force=0.01, sigma_torque=0.002, ft_bias_n=0.35),
        phases=(
            GotoPhase(position=approach, tolerance_mm=2.5, dwell_s=0.4, timeout_s=20.0),
            PushPhase(duration_s=push_s, bias_m=0.27),
            GotoPhase(position=np.array([0.47, 0.0, 1.0]), tolerance_mm=50.0, dwell_s=0.2, timeout_s=10.0),
        ),
    )


def noise_free_scenario(seed: int = 0, push_s: float = 8.0) -> Scenario:
    """Push mission with both sensors essentially exact.

    Marker noise, wind, and measurement covariances all go to (near)
    zero and the force regressor trains on a dense noiseless set, so
    every sensor mode sees the same true force and the three runs
    agree to well under a percent on the regulation metrics.  The
    contact itself is kept passive: a stiff, heavily damped wall, a
    force reference below the engagement force, and weak force-loop
    corrections mean the window is dominated by shared rigid-body
    physics rather than by how fast each sensor channel can react.
    """
    approach = np.array([0.495, 0.0, 1.0])
    return Scenario(
        name="noise-free",
        seed=seed,
        force_ref=2.0,
        start_position=np.array([0.48, 0.0, 1.0]),
        pad=GelPadModel(sigma_m=0.0),
        wall=WallModel(stiffness=5000.0, damping=400.0),
        noise=NoiseConfig(r_ft=1e-12, r_tac=1e-12),
        motion_gains=MotionGains(kv=30.0),
        force_gains=ForceGains(kfp=0.01, kfi=0.1),
        disturbance=DisturbanceConfig(sigma_force=0.0, sigma_torque=0.0),
        knn=KnnSettings(n=40000, seed=1, k=5),
        phases=(
            GotoPhase(position=approach, tolerance_mm=2.5, dwell_s=0.4, timeout_s=20.0),
            PushPhase(duration_s=push_s, bias_m=0.25),
            GotoPhase(position=np.array([0.47, 0.0, 1.0]), tolerance_mm=50.0, dwell_s=0.2, timeout_s=10.0),
        ),
    )


def texture_flight_scenario(
    textures: Sequence[TextureClass],
    seed: int = 0,
    passes: int = 2,
    contact_s: float = 10.05,
    texture_seed: int = 100,
) -> Scenario:
    """One continuous flight engaging each texture ``passes`` times.

    Each engagement must be one unbroken detector segment, so the wall
    is heavily damped (no restitution bounce at touch-down) and the
    capture starts from a near-settled hover a few mm out.  Retreats
    break contact for well over the accumulator reset gap before the
    next texture.  The force table is kept small: contact-force
    accuracy is not what this flight measures.
    """
    textures = [TextureClass(t) for t in textures]
    if not textures:
        raise ConfigError("need at least one texture")
    if any(t == TextureClass.NON_CONTACT for t in textures):
        raise ConfigError("cannot fly against the no-contact class")
    approach = np.array([0.492, 0.0, 1.0])
    retreat = np.array([0.47, 0.0, 1.0])
    phases: list = []
    for _ in range(passes):
        for tex in textures:
            phases.append(GotoPhase(position=approach, tolerance_mm=15.0, dwell_s=0.25, timeout_s=12.0))
            phases.append(PushPhase(duration_s=contact_s, bias_m=0.3, texture=tex, texture_seed=texture_seed))
            phases.append(GotoPhase(position=retreat, tolerance_mm=30.0, dwell_s=0.8, timeout_s=12.0))
    return Scenario(
        name="texture-flight",
        seed=seed,
        start_position=np.array([0.46, 0.0, 1.0]),
        wall=WallModel(damping=400.0),
        knn=KnnSettings(n=2500, seed=1),
        phases=tuple(phases),
    )

"""Image-based visual servoing and the automatic box-pickup state machine.

The control core is the classic 2x6 interaction matrix mapping camera twist
(v_x, v_y, v_z, w_x, w_y, w_z) to normalized feature velocity, inverted with
a Moore-Penrose right inverse. Depth enters the matrix from the measured tag
size each update rather than a fixed approximation.

The pickup runs in three phases: navigate until the tag sits on the vertical
center line at the calibrated size, adjust body height until it is vertically
centered too, then commit to a fixed dual-arm grasp script. Once committed
the motion is open loop; moving the box mid-script produces an honest
failure, not a chase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .vision import CameraModel, TagObservation, depth_from_size


class InvalidDepth(ValueError):
    """Interaction matrix requested for a non-positive depth."""


class DegenerateInteraction(ValueError):
    """Interaction matrix lost row rank; caller should hold its last command."""


def interaction_matrix(x: float, y: float, Z: float) -> np.ndarray:
    """Closed-form 2x6 image Jacobian at normalized point (x, y), depth Z."""
    if Z <= 0.0:
        raise InvalidDepth(f"depth must be positive, got {Z}")
    return np.array([
        [-1.0 / Z, 0.0, x / Z, x * y, -(1.0 + x * x), y],
        [0.0, -1.0 / Z, y / Z, 1.0 + y * y, -x * y, -x],
    ])


def pseudo_inverse(L: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of a full-row-rank wide matrix.

    Computed as the right inverse L^T (L L^T)^-1; the 2x2 Gram matrix keeps
    this numerically tame, unlike the textbook left form whose 6x6 Gram is
    singular for a 2x6 input.
    """
    L = np.asarray(L, dtype=float)
    gram = L @ L.T
    w = np.linalg.eigvalsh(gram)
    if not np.all(np.isfinite(gram)) or w[0] <= 1e-12 * max(w[-1], 1e-30):
        raise DegenerateInteraction("interaction matrix is rank deficient")
    return L.T @ np.linalg.inv(gram)


@dataclass(frozen=True)
class FeatureError:
    """Normalized feature error e = s - s_star at measured depth Z."""

    s: tuple[float, float]
    s_star: tuple[float, float]
    Z: float

    @property
    def e(self) -> tuple[float, float]:
        return (self.s[0] - self.s_star[0], self.s[1] - self.s_star[1])


@dataclass(frozen=True)
class RobotEffort:
    forward: float = 0.0
    yaw_rate: float = 0.0
    height_rate: float = 0.0


@dataclass
class ServoLimits:
    v_max: float = 0.4
    yaw_max: float = 1.0
    height_rate_max: float = 0.1


def control_law(err: FeatureError, lam: float,
                limits: ServoLimits | None = None) -> tuple[np.ndarray, np.ndarray, RobotEffort]:
    """Camera twist v_c = -lam L+ e, robot effort v_s = -v_c, and the
    projection of v_s onto the three actuated degrees of freedom.

    Camera axes: x right, y down, z forward. The robot realizes the camera
    twist, so the actuated components are forward = -v_s_z, yaw = +v_s_wy
    (camera y points down, world yaw axis points up) and height = +v_s_vy,
    each clamped to actuator limits.
    """
    if lam <= 0.0:
        raise ValueError("gain must be positive")
    lim = limits or ServoLimits()
    L = interaction_matrix(err.s[0], err.s[1], err.Z)
    v_c = -lam * (pseudo_inverse(L) @ np.asarray(err.e))
    v_s = -v_c
    if not np.all(np.isfinite(v_s)):
        raise DegenerateInteraction("twist contains non-finite components")
    clamp = lambda v, m: max(-m, min(m, v))
    effort = RobotEffort(
        forward=clamp(-v_s[2], lim.v_max),
        yaw_rate=clamp(v_s[4], lim.yaw_max),
        height_rate=clamp(v_s[1], lim.height_rate_max),
    )
    return v_c, v_s, effort


class Phase(Enum):
    NAVIGATE = "navigate"
    HEIGHT = "height"
    GRASP = "grasp"
    DONE = "done"
    ABORTED = "aborted"


@dataclass
class ServoParams:
    lam: float = 0.8                 # 1/s, stable at 3-5 Hz updates with 200 ms links
    depth_gain: float = 0.5          # forward drive per meter of size/depth error
    target_size_px: float = 109.0    # from calibrate_target_size on the default rig
    center_tol_px: float = 5.0
    size_tol_px: float = 3.0
    height_tol_px: float = 5.0
    dwell_s: float = 0.6
    lost_hold_s: float = 2.0
    lost_abort_s: float = 10.0
    limits: ServoLimits = field(default_factory=ServoLimits)
    use_measured_depth: bool = True
    fixed_depth: float = 0.5         # used when use_measured_depth is False


@dataclass
class GraspEnvelope:
    """Region (relative to the robot) in which the scripted grasp counts.

    The facing tolerance matches the tag-recognizability cone: a centering
    servo on a differential-drive base preserves the initial bearing to the
    tag normal, so any bearing the robot could servo from must be graspable."""

    forward_nominal: float = 0.50
    forward_tol: float = 0.05
    lateral_tol: float = 0.05
    grasp_up: float = 0.02           # grip height above the body, over the axle
    height_tol: float = 0.05
    face_tol: float = math.radians(25.0)

    def check(self, robot_x: float, robot_y: float, heading: float,
              body_height: float, axle_z: float,
              tag_pos: tuple[float, float, float],
              tag_normal: tuple[float, float]) -> bool:
        dx, dy = tag_pos[0] - robot_x, tag_pos[1] - robot_y
        ch, sh = math.cos(heading), math.sin(heading)
        fwd = dx * ch + dy * sh
        lat = -dx * sh + dy * ch
        if abs(fwd - self.forward_nominal) > self.forward_tol:
            return False
        if abs(lat) > self.lateral_tol:
            return False
        if abs(tag_pos[2] - (axle_z + body_height + self.grasp_up)) > self.height_tol:
            return False
        to_robot = (-dx, -dy)
        dist = math.hypot(*to_robot)
        if dist < 1e-9:
            return False
        cosf = (tag_normal[0] * to_robot[0] + tag_normal[1] * to_robot[1]) / dist
        return cosf >= math.cos(self.face_tol)


@dataclass
class GraspScript:
    """Hard-coded dual-arm sweep: reach out, close around the box, settle to
    carry. Keyframes are arm CoM offsets in the hip frame; the balance loop
    absorbs the CoM excursion."""

    duration_s: float = 2.5
    keyframes: tuple[tuple[float, float, float], ...] = (
        (0.0, 0.08, 0.10),
        (0.4, 0.30, 0.05),
        (0.7, 0.42, -0.02),
        (0.9, 0.34, 0.02),
        (1.0, 0.25, 0.05),
    )

    def arm_at(self, frac: float) -> tuple[float, float]:
        frac = max(0.0, min(1.0, frac))
        kfs = self.keyframes
        for (f0, x0, y0), (f1, x1, y1) in zip(kfs, kfs[1:]):
            if frac <= f1:
                a = 0.0 if f1 == f0 else (frac - f0) / (f1 - f0)
                return (x0 + a * (x1 - x0), y0 + a * (y1 - y0))
        return kfs[-1][1:]


@dataclass
class ServoCommand:
    forward: float = 0.0
    yaw_rate: float = 0.0
    height_rate: float = 0.0
    trigger_grasp: bool = False


class PickupController:
    """Cloud-side three-phase pickup driven by the observation stream.

    Emits the latest servo command on every observation; when the tag is
    lost it keeps commanding for a grace period, then goes quiet and lets
    the edge heartbeat wind the robot down.
    """

    def __init__(self, camera: CameraModel, params: ServoParams | None = None,
                 side_world: float = 0.10,
                 log: "callable | None" = None):
        self.camera = camera
        self.p = params or ServoParams()
        self.side_world = side_world
        self.log = log
        self.phase = Phase.NAVIGATE
        self.success: bool | None = None
        self.min_e_norm = math.inf
        self._dwell_since: int | None = None
        self._last_visible: int | None = None
        self._lost_since: int | None = None
        self._grasp_started: int | None = None
        self._grasp_wait_s = 0.0
        self._last_cmd = ServoCommand()
        self._grasp_sent = False

    # -- helpers ---------------------------------------------------------

    def _normalized(self, obs: TagObservation) -> tuple[float, float]:
        return ((obs.c_x - self.camera.cx) / self.camera.focal_px,
                (obs.c_y - self.camera.cy) / self.camera.focal_px)

    def _depth(self, obs: TagObservation) -> float:
        if self.p.use_measured_depth:
            return depth_from_size(obs, self.camera, self.side_world)
        return self.p.fixed_depth

    def _target_depth(self) -> float:
        return self.camera.focal_px * self.side_world / self.p.target_size_px

    def e_norm(self, obs: TagObservation) -> float:
        x, y = self._normalized(obs)
        z = self._depth(obs)
        z_star = self._target_depth()
        return math.sqrt(x * x + y * y + ((z - z_star) / z_star) ** 2)

    def _emit_log(self, now_us: int, e_norm: float, Z: float) -> None:
        if self.log:
            # -1 marks "no measurement" (tag never seen / aborted blind)
            e_out = round(e_norm, 6) if math.isfinite(e_norm) else -1.0
            self.log({"t": now_us, "phase": self.phase.value,
                      "e_norm": e_out, "Z": round(Z, 6)})

    # -- main entry ------------------------------------------------------

    def on_observation(self, obs: TagObservation, now_us: int,
                       grasp_duration_s: float = 2.5) -> ServoCommand:
        if self.phase in (Phase.DONE, Phase.ABORTED):
            return ServoCommand()
        if self.phase is Phase.GRASP:
            return self._during_grasp(now_us)
        if not obs.visible:
            return self._tag_lost(now_us)
        self._last_visible = now_us
        self._lost_since = None

        try:
            x, y = self._normalized(obs)
            Z = self._depth(obs)
            z_star = self._target_depth()
            # phase 1 servos the horizontal feature only; vertical centering
            # belongs to the height phase
            s_y = 0.0 if self.phase is Phase.NAVIGATE else y
            err = FeatureError(s=(x, s_y), s_star=(0.0, 0.0), Z=Z)
            _, _, effort = control_law(err, self.p.lam, self.p.limits)
        except (DegenerateInteraction, InvalidDepth):
            return self._last_cmd  # hold on degenerate geometry
        depth_drive = max(-self.p.limits.v_max,
                          min(self.p.limits.v_max, self.p.depth_gain * (Z - z_star)))
        e_norm = self.e_norm(obs)
        self.min_e_norm = min(self.min_e_norm, e_norm)
        self._emit_log(now_us, e_norm, Z)

        if self.phase is Phase.NAVIGATE:
            cmd = ServoCommand(
                forward=max(-self.p.limits.v_max,
                            min(self.p.limits.v_max, effort.forward + depth_drive)),
                yaw_rate=effort.yaw_rate,
                height_rate=0.0,
            )
            centered = abs(obs.c_x - self.camera.cx) < self.p.center_tol_px
            sized = abs(obs.side_px - self.p.target_size_px) < self.p.size_tol_px
            if self._dwelled(centered and sized, now_us):
                self.phase = Phase.HEIGHT
                self._dwell_since = None
        else:  # Phase.HEIGHT
            cmd = ServoCommand(
                forward=max(-self.p.limits.v_max,
                            min(self.p.limits.v_max, effort.forward + depth_drive)),
                yaw_rate=effort.yaw_rate,
                height_rate=effort.height_rate,
            )
            leveled = abs(obs.c_y - self.camera.cy) < self.p.height_tol_px
            if self._dwelled(leveled, now_us):
                self.phase = Phase.GRASP
                self._grasp_started = now_us
                self._grasp_wait_s = grasp_duration_s
                self._grasp_sent = False
                cmd = ServoCommand(trigger_grasp=True)
                self._grasp_sent = True
        self._last_cmd = ServoCommand(cmd.forward, cmd.yaw_rate, cmd.height_rate)
        return cmd

    def _dwelled(self, condition: bool, now_us: int) -> bool:
        if not condition:
            self._dwell_since = None
            return False
        if self._dwell_since is None:
            self._dwell_since = now_us
            return False
        return (now_us - self._dwell_since) >= self.p.dwell_s * 1e6

    def _tag_lost(self, now_us: int) -> ServoCommand:
        self._dwell_since = None
        if self._lost_since is None:
            self._lost_since = now_us
        lost_for = (now_us - self._lost_since) / 1e6
        if lost_for > self.p.lost_abort_s:
            self.phase = Phase.ABORTED
            self.success = False
            self._emit_log(now_us, math.inf, 0.0)
            return ServoCommand()
        if lost_for <= self.p.lost_hold_s:
            return self._last_cmd  # keep last command flowing briefly
        return ServoCommand()  # go quiet; heartbeat decays the robot to rest

    def _during_grasp(self, now_us: int) -> ServoCommand:
        assert self._grasp_started is not None
        if (now_us - self._grasp_started) / 1e6 >= self._grasp_wait_s + 0.5:
            # outcome is read back from edge telemetry by the owner
            self.phase = Phase.DONE
            self._emit_log(now_us, self.min_e_norm, 0.0)
        return ServoCommand()

    def finish(self, grasp_succeeded: bool) -> None:
        """Owner reports the edge-side envelope verdict once the script ends."""
        if self.success is None:
            self.success = grasp_succeeded


def calibrate_target_size(standoffs: list[float], run_trial, trials: int = 3,
                          focal_px: float = 500.0, side_world: float = 0.10) -> float:
    """Pick the tag pixel size to servo for, by running the scripted grasp
    from each candidate standoff and keeping the most reliable one.

    `run_trial(standoff, seed) -> bool` executes one scripted grasp in
    simulation. Ties break toward the nearest standoff.
    """
    if not standoffs:
        raise ValueError("need at least one candidate standoff")
    best: tuple[float, float] | None = None  # (rate, -standoff)
    best_standoff = standoffs[0]
    for d in standoffs:
        successes = sum(1 for k in range(trials) if run_trial(d, k))
        rate = successes / trials
        key = (rate, -d)
        if best is None or key > best:
            best = key
            best_standoff = d
    if best is not None and best[0] == 0.0:
        raise RuntimeError("no candidate standoff ever succeeded; revise the grasp script")
    return focal_px * side_world / best_standoff

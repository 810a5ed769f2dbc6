"""Synthetic fiducial observation pipeline.

No images are rasterized: the tag's corner features are computed
analytically by projecting the known square through a pinhole model. What
the system under test cares about is *where* recognition runs and how stale
its outputs are, not pixel decoding.

Camera frame: x right, y down, z along the optical axis. World frame: x/y
ground plane, z up. The camera rides on the robot body, so body lean tips
the optical axis with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

Vec3 = tuple[float, float, float]


class NoMeasurement(ValueError):
    """Depth requested from an observation that carries none."""


@dataclass
class CameraModel:
    focal_px: float = 500.0
    image_w: int = 640
    image_h: int = 480
    mount_fwd: float = 0.05        # ahead of the axle, body frame
    mount_up: float = 0.10         # above the hip
    mount_pitch: float = math.radians(10.0)   # optical axis below horizontal
    axle_z: float = 0.1            # axle height over ground (wheel radius)
    view_angle_max: float = math.radians(30.0)  # 20 deg detector limit + margin for
                                            # the camera-above-tag elevation
    z_min: float = 0.1
    z_max: float = 6.0

    @property
    def cx(self) -> float:
        return self.image_w / 2.0

    @property
    def cy(self) -> float:
        return self.image_h / 2.0


@dataclass(frozen=True)
class FramePose:
    """Robot pose snapshot sufficient to place the camera (a stand-in for
    one captured video frame)."""

    x: float
    y: float
    heading: float
    body_height: float
    lean_angle: float


@dataclass
class TagObservation:
    visible: bool
    c_x: float = 0.0
    c_y: float = 0.0
    side_px: float = 0.0
    corners: tuple[tuple[float, float], ...] = ()
    timestamp: int = 0


@dataclass
class TagTarget:
    """Fiducial-tagged box: either parked (table) or carried along a
    waypoint path by a human who keeps showing the tag to the robot."""

    pos: Vec3 = (2.0, 0.0, 0.55)
    normal: tuple[float, float] = (-1.0, 0.0)
    side_world: float = 0.10
    carried: bool = False
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    speed: float = 0.2
    auto_face: bool = True         # carrier keeps the tag pointed at the robot
    _wp_index: int = 0

    def advance(self, dt: float, robot_xy: tuple[float, float] | None = None) -> None:
        """Move along the waypoint path at walking speed; halt at the end."""
        if self.carried and self._wp_index < len(self.waypoints):
            wx, wy = self.waypoints[self._wp_index]
            dx, dy = wx - self.pos[0], wy - self.pos[1]
            dist = math.hypot(dx, dy)
            step = self.speed * dt
            if dist <= step:
                self.pos = (wx, wy, self.pos[2])
                self._wp_index += 1
            else:
                self.pos = (self.pos[0] + dx / dist * step,
                            self.pos[1] + dy / dist * step, self.pos[2])
        if self.carried and self.auto_face and robot_xy is not None:
            fx, fy = robot_xy[0] - self.pos[0], robot_xy[1] - self.pos[1]
            n = math.hypot(fx, fy)
            if n > 1e-9:
                self.normal = (fx / n, fy / n)

    def halted(self) -> bool:
        return not self.carried or self._wp_index >= len(self.waypoints)


def project_point(p_cam: Vec3) -> tuple[float, float]:
    """Normalized image coordinates of a camera-frame point: x = X/Z, y = Y/Z."""
    X, Y, Z = p_cam
    return (X / Z, Y / Z)


def camera_pose(camera: CameraModel, pose: FramePose) -> tuple[Vec3, tuple[Vec3, Vec3, Vec3]]:
    """Camera origin and basis vectors (right, down, optical) in world frame."""
    th = pose.heading
    pitch = camera.mount_pitch + pose.lean_angle
    fx, fy = math.cos(th), math.sin(th)
    origin = (pose.x + camera.mount_fwd * fx,
              pose.y + camera.mount_fwd * fy,
              camera.axle_z + pose.body_height + camera.mount_up)
    ca, sa = math.cos(pitch), math.sin(pitch)
    ez = (fx * ca, fy * ca, -sa)          # optical axis, pitched below horizontal
    ex = (fy, -fx, 0.0)                   # image right
    ey = (-sa * fx, -sa * fy, -ca)        # image down = ez x ex
    return origin, (ex, ey, ez)


def _to_camera(p_world: Vec3, origin: Vec3, basis: tuple[Vec3, Vec3, Vec3]) -> Vec3:
    dx = p_world[0] - origin[0]
    dy = p_world[1] - origin[1]
    dz = p_world[2] - origin[2]
    ex, ey, ez = basis
    return (dx * ex[0] + dy * ex[1] + dz * ex[2],
            dx * ey[0] + dy * ey[1] + dz * ey[2],
            dx * ez[0] + dy * ez[1] + dz * ez[2])


def tag_corners_world(target: TagTarget) -> list[Vec3]:
    """TL, TR, BR, BL of the upright square tag as seen from the front."""
    nx, ny = target.normal
    rx, ry = ny, -nx            # horizontal right-direction of the tag face
    h = target.side_world / 2.0
    px, py, pz = target.pos
    return [
        (px - rx * h, py - ry * h, pz + h),
        (px + rx * h, py + ry * h, pz + h),
        (px + rx * h, py + ry * h, pz - h),
        (px - rx * h, py - ry * h, pz - h),
    ]


def project(camera: CameraModel, pose: FramePose, target: TagTarget,
            timestamp: int = 0) -> TagObservation:
    """Project the tag into pixel features. Invisibility (out of frame,
    too oblique, out of depth range) is a value, never an error."""
    origin, basis = camera_pose(camera, pose)
    center_cam = _to_camera(target.pos, origin, basis)
    Z = center_cam[2]
    if Z <= camera.z_min:
        return TagObservation(visible=False, timestamp=timestamp)

    corners_px: list[tuple[float, float]] = []
    in_frame = True
    for cw in tag_corners_world(target):
        cc = _to_camera(cw, origin, basis)
        if cc[2] <= camera.z_min:
            return TagObservation(visible=False, timestamp=timestamp)
        nx_, ny_ = project_point(cc)
        u = camera.cx + camera.focal_px * nx_
        v = camera.cy + camera.focal_px * ny_
        corners_px.append((u, v))
        if not (0.0 <= u <= camera.image_w and 0.0 <= v <= camera.image_h):
            in_frame = False

    cxn, cyn = project_point(center_cam)
    c_u = camera.cx + camera.focal_px * cxn
    c_v = camera.cy + camera.focal_px * cyn
    side_px = _side_px(corners_px)

    # recognizability: viewing direction within the cone around the face normal
    to_cam = (origin[0] - target.pos[0], origin[1] - target.pos[1], origin[2] - target.pos[2])
    dist = math.sqrt(to_cam[0] ** 2 + to_cam[1] ** 2 + to_cam[2] ** 2)
    n3 = (target.normal[0], target.normal[1], 0.0)
    cos_view = (to_cam[0] * n3[0] + to_cam[1] * n3[1]) / dist if dist > 1e-9 else -1.0
    facing_ok = cos_view >= math.cos(camera.view_angle_max)

    visible = in_frame and facing_ok and camera.z_min < Z <= camera.z_max and side_px > 0.0
    return TagObservation(visible=visible, c_x=c_u, c_y=c_v, side_px=side_px,
                          corners=tuple(corners_px), timestamp=timestamp)


def _side_px(corners: list[tuple[float, float]]) -> float:
    """Tag size in pixels: mean of the two vertical corner-pair distances
    (left and right edges). Vertical pairs are invariant to yaw obliquity,
    the dominant skew when servoing in off the tag normal, so the size cue
    stays unbiased across approach bearings."""
    (tlx, tly), (trx, try_), (brx, bry), (blx, bly) = corners
    left = math.hypot(blx - tlx, bly - tly)
    right = math.hypot(brx - trx, bry - try_)
    return (left + right) / 2.0


def depth_from_size(obs: TagObservation, camera: CameraModel, side_world: float) -> float:
    """Pinhole similar triangles: Z = f * side_world / side_px."""
    if not obs.visible or obs.side_px <= 0.0:
        raise NoMeasurement("no visible tag to measure depth from")
    return camera.focal_px * side_world / obs.side_px


def with_pixel_noise(obs: TagObservation, sigma: float, rng) -> TagObservation:
    """Recognizer-side corner noise; center and size are re-derived from the
    noisy corners like a real detector would."""
    if not obs.visible or sigma <= 0.0:
        return obs
    noisy = tuple((u + rng.gauss(0.0, sigma), v + rng.gauss(0.0, sigma))
                  for u, v in obs.corners)
    c_x = sum(u for u, _ in noisy) / 4.0
    c_y = sum(v for _, v in noisy) / 4.0
    return TagObservation(visible=True, c_x=c_x, c_y=c_y,
                          side_px=_side_px(list(noisy)), corners=noisy,
                          timestamp=obs.timestamp)

"""Planar self-balancing robot: physics, CoM bookkeeping, balance control.

The robot is a wheel-and-pendulum in the sagittal plane plus a kinematic yaw
degree of freedom. The pendulum vector runs from the wheel axle to the
mass-weighted CoM of arms, legs, control box and (when grasping) the carried
box, so moving any limb shifts the balance point and the controller has to
chase it.

Angle convention: the lean angle is the signed deviation of the pendulum
vector from straight-up, positive leaning forward (+x). Upright reads 0, not
pi, because the balance law linearizes around zero.

All hot-path math is plain floats; 200 Hz x minutes-long runs stay cheap and
bit-deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

Vec2 = tuple[float, float]

KNEE_MIN = 0.2
KNEE_MAX = 1.8
HEIGHT_MIN = 0.4
HEIGHT_MAX = 0.9
PSI_FALL = 0.5


class InvalidMass(ValueError):
    """Zero or negative total mass: CoM undefined."""


class SingularGeometry(ValueError):
    """Pendulum vector too short to define a lean angle."""


@dataclass
class DynamicsParams:
    """Physical constants and controller gains (normally loaded from the
    scenario config, not edited here)."""

    g: float = 9.81
    wheel_radius: float = 0.1
    leg_segment: float = 0.58        # thigh == shank length
    leg_bend_dir: float = -1.0       # knees fold backward
    knee_slew: float = 0.5           # rad/s
    m_arm: float = 2.0
    m_leg: float = 3.0
    box_control_mass: float = 9.0
    box_control_pos: Vec2 = (0.13, 0.25)   # hip frame
    arm_rest: Vec2 = (0.08, 0.10)          # hip frame
    carried_box_mass: float = 0.6
    # balance cascade
    k_psi: float = 25.0              # lean angle gain (1/s^2 per rad, scaled by |L|)
    k_psi_dot: float = 10.0          # lean rate gain
    k_v: float = 0.25                # velocity error -> lean-rate setpoint
    lean_gain: float = 0.15          # velocity error -> lean setpoint (rad per m/s)
    psi_target_max: float = 0.12
    wheel_tau: float = 0.05          # wheel velocity tracking time constant
    accel_max: float = 8.0
    t_max: float = 2.0               # wheel surface-speed command clamp
    yaw_gain: float = 1.5            # yaw-rate tracking gain
    psi_fall: float = PSI_FALL
    dt: float = 1.0 / 200.0


@dataclass
class LimbConfig:
    """Mass layout of the extremities. Arm and box positions are in the hip
    frame (x forward, y up, origin at the top of the legs)."""

    arm_com: tuple[Vec2, Vec2] = ((0.08, 0.10), (0.08, 0.10))
    leg_knee_angle: float = 0.9879693015970217   # ik(0.55 m) for 0.58 m segments
    box_com: Vec2 = (0.30, 0.05)                 # carried box, hip frame
    m_arm: tuple[float, float] = (2.0, 2.0)
    m_leg: tuple[float, float] = (3.0, 3.0)
    m_box: float = 0.6

    def copy(self) -> LimbConfig:
        return replace(self)


@dataclass
class PendulumGeometry:
    com: Vec2
    wheel_center: Vec2
    pendulum_vec: Vec2
    gravity_dir: Vec2
    length: float
    wheel_radius: float


def pendulum_geometry(com: Vec2, wheel_center: Vec2, gravity_dir: Vec2 = (0.0, -1.0),
                      wheel_radius: float = 0.1) -> PendulumGeometry:
    gx, gy = gravity_dir
    gnorm = math.hypot(gx, gy)
    if abs(gnorm - 1.0) > 1e-12:
        raise ValueError(f"gravity_dir must be unit length, got |G|={gnorm}")
    vec = (com[0] - wheel_center[0], com[1] - wheel_center[1])
    return PendulumGeometry(
        com=com, wheel_center=wheel_center, pendulum_vec=vec,
        gravity_dir=gravity_dir, length=math.hypot(*vec), wheel_radius=wheel_radius,
    )


def leg_fk(knee_angle: float, leg_segment: float) -> float:
    """Axle-to-hip height for a symmetric two-segment leg with joint opening
    angle `knee_angle`."""
    return 2.0 * leg_segment * math.sin(knee_angle / 2.0)


def leg_ik(height: float, leg_segment: float) -> float:
    """Knee angle whose forward-kinematic height equals `height`."""
    return 2.0 * math.asin(height / (2.0 * leg_segment))


def _leg_com_axle(knee_angle: float, leg_segment: float, bend_dir: float) -> Vec2:
    h = leg_fk(knee_angle, leg_segment)
    return (bend_dir * leg_segment * math.cos(knee_angle / 2.0) / 2.0, h / 2.0)


def estimate_com(limbs: LimbConfig, box_control_mass: float, box_control_pos: Vec2,
                 grasping: bool = False, leg_segment: float = 0.58,
                 bend_dir: float = -1.0) -> Vec2:
    """Mass-weighted CoM over arms, legs and control box (plus the carried
    box while grasping), in the axle frame."""
    h = leg_fk(limbs.leg_knee_angle, leg_segment)
    leg = _leg_com_axle(limbs.leg_knee_angle, leg_segment, bend_dir)
    items: list[tuple[float, float, float]] = [
        (limbs.m_arm[0], limbs.arm_com[0][0], h + limbs.arm_com[0][1]),
        (limbs.m_arm[1], limbs.arm_com[1][0], h + limbs.arm_com[1][1]),
        (limbs.m_leg[0], leg[0], leg[1]),
        (limbs.m_leg[1], leg[0], leg[1]),
        (box_control_mass, box_control_pos[0], h + box_control_pos[1]),
    ]
    if grasping:
        items.append((limbs.m_box, limbs.box_com[0], h + limbs.box_com[1]))
    total = 0.0
    sx = 0.0
    sy = 0.0
    for m, x, y in items:
        if m < 0.0:
            raise InvalidMass(f"negative mass {m}")
        total += m
        sx += m * x
        sy += m * y
    if total <= 0.0:
        raise InvalidMass("total mass must be positive")
    return (sx / total, sy / total)


def lean_angle(geometry: PendulumGeometry) -> float:
    """Signed deviation of the pendulum vector from the anti-gravity
    direction; positive when the horizontal component points forward."""
    lx, ly = geometry.pendulum_vec
    norm = math.hypot(lx, ly)
    if norm <= 1e-9:
        raise SingularGeometry("pendulum vector is degenerate (|L| ~ 0)")
    ux, uy = -geometry.gravity_dir[0], -geometry.gravity_dir[1]
    c = (lx * ux + ly * uy) / norm
    ang = math.acos(min(1.0, max(-1.0, c)))
    # horizontal axis: up rotated -90 deg, i.e. "forward" for G = (0,-1)
    hx, hy = uy, -ux
    horiz = lx * hx + ly * hy
    return ang if horiz >= 0.0 else -ang


@dataclass
class RobotState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    body_height: float = 0.55
    lean_angle: float = 0.0
    lean_rate: float = 0.0
    wheel_speed: float = 0.0         # rad/s
    com_velocity: float = 0.0
    yaw_rate: float = 0.0
    limbs: LimbConfig = field(default_factory=LimbConfig)
    grasping: bool = False
    fallen: bool = False
    height_clamped: bool = False     # telemetry flag: last height target was out of range
    com_offset: float = 0.0          # body-frame CoM deviation angle at last step

    def copy(self) -> RobotState:
        c = replace(self)
        c.limbs = self.limbs.copy()
        return c


def _com_state(state: RobotState, p: DynamicsParams) -> tuple[float, float]:
    """(offset angle, pendulum length) of the current limb configuration.
    Inlined estimate_com without validation; runs twice per 200 Hz tick."""
    limbs = state.limbs
    half = limbs.leg_knee_angle / 2.0
    h = 2.0 * p.leg_segment * math.sin(half)
    leg_x = p.leg_bend_dir * p.leg_segment * math.cos(half) / 2.0
    (a0x, a0y), (a1x, a1y) = limbs.arm_com
    m_a0, m_a1 = limbs.m_arm
    m_l = limbs.m_leg[0] + limbs.m_leg[1]
    m_c = p.box_control_mass
    total = m_a0 + m_a1 + m_l + m_c
    sx = m_a0 * a0x + m_a1 * a1x + m_l * leg_x + m_c * p.box_control_pos[0]
    sy = m_a0 * (h + a0y) + m_a1 * (h + a1y) + m_l * (h / 2.0) \
        + m_c * (h + p.box_control_pos[1])
    if state.grasping:
        total += limbs.m_box
        sx += limbs.m_box * limbs.box_com[0]
        sy += limbs.m_box * (h + limbs.box_com[1])
    cx, cy = sx / total, sy / total
    return math.atan2(cx, cy), math.hypot(cx, cy)


def init_state(p: DynamicsParams, x: float = 0.0, y: float = 0.0, heading: float = 0.0,
               height: float = 0.55, lean: float = 0.0) -> RobotState:
    limbs = LimbConfig(
        arm_com=(p.arm_rest, p.arm_rest),
        leg_knee_angle=leg_ik(height, p.leg_segment),
        m_arm=(p.m_arm, p.m_arm), m_leg=(p.m_leg, p.m_leg),
        m_box=p.carried_box_mass,
    )
    st = RobotState(x=x, y=y, heading=heading, body_height=height,
                    lean_angle=lean, limbs=limbs)
    st.com_offset, _ = _com_state(st, p)
    return st


def wheel_velocity_for(v_com: float, lean_rate: float, length: float) -> float:
    """Wheel surface speed that realizes CoM velocity `v_com` at the current
    lean rate: the swing contribution is subtracted out."""
    return v_com - lean_rate * length


def balance_command(state: RobotState, v_des: float, p: DynamicsParams) -> float:
    """Wheel surface-speed command keeping the robot upright while nudging
    the CoM velocity toward v_des.

    The velocity error sets a lean / lean-rate target (leaning into the
    demanded acceleration); a PD correction drives the lean to that target;
    the result rides on the decomposition of CoM velocity into wheel speed
    plus pendulum swing.
    """
    if state.fallen:
        raise ValueError("balance_command on a fallen state")
    _, length = _com_state(state, p)
    v_err = v_des - state.com_velocity
    psi_t = max(-p.psi_target_max, min(p.psi_target_max, p.lean_gain * v_err))
    psi_dot_t = max(-1.0, min(1.0, p.k_v * v_err))
    psi = state.lean_angle
    a_des = p.g * math.sin(psi) + length * (
        p.k_psi * (psi - psi_t) + p.k_psi_dot * (state.lean_rate - psi_dot_t)
    )
    t_cmd = wheel_velocity_for(state.com_velocity, state.lean_rate, length) \
        + p.wheel_tau * a_des
    return max(-p.t_max, min(p.t_max, t_cmd))


def step(state: RobotState, t_cmd: float, dt: float, p: DynamicsParams,
         yaw_cmd: float = 0.0) -> RobotState:
    """Advance one fixed 200 Hz tick (symplectic, fixed step). Mutates and
    returns `state`. Fallen states are terminal and pass through unchanged."""
    if state.fallen:
        return state

    offset, length = _com_state(state, p)
    # Limb moves between ticks displace the CoM, not the body: the pendulum
    # deviation jumps by the change in the body-frame CoM angle.
    psi = state.lean_angle + (offset - state.com_offset)
    state.com_offset = offset

    u = state.wheel_speed * p.wheel_radius
    a = (t_cmd - u) / p.wheel_tau
    a = max(-p.accel_max, min(p.accel_max, a))
    u += a * dt

    # velocity Verlet: symplectic like semi-implicit Euler but second order,
    # which the fidelity margin against the RK4 oracle requires
    g_l = p.g / length
    a_l = a / length
    acc0 = g_l * math.sin(psi) - a_l * math.cos(psi)
    psi_half = state.lean_rate + 0.5 * acc0 * dt
    psi += psi_half * dt
    acc1 = g_l * math.sin(psi) - a_l * math.cos(psi)
    psi_dot = psi_half + 0.5 * acc1 * dt

    if abs(psi) >= p.psi_fall:
        state.lean_angle = math.copysign(p.psi_fall, psi)
        state.lean_rate = psi_dot
        state.fallen = True
        return state

    state.yaw_rate += p.yaw_gain * (yaw_cmd - state.yaw_rate) * dt
    state.heading += state.yaw_rate * dt
    state.x += math.cos(state.heading) * u * dt
    state.y += math.sin(state.heading) * u * dt

    state.lean_angle = psi
    state.lean_rate = psi_dot
    state.wheel_speed = u / p.wheel_radius
    state.com_velocity = u + psi_dot * length * math.cos(psi)
    state.body_height = leg_fk(state.limbs.leg_knee_angle, p.leg_segment)
    return state


def set_height(state: RobotState, target_height: float, dt: float,
               p: DynamicsParams) -> RobotState:
    """Slew the knee joints toward the target height at the knee rate limit.
    Out-of-range targets clamp and set the telemetry flag."""
    clamped = min(HEIGHT_MAX, max(HEIGHT_MIN, target_height))
    state.height_clamped = clamped != target_height
    knee_t = leg_ik(clamped, p.leg_segment)
    knee_t = min(KNEE_MAX, max(KNEE_MIN, knee_t))
    delta = knee_t - state.limbs.leg_knee_angle
    max_step = p.knee_slew * dt
    if abs(delta) > max_step:
        delta = math.copysign(max_step, delta)
    state.limbs.leg_knee_angle += delta
    state.body_height = leg_fk(state.limbs.leg_knee_angle, p.leg_segment)
    return state

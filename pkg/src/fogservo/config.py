"""Scenario configuration: defaults, overlay loading, validation.

A scenario JSON file only needs the keys it overrides; everything else comes
from the packaged defaults. Validation happens before any node is built and
reports the full field path of the first offending value.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from .dynamics import DynamicsParams
from .heartbeat import RampShape
from .ibvs import GraspEnvelope, GraspScript, ServoLimits, ServoParams
from .netsim import LinkProfile
from .vision import CameraModel, TagTarget


class ConfigError(ValueError):
    """Scenario schema violation, message carries the field path."""


def _defaults() -> dict:
    with resources.files("fogservo.data").joinpath("defaults.json").open() as f:
        return json.load(f)


_FREEFORM_TOP = ("description", "notes")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in out:
            if path == "" and key in _FREEFORM_TOP:
                out[key] = copy.deepcopy(val)
                continue
            raise ConfigError(f"{here}: unknown key")
        if isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val, here)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _need(cfg: dict, path: str, kind, lo=None, hi=None):
    node: Any = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"{path}: missing")
        node = node[part]
    if isinstance(node, bool) and kind is not bool:
        raise ConfigError(f"{path}: expected {kind.__name__}, got bool")
    if kind is float and isinstance(node, int):
        node = float(node)
    if not isinstance(node, kind):
        raise ConfigError(f"{path}: expected {kind.__name__}, got {type(node).__name__}")
    if lo is not None and node < lo:
        raise ConfigError(f"{path}: {node} below minimum {lo}")
    if hi is not None and node > hi:
        raise ConfigError(f"{path}: {node} above maximum {hi}")
    return node


MODES = ("auto", "teleop-scripted", "teleop-then-auto")


def validate(cfg: dict) -> None:
    _need(cfg, "name", str)
    _need(cfg, "seed", int, 0)
    _need(cfg, "duration_s", float, 0.0)
    _need(cfg, "repetitions", int, 1)
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode: must be one of {MODES}, got {cfg['mode']!r}")
    _need(cfg, "robot.height", float, 0.4, 0.9)
    _need(cfg, "robot.lean", float, -0.5, 0.5)
    for link in ("cloud_rcu", "rcu_edge"):
        _need(cfg, f"links.{link}.latency_ms", float, 0.0)
        _need(cfg, f"links.{link}.jitter_ms", float, 0.0)
        _need(cfg, f"links.{link}.drop", float, 0.0, 1.0)
        _need(cfg, f"links.{link}.reorder", float, 0.0, 1.0)
        _need(cfg, f"links.{link}.seed", int, 0)
        if cfg["links"][link]["jitter_mode"] not in ("uniform", "lognormal"):
            raise ConfigError(f"links.{link}.jitter_mode: must be uniform or lognormal")
    _need(cfg, "heartbeat.window_ms", float, 0.0)
    rise = _need(cfg, "heartbeat.rise_ms", float, 1e-9)
    fall = _need(cfg, "heartbeat.fall_ms", float, 1e-9)
    if fall >= rise:
        raise ConfigError("heartbeat.fall_ms: must be shorter than rise_ms")
    _need(cfg, "rates.edge_hz", int, 1)
    cloud_hz = _need(cfg, "rates.cloud_hz", int, 1)
    if not 1 <= cloud_hz <= 10:
        raise ConfigError(f"rates.cloud_hz: {cloud_hz} outside [1, 10]")
    _need(cfg, "rates.telemetry_hz", int, 1)
    _need(cfg, "rates.command_hz", int, 1)
    _need(cfg, "protocol.trigger_repeats", int, 1)
    _need(cfg, "protocol.trigger_spacing_ms", float, 1.0)
    _need(cfg, "camera.focal_px", float, 1.0)
    _need(cfg, "camera.noise_sigma_px", float, 0.0)
    _need(cfg, "servo.lambda", float, 1e-9)
    _need(cfg, "servo.target_size_px", float, 1.0)
    _need(cfg, "grasp.duration_s", float, 0.1)
    tgt = cfg["target"]
    if not (isinstance(tgt.get("pos"), list) and len(tgt["pos"]) == 3):
        raise ConfigError("target.pos: expected [x, y, z]")
    if not (isinstance(tgt.get("normal"), list) and len(tgt["normal"]) == 2):
        raise ConfigError("target.normal: expected [nx, ny]")
    nx, ny = tgt["normal"]
    if abs(math.hypot(nx, ny) - 1.0) > 1e-6:
        raise ConfigError("target.normal: must be unit length")
    for i, ev in enumerate(cfg.get("events", [])):
        if not isinstance(ev, dict) or "type" not in ev:
            raise ConfigError(f"events[{i}]: expected object with 'type'")
        if ev["type"] not in ("displace_target", "arm_noise", "sever_link"):
            raise ConfigError(f"events[{i}].type: unknown event {ev['type']!r}")
    for i, seg in enumerate(cfg.get("teleop", {}).get("trace", [])):
        if not isinstance(seg, dict) or "type" not in seg:
            raise ConfigError(f"teleop.trace[{i}]: expected object with 'type'")
        if seg["type"] not in ("drive", "height", "grasp", "mode"):
            raise ConfigError(f"teleop.trace[{i}].type: unknown segment {seg['type']!r}")


@dataclass
class Rates:
    edge_hz: int = 200
    cloud_hz: int = 5
    telemetry_hz: int = 20
    command_hz: int = 20

    @property
    def edge_tick_us(self) -> int:
        return round(1e6 / self.edge_hz)

    @property
    def cloud_tick_us(self) -> int:
        return round(1e6 / self.cloud_hz)

    @property
    def telemetry_tick_us(self) -> int:
        return round(1e6 / self.telemetry_hz)

    @property
    def command_tick_us(self) -> int:
        return round(1e6 / self.command_hz)


@dataclass
class Scenario:
    """Fully parsed scenario; `raw` keeps the merged JSON for reproducibility."""

    raw: dict
    name: str
    seed: int
    duration_s: float
    repetitions: int
    mode: str
    auto_engage_s: float
    stop_on_done: bool
    dynamics: DynamicsParams
    camera: CameraModel
    noise_sigma_px: float
    servo: ServoParams
    grasp_script: GraspScript
    grasp_envelope: GraspEnvelope
    ramp: RampShape
    window_ms: float
    adaptive_window: bool
    rates: Rates
    rcu_delay_ms: float
    trigger_repeats: int
    trigger_spacing_us: int
    robot_init: dict
    target_cfg: dict
    link_cfgs: dict
    teleop_trace: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def link_profile(self, name: str, direction: int, rep: int = 0) -> LinkProfile:
        c = self.link_cfgs[name]
        return LinkProfile(
            base_latency_ms=float(c["latency_ms"]),
            jitter_ms=float(c["jitter_ms"]),
            drop_prob=float(c["drop"]),
            reorder_prob=float(c["reorder"]),
            seed=int(c["seed"]) + 101 * direction + 7919 * rep,
            jitter_mode=c.get("jitter_mode", "uniform"),
        )

    def make_target(self) -> TagTarget:
        t = self.target_cfg
        return TagTarget(
            pos=tuple(t["pos"]), normal=tuple(t["normal"]),
            side_world=float(t["side_world"]), carried=bool(t["carried"]),
            waypoints=[tuple(w) for w in t.get("waypoints", [])],
            speed=float(t["speed"]), auto_face=bool(t.get("auto_face", True)),
        )


def scenario_from_dict(override: dict) -> Scenario:
    cfg = _merge(_defaults(), override)
    validate(cfg)
    d = cfg["dynamics"]
    dyn = DynamicsParams(
        g=d["g"], wheel_radius=d["wheel_radius"], leg_segment=d["leg_segment"],
        leg_bend_dir=d["leg_bend_dir"], knee_slew=d["knee_slew"], m_arm=d["m_arm"],
        m_leg=d["m_leg"], box_control_mass=d["box_control_mass"],
        box_control_pos=tuple(d["box_control_pos"]), arm_rest=tuple(d["arm_rest"]),
        carried_box_mass=d["carried_box_mass"], k_psi=d["k_psi"],
        k_psi_dot=d["k_psi_dot"], k_v=d["k_v"], lean_gain=d["lean_gain"],
        psi_target_max=d["psi_target_max"], wheel_tau=d["wheel_tau"],
        accel_max=d["accel_max"], t_max=d["t_max"], yaw_gain=d["yaw_gain"],
        dt=1.0 / cfg["rates"]["edge_hz"],
    )
    cam = cfg["camera"]
    camera = CameraModel(
        focal_px=cam["focal_px"], image_w=cam["image_w"], image_h=cam["image_h"],
        mount_fwd=cam["mount_fwd"], mount_up=cam["mount_up"],
        mount_pitch=math.radians(cam["mount_pitch_deg"]),
        view_angle_max=math.radians(cam["view_angle_max_deg"]),
        z_min=cam["z_min"], z_max=cam["z_max"], axle_z=d["wheel_radius"],
    )
    s = cfg["servo"]
    servo = ServoParams(
        lam=s["lambda"], depth_gain=s["depth_gain"], target_size_px=s["target_size_px"],
        center_tol_px=s["center_tol_px"], size_tol_px=s["size_tol_px"],
        height_tol_px=s["height_tol_px"], dwell_s=s["dwell_s"],
        lost_hold_s=s["lost_hold_s"], lost_abort_s=s["lost_abort_s"],
        limits=ServoLimits(v_max=s["v_max"], yaw_max=s["yaw_max"],
                           height_rate_max=s["height_rate_max"]),
        use_measured_depth=s["use_measured_depth"], fixed_depth=s["fixed_depth"],
    )
    g = cfg["grasp"]
    envelope = GraspEnvelope(
        forward_nominal=g["forward_nominal"], forward_tol=g["forward_tol"],
        lateral_tol=g["lateral_tol"], grasp_up=g["grasp_up"],
        height_tol=g["height_tol"], face_tol=math.radians(g["face_tol_deg"]),
    )
    rates = Rates(**cfg["rates"])
    return Scenario(
        raw=cfg, name=cfg["name"], seed=cfg["seed"], duration_s=cfg["duration_s"],
        repetitions=cfg["repetitions"], mode=cfg["mode"],
        auto_engage_s=cfg["auto_engage_s"], stop_on_done=cfg["stop_on_done"],
        dynamics=dyn, camera=camera, noise_sigma_px=cam["noise_sigma_px"],
        servo=servo, grasp_script=GraspScript(duration_s=g["duration_s"]),
        grasp_envelope=envelope,
        ramp=RampShape(rise_ms=cfg["heartbeat"]["rise_ms"], fall_ms=cfg["heartbeat"]["fall_ms"]),
        window_ms=cfg["heartbeat"]["window_ms"],
        adaptive_window=cfg["heartbeat"]["adaptive"], rates=rates,
        rcu_delay_ms=cfg["rcu"]["forward_delay_ms"],
        trigger_repeats=cfg["protocol"]["trigger_repeats"],
        trigger_spacing_us=round(cfg["protocol"]["trigger_spacing_ms"] * 1000),
        robot_init=cfg["robot"], target_cfg=cfg["target"], link_cfgs=cfg["links"],
        teleop_trace=cfg["teleop"]["trace"], events=cfg["events"],
    )


def load_scenario(path: str) -> Scenario:
    with open(path) as f:
        try:
            override = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(override, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return scenario_from_dict(override)


def rep_seed(scn: Scenario, rep: int) -> int:
    return scn.seed + 7919 * rep

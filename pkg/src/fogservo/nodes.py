"""Cloud / RCU / edge process topology over emulated links.

One virtual clock orders everything. The edge node owns the physical robot
and ticks at 200 Hz: it reconstructs commands from its heartbeat channels,
runs the balance loop, integrates the dynamics and uplinks state telemetry
at 20 Hz (the stand-in for the video stream). The RCU relays datagrams both
ways with a fixed 2 ms processing delay. The cloud node hosts recognition
(3-5 Hz, operating on the *stale* uplinked pose exactly as a cloud detector
sees stale frames), the pickup controller, and the teleop command source;
it streams command packets downlink at 20 Hz.

Severing a link never stalls the edge: channels decay over one heartbeat
window and the robot keeps balancing on its own.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field

from . import wire
from .config import Scenario, rep_seed
from .dynamics import (DynamicsParams, HEIGHT_MAX, HEIGHT_MIN, RobotState,
                       balance_command, init_state, set_height, step)
from .heartbeat import ChannelBank, ChannelType, RampShape, stop_latency_bound
from .ibvs import GraspEnvelope, GraspScript, Phase, PickupController, ServoCommand
from .netsim import Link, LinkProfile, VirtualClock
from .telemetry import JsonlLog
from .vision import CameraModel, FramePose, TagObservation, TagTarget, project, with_pixel_noise

log = logging.getLogger("fogservo.nodes")


def route_velocity(forward: float, yaw: float) -> list[tuple[ChannelType, float]]:
    """Split a signed velocity command onto the one-sided channels."""
    out = []
    if forward > 0:
        out.append((ChannelType.FORWARD, forward))
    elif forward < 0:
        out.append((ChannelType.BACKWARD, -forward))
    if yaw > 0:
        out.append((ChannelType.TURN_LEFT, yaw))
    elif yaw < 0:
        out.append((ChannelType.TURN_RIGHT, -yaw))
    return out


def route_height(rate: float) -> list[tuple[ChannelType, float]]:
    if rate > 0:
        return [(ChannelType.HEIGHT_UP, rate)]
    if rate < 0:
        return [(ChannelType.HEIGHT_DOWN, -rate)]
    return []


@dataclass
class TargetSnap:
    pos: tuple[float, float, float]
    normal: tuple[float, float]


class World:
    """Physical ground truth shared by the edge node and the scenario."""

    def __init__(self, scn: Scenario, rep: int):
        self.dyn = scn.dynamics
        r = scn.robot_init
        self.robot = init_state(self.dyn, x=r["x"], y=r["y"], heading=r["heading"],
                                height=r["height"], lean=r["lean"])
        self.target = scn.make_target()
        self.attached = False
        self._history: list[tuple[int, TargetSnap]] = []
        self._grasp_hooks: list = []

    def record_target(self, t_us: int) -> None:
        self._history.append((t_us, TargetSnap(self.target.pos, self.target.normal)))
        if len(self._history) > 512:
            del self._history[:256]

    def target_at(self, t_us: int) -> TargetSnap:
        """Target pose at a frame's capture time (latest record not after it)."""
        snap = TargetSnap(self.target.pos, self.target.normal)
        for t, s in reversed(self._history):
            if t <= t_us:
                return s
        return snap

    def tick(self, dt: float) -> None:
        if self.attached:
            st = self.robot
            gx = st.x + math.cos(st.heading) * 0.35
            gy = st.y + math.sin(st.heading) * 0.35
            gz = self.dyn.wheel_radius + st.body_height + 0.02
            self.target.pos = (gx, gy, gz)
        else:
            self.target.advance(dt, (self.robot.x, self.robot.y))


class GraspRun:
    """Edge-side execution of the hard-coded grasp script."""

    def __init__(self, script: GraspScript, envelope: GraspEnvelope, start_us: int,
                 anchor: tuple[float, float] = (0.0, 0.0)):
        self.script = script
        self.envelope = envelope
        self.start_us = start_us
        self.anchor = anchor
        self.done = False
        self.result: bool | None = None
        self.end_us: int | None = None

    def tick(self, world: World, now_us: int) -> None:
        if self.done:
            return
        frac = (now_us - self.start_us) / (self.script.duration_s * 1e6)
        arm = self.script.arm_at(frac)
        world.robot.limbs.arm_com = (arm, arm)
        if frac >= 1.0:
            st = world.robot
            ok = self.envelope.check(st.x, st.y, st.heading, st.body_height,
                                     world.dyn.wheel_radius,
                                     world.target.pos, world.target.normal)
            self.result = ok and not st.fallen
            self.done = True
            self.end_us = now_us
            if self.result:
                st.grasping = True
                world.attached = True


class EdgeNode:
    """200 Hz balance loop plus heartbeat command reconstruction."""

    def __init__(self, scn: Scenario, world: World, clock: VirtualClock,
                 telemetry_log: JsonlLog):
        self.scn = scn
        self.world = world
        self.clock = clock
        self.bank = ChannelBank(window_ms=scn.window_ms, shape=scn.ramp,
                                adaptive=scn.adaptive_window)
        self.uplink: Link | None = None
        self.telemetry_log = telemetry_log
        self.height_target = world.robot.body_height
        self.grasp: GraspRun | None = None
        self.mode_auto = False
        self.decode_errors = 0
        self.seq = 0
        self.latest_obs: wire.TagObsMsg | None = None
        self.obs_received = 0
        self.obs_latency_us: list[int] = []
        self.stop_events: list[dict] = []
        self._was_positive: dict[ChannelType, bool] = {}
        self._tick_count = 0
        self._telemetry_every = max(1, round(scn.rates.edge_hz / scn.rates.telemetry_hz))

    def on_datagram(self, data: bytes, now_us: int) -> None:
        try:
            pkt = wire.decode(data)
        except wire.WireError:
            self.decode_errors += 1
            self.bank.rejected += 1
            return
        msg = pkt.body
        if isinstance(msg, wire.Velocity):
            for ct, mag in route_velocity(msg.forward, msg.yaw):
                self.bank.ingest(ct, pkt.seq, mag, now_us)
        elif isinstance(msg, wire.HeightRate):
            for ct, mag in route_height(msg.rate):
                self.bank.ingest(ct, pkt.seq, mag, now_us)
        elif isinstance(msg, wire.GraspTrigger):
            self.bank.ingest(ChannelType.GRASP, pkt.seq, 1.0, now_us)
        elif isinstance(msg, wire.Mode):
            self.bank.ingest(ChannelType.AUTO_MODE, pkt.seq, 1.0 if msg.auto else 0.0, now_us)
        elif isinstance(msg, wire.TagObsMsg):
            self.latest_obs = msg
            self.obs_received += 1
            self.obs_latency_us.append(now_us - pkt.send_ts)

    def _sample(self, ct: ChannelType, now_us: int) -> float:
        val = self.bank.sample(ct, now_us)
        was = self._was_positive.get(ct, False)
        if was and val == 0.0:
            ch = self.bank.channels[ct]
            self.stop_events.append({
                "channel": ct.value, "t_zero": now_us, "last_arrival": ch.last_seen,
            })
        self._was_positive[ct] = val > 0.0
        return val

    def tick(self) -> None:
        now = self.clock.now_us
        dt = self.scn.dynamics.dt
        robot = self.world.robot

        for ev in self.bank.take_events():
            if ev.channel is ChannelType.GRASP:
                if self.grasp is None or self.grasp.done:
                    if not robot.grasping and not robot.fallen:
                        self.grasp = GraspRun(self.scn.grasp_script,
                                              self.scn.grasp_envelope, now,
                                              anchor=(robot.x, robot.y))
                        for hook in self.world._grasp_hooks:
                            hook(now)
            elif ev.channel is ChannelType.AUTO_MODE:
                self.mode_auto = ev.value >= 0.5

        v_des = self._sample(ChannelType.FORWARD, now) - self._sample(ChannelType.BACKWARD, now)
        yaw_cmd = self._sample(ChannelType.TURN_LEFT, now) - self._sample(ChannelType.TURN_RIGHT, now)
        h_rate = self._sample(ChannelType.HEIGHT_UP, now) - self._sample(ChannelType.HEIGHT_DOWN, now)

        if self.grasp is not None and not self.grasp.done:
            self.grasp.tick(self.world, now)
            # hold station while committed: the arm sweep drags the CoM (and
            # with it the wheels) toward the box, so anchor to the commit pose
            dx = self.grasp.anchor[0] - robot.x
            dy = self.grasp.anchor[1] - robot.y
            err_fwd = dx * math.cos(robot.heading) + dy * math.sin(robot.heading)
            v_des += max(-0.2, min(0.2, 1.5 * err_fwd))

        if h_rate != 0.0:
            self.height_target = min(HEIGHT_MAX, max(HEIGHT_MIN, self.height_target + h_rate * dt))
        set_height(robot, self.height_target, dt, self.scn.dynamics)

        if not robot.fallen:
            t_cmd = balance_command(robot, v_des, self.scn.dynamics)
            step(robot, t_cmd, dt, self.scn.dynamics, yaw_cmd=yaw_cmd)

        self.world.tick(dt)

        self._tick_count += 1
        if self._tick_count % self._telemetry_every == 0:
            self._emit_telemetry(now)

    def _emit_telemetry(self, now_us: int) -> None:
        robot = self.world.robot
        self.world.record_target(now_us)
        rec = {"t": now_us, "x": round(robot.x, 6), "y": round(robot.y, 6),
               "heading": round(robot.heading, 6), "psi": round(robot.lean_angle, 6),
               "psi_dot": round(robot.lean_rate, 6), "v": round(robot.com_velocity, 6),
               "height": round(robot.body_height, 6), "fallen": robot.fallen,
               "grasping": robot.grasping}
        self.telemetry_log.write(rec)
        if self.uplink is not None:
            msg = wire.TelemetryMsg(
                t=now_us, x=robot.x, y=robot.y, heading=robot.heading,
                psi=robot.lean_angle, psi_dot=robot.lean_rate, v=robot.com_velocity,
                height=robot.body_height, fallen=robot.fallen, grasping=robot.grasping,
            )
            self.seq += 1
            self.uplink.send(wire.encode(msg, self.seq, now_us))


class RcuNode:
    """Transparent gateway: validates framing, forwards bytes unchanged after
    a fixed processing delay, never drops on its own."""

    def __init__(self, clock: VirtualClock, delay_ms: float):
        self.clock = clock
        self.delay_us = round(delay_ms * 1000)
        self.forwarded = {"down": 0, "up": 0}
        self.errors = {"down": 0, "up": 0}
        self.out: dict[str, Link | None] = {"down": None, "up": None}

    def forward(self, data: bytes, direction: str) -> None:
        try:
            wire.decode(data)
        except wire.WireError:
            self.errors[direction] += 1
            return
        self.forwarded[direction] += 1
        out = self.out[direction]
        if out is not None:
            self.clock.push(self.clock.now_us + self.delay_us,
                            lambda d=data: out.send(d))


class RecognitionService:
    """Cloud-hosted tag recognizer: projects the known geometry through the
    frame's capture-time pose and adds detector pixel noise."""

    def __init__(self, camera: CameraModel, sigma_px: float, rng: random.Random,
                 side_world: float):
        self.camera = camera
        self.sigma_px = sigma_px
        self.rng = rng
        self.side_world = side_world

    def recognize(self, frame: wire.TelemetryMsg, snap: TargetSnap) -> TagObservation:
        pose = FramePose(x=frame.x, y=frame.y, heading=frame.heading,
                         body_height=frame.height, lean_angle=frame.psi)
        tgt = TagTarget(pos=snap.pos, normal=snap.normal, side_world=self.side_world)
        obs = project(self.camera, pose, tgt, timestamp=frame.t)
        return with_pixel_noise(obs, self.sigma_px, self.rng)


class CloudNode:
    """Teleop relay, recognition host and pickup controller."""

    def __init__(self, scn: Scenario, world: World, clock: VirtualClock, rep: int,
                 phase_log: JsonlLog):
        self.scn = scn
        self.world = world
        self.clock = clock
        self.downlink: Link | None = None
        self.seq = 0
        self.latest_telem: wire.TelemetryMsg | None = None
        self.recognizer = RecognitionService(
            scn.camera, scn.noise_sigma_px,
            random.Random(rep_seed(scn, rep) ^ 0x5EED), scn.target_cfg["side_world"])
        self.controller = PickupController(scn.camera, scn.servo,
                                           side_world=scn.target_cfg["side_world"],
                                           log=phase_log.write)
        self.mode_auto = False
        self._mode_sent = False
        self.auto_cmd = ServoCommand()
        self.last_send_us: dict[ChannelType, int] = {}
        self._trace_fired: set[int] = set()
        self.obs_sent = 0

    # -- downlink helpers -------------------------------------------------

    def _send(self, msg: wire.Message) -> None:
        if self.downlink is None:
            return
        self.seq += 1
        now = self.clock.now_us
        self.downlink.send(wire.encode(msg, self.seq, now))
        if isinstance(msg, wire.Velocity):
            for ct, _ in route_velocity(msg.forward, msg.yaw):
                self.last_send_us[ct] = now
        elif isinstance(msg, wire.HeightRate):
            for ct, _ in route_height(msg.rate):
                self.last_send_us[ct] = now

    def _send_trigger(self, make_msg) -> None:
        """Single-shot commands get no window protection, so blast several
        copies; edge-side latches make the repeats idempotent."""
        self._send(make_msg())
        spacing = self.scn.trigger_spacing_us
        for k in range(1, self.scn.trigger_repeats):
            self.clock.push(self.clock.now_us + k * spacing,
                            lambda: self._send(make_msg()))

    def set_mode(self, auto: bool) -> None:
        self.mode_auto = auto
        self._send_trigger(lambda: wire.Mode(auto=auto))

    def send_grasp(self) -> None:
        self._send_trigger(wire.GraspTrigger)

    def on_datagram(self, data: bytes, now_us: int) -> None:
        try:
            pkt = wire.decode(data)
        except wire.WireError:
            return
        if isinstance(pkt.body, wire.TelemetryMsg):
            if self.latest_telem is None or pkt.body.t >= self.latest_telem.t:
                self.latest_telem = pkt.body

    # -- periodic work -----------------------------------------------------

    def recognition_tick(self) -> None:
        if self.latest_telem is None:
            return
        now = self.clock.now_us
        frame = self.latest_telem
        snap = self.world.target_at(frame.t)
        obs = self.recognizer.recognize(frame, snap)
        self.obs_sent += 1
        self._send(wire.TagObsMsg(visible=obs.visible, c_x=obs.c_x, c_y=obs.c_y,
                                  side_px=obs.side_px, capture_ts=obs.timestamp))
        if not self.mode_auto:
            return
        cmd = self.controller.on_observation(obs, now,
                                             grasp_duration_s=self.scn.grasp_script.duration_s)
        if cmd.trigger_grasp:
            self.send_grasp()
        self.auto_cmd = cmd
        if self.controller.phase is Phase.DONE and self.controller.success is None:
            started = self.controller._grasp_started or 0
            # judge from a frame captured safely after the edge-side script end
            # (downlink delivery + script duration; 0.6 s covers test links)
            ready = started + round((self.scn.grasp_script.duration_s + 0.6) * 1e6)
            if frame.t >= ready:
                self.controller.finish(frame.grasping)

    def _teleop_at(self, now_us: int) -> tuple[float, float, float]:
        t = now_us / 1e6
        fwd = yaw = h = 0.0
        for i, seg in enumerate(self.scn.teleop_trace):
            kind = seg["type"]
            if kind == "drive" and seg["t0"] <= t < seg["t1"]:
                fwd += seg.get("forward", 0.0)
                yaw += seg.get("yaw", 0.0)
            elif kind == "height" and seg["t0"] <= t < seg["t1"]:
                h += seg.get("rate", 0.0)
            elif kind == "grasp" and t >= seg["t"] and i not in self._trace_fired:
                self._trace_fired.add(i)
                self.send_grasp()
            elif kind == "mode" and t >= seg["t"] and i not in self._trace_fired:
                self._trace_fired.add(i)
                self.set_mode(bool(seg.get("auto", True)))
        return fwd, yaw, h

    def command_tick(self) -> None:
        now = self.clock.now_us
        if self.scn.mode == "auto" and not self._mode_sent \
                and now >= self.scn.auto_engage_s * 1e6:
            self._mode_sent = True
            self.set_mode(True)
        # trace is always evaluated so one-shot grasp/mode events fire, but
        # its drive values only apply while the operator still has the stick
        tf, ty, th = self._teleop_at(now)
        fwd = yaw = h = 0.0
        if not self.mode_auto:
            fwd, yaw, h = tf, ty, th
        elif self.controller.phase in (Phase.NAVIGATE, Phase.HEIGHT):
            fwd = self.auto_cmd.forward
            yaw = self.auto_cmd.yaw_rate
            h = self.auto_cmd.height_rate
        if fwd != 0.0 or yaw != 0.0:
            self._send(wire.Velocity(forward=fwd, yaw=yaw))
        if h != 0.0:
            self._send(wire.HeightRate(rate=h))


@dataclass
class RunResult:
    success: bool
    duration_s: float
    min_e_norm: float
    fell: bool
    stop_latency_ms: float | None
    stop_latency_send_ms: float | None
    phase: str
    telemetry: JsonlLog = field(repr=False, default=None)
    phase_log: JsonlLog = field(repr=False, default=None)
    link_logs: dict = field(repr=False, default_factory=dict)
    link_stats: dict = field(default_factory=dict)

    def metrics(self) -> dict:
        e = self.min_e_norm
        return {
            "success": self.success,
            "duration_s": round(self.duration_s, 3),
            "min_e_norm": round(e, 6) if math.isfinite(e) else -1.0,
            "fell": self.fell,
            "stop_latency_ms": None if self.stop_latency_ms is None
                               else round(self.stop_latency_ms, 3),
            "stop_latency_send_ms": None if self.stop_latency_send_ms is None
                                    else round(self.stop_latency_send_ms, 3),
            "phase": self.phase,
        }


class Topology:
    """One fully wired simulation instance (one repetition)."""

    LINKS = ("cloud_rcu", "rcu_edge", "edge_rcu", "rcu_cloud")

    def __init__(self, scn: Scenario, rep: int = 0, out_dir=None):
        self.scn = scn
        self.rep = rep
        self.clock = VirtualClock()
        self.world = World(scn, rep)
        _p = (lambda name: None) if out_dir is None else \
            (lambda name: f"{out_dir}/{name}.jsonl")
        self.telemetry_log = JsonlLog(_p("telemetry"))
        self.phase_log = JsonlLog(_p("phase"))
        self.link_logs = {name: JsonlLog(_p(f"link_{name}")) for name in self.LINKS}

        self.edge = EdgeNode(scn, self.world, self.clock, self.telemetry_log)
        self.rcu = RcuNode(self.clock, scn.rcu_delay_ms)
        self.cloud = CloudNode(scn, self.world, self.clock, rep, self.phase_log)

        def mklink(name, profile_key, direction, deliver):
            return Link(name, scn.link_profile(profile_key, direction, rep), self.clock,
                        deliver, log=self.link_logs[name].write)

        self.links = {
            "cloud_rcu": mklink("cloud_rcu", "cloud_rcu", 0,
                                lambda d, t: self.rcu.forward(d, "down")),
            "rcu_edge": mklink("rcu_edge", "rcu_edge", 1,
                               lambda d, t: self.edge.on_datagram(d, t)),
            "edge_rcu": mklink("edge_rcu", "rcu_edge", 2,
                               lambda d, t: self.rcu.forward(d, "up")),
            "rcu_cloud": mklink("rcu_cloud", "cloud_rcu", 3,
                                lambda d, t: self.cloud.on_datagram(d, t)),
        }
        self.cloud.downlink = self.links["cloud_rcu"]
        self.rcu.out["down"] = self.links["rcu_edge"]
        self.rcu.out["up"] = self.links["rcu_cloud"]
        self.edge.uplink = self.links["edge_rcu"]

        self._event_rng = random.Random(rep_seed(scn, rep) ^ 0xE7E47)
        self._install_events()

    # -- scenario events ---------------------------------------------------

    def _install_events(self) -> None:
        for ev in self.scn.events:
            kind = ev["type"]
            if kind == "displace_target":
                trig = ev.get("trigger", {})
                if "t" in trig:
                    self.clock.push(round(trig["t"] * 1e6),
                                    lambda e=ev: self._displace_target(e))
                elif trig.get("phase") == "grasp":
                    delay_us = round(trig.get("delay_s", 0.0) * 1e6)

                    def hook(start_us, e=ev, d=delay_us):
                        self.clock.push(start_us + d, lambda: self._displace_target(e))
                    self.world._grasp_hooks.append(hook)
            elif kind == "arm_noise":
                start = round(ev.get("start_s", 5.0) * 1e6)
                period = round(ev.get("period_s", 2.0) * 1e6)
                mag = ev.get("magnitude", 0.1)
                self._schedule_arm_noise(start, period, mag)
            elif kind == "sever_link":
                t = round(ev.get("t", 0.0) * 1e6)
                names = ev.get("links", list(self.LINKS))
                self.clock.push(t, lambda ns=names: self._sever(ns))

    def _displace_target(self, ev: dict) -> None:
        p = self.world.target.pos
        self.world.target.pos = (p[0] + ev.get("dx", 0.0), p[1] + ev.get("dy", 0.0),
                                 p[2] + ev.get("dz", 0.0))

    def _schedule_arm_noise(self, at_us: int, period_us: int, mag: float) -> None:
        def fire():
            if not self.world.robot.fallen:
                rest = self.scn.dynamics.arm_rest
                def jig():
                    dx = self._event_rng.uniform(-mag, mag)
                    dy = self._event_rng.uniform(-mag, mag)
                    n = math.hypot(dx, dy)
                    if n > mag:
                        dx, dy = dx / n * mag, dy / n * mag
                    return (rest[0] + dx, rest[1] + dy)
                self.world.robot.limbs.arm_com = (jig(), jig())
            self._schedule_arm_noise(self.clock.now_us + period_us, period_us, mag)
        self.clock.push(at_us, fire)

    def _sever(self, names) -> None:
        for n in names:
            self.links[n].severed = True

    # -- main loop ----------------------------------------------------------

    def run(self) -> RunResult:
        scn = self.scn
        r = scn.rates
        end_us = round(scn.duration_s * 1e6)

        def make_periodic(period_us, fn, first_us):
            def tick():
                fn()
                nxt = self.clock.now_us + period_us
                if nxt <= end_us:
                    self.clock.push(nxt, tick)
            self.clock.push(first_us, tick)

        make_periodic(r.edge_tick_us, self.edge.tick, r.edge_tick_us)
        make_periodic(r.cloud_tick_us, self.cloud.recognition_tick, r.cloud_tick_us)
        make_periodic(r.command_tick_us, self.cloud.command_tick, r.command_tick_us)

        chunk = 100_000  # 100 ms
        now = 0
        settle_until = None
        while now < end_us:
            now = min(now + chunk, end_us)
            self.clock.run_until(now)
            if scn.stop_on_done and settle_until is None \
                    and self.cloud.controller.phase in (Phase.DONE, Phase.ABORTED) \
                    and self.cloud.controller.success is not None:
                settle_until = min(end_us, now + 1_500_000)
            if settle_until is not None and now >= settle_until:
                break
        return self._result(now / 1e6)

    def _result(self, ran_s: float) -> RunResult:
        ctl = self.cloud.controller
        grasped = self.edge.grasp.result if self.edge.grasp else None
        success = bool(grasped) if grasped is not None else bool(ctl.success)
        dur = ran_s
        if self.edge.grasp and self.edge.grasp.end_us is not None:
            dur = self.edge.grasp.end_us / 1e6
        stop_ms = None
        stop_send_ms = None
        for evd in self.edge.stop_events:
            if evd["last_arrival"] is not None:
                ms = (evd["t_zero"] - evd["last_arrival"]) / 1000.0
                stop_ms = ms if stop_ms is None else max(stop_ms, ms)
            ct = ChannelType(evd["channel"])
            sent = self.cloud.last_send_us.get(ct)
            if sent is not None and evd["t_zero"] >= sent:
                ms = (evd["t_zero"] - sent) / 1000.0
                stop_send_ms = ms  # last stop per channel wins
        return RunResult(
            success=success, duration_s=dur, min_e_norm=ctl.min_e_norm,
            fell=self.world.robot.fallen, stop_latency_ms=stop_ms,
            stop_latency_send_ms=stop_send_ms, phase=ctl.phase.value,
            telemetry=self.telemetry_log, phase_log=self.phase_log,
            link_logs=self.link_logs,
            link_stats={n: vars(l.stats) for n, l in self.links.items()},
        )

    def close(self) -> None:
        self.telemetry_log.close()
        self.phase_log.close()
        for lg in self.link_logs.values():
            lg.close()

    # -- live UI support ----------------------------------------------------

    def ui_frame(self) -> dict:
        robot = self.world.robot
        obs = self.edge.latest_obs
        ctl = self.cloud.controller
        e = ctl.min_e_norm
        return {
            "t": self.clock.now_us,
            "robot": {"x": robot.x, "y": robot.y, "heading": robot.heading,
                      "psi": robot.lean_angle, "psi_dot": robot.lean_rate,
                      "v": robot.com_velocity, "height": robot.body_height,
                      "fallen": robot.fallen, "grasping": robot.grasping},
            "obs": None if obs is None else {
                "visible": obs.visible, "c_x": obs.c_x, "c_y": obs.c_y,
                "side_px": obs.side_px, "capture_ts": obs.capture_ts},
            "phase": ctl.phase.value,
            "e_norm": round(e, 4) if math.isfinite(e) else None,
            "mode_auto": self.cloud.mode_auto,
            "target_size_px": self.scn.servo.target_size_px,
            "image": {"w": self.scn.camera.image_w, "h": self.scn.camera.image_h},
            "heartbeat": self.edge.bank.snapshot(self.clock.now_us),
            "link_stats": {n: vars(l.stats) for n, l in self.links.items()},
        }

    def inject_command(self, cmd: dict) -> None:
        """UI-originated command (same shapes the scripted teleop emits)."""
        kind = cmd.get("type")
        if kind == "velocity":
            self.cloud._send(wire.Velocity(forward=float(cmd.get("forward", 0.0)),
                                           yaw=float(cmd.get("yaw", 0.0))))
        elif kind == "height":
            self.cloud._send(wire.HeightRate(rate=float(cmd.get("rate", 0.0))))
        elif kind == "grasp":
            self.cloud.send_grasp()
        elif kind == "mode":
            self.cloud.set_mode(bool(cmd.get("value", 1)))


def run_topology(scn: Scenario, rep: int = 0, out_dir=None) -> RunResult:
    topo = Topology(scn, rep, out_dir=out_dir)
    try:
        return topo.run()
    finally:
        topo.close()

"""Live backend: real UDP datagrams on loopback, shaped by a proxy.

The same node logic that runs under the virtual clock runs here against wall
time; each hop (cloud <-> RCU <-> edge) passes through a ShapingProxy thread
that applies the scenario's LinkProfile (latency, jitter, drop, reorder) to
real packets. Intended for demos; CI sticks to the deterministic backend.
"""

from __future__ import annotations

import heapq
import logging
import random
import socket
import threading
import time

from .config import Scenario
from .netsim import LinkProfile
from .nodes import CloudNode, EdgeNode, RcuNode, World
from .telemetry import JsonlLog

log = logging.getLogger("fogservo.live")


class WallClock:
    """Monotonic wall time in microseconds since start, with timer-based
    deferred calls so RCU forwarding works unchanged."""

    def __init__(self):
        self._t0 = time.monotonic()
        self._timers: list[threading.Timer] = []

    @property
    def now_us(self) -> int:
        return round((time.monotonic() - self._t0) * 1e6)

    def push(self, due_us: int, fn=None, tag=None) -> None:
        delay = max(0.0, (due_us - self.now_us) / 1e6)
        t = threading.Timer(delay, fn) if fn else None
        if t:
            t.daemon = True
            t.start()
            self._timers.append(t)

    def cancel_all(self) -> None:
        for t in self._timers:
            t.cancel()


class UdpSender:
    """Link-shaped adapter: .send(bytes) pushes a datagram at a UDP address."""

    def __init__(self, sock: socket.socket, addr: tuple[str, int]):
        self.sock = sock
        self.addr = addr
        self.severed = False

    def send(self, data: bytes, now_us: int | None = None) -> None:
        if self.severed:
            return
        try:
            self.sock.sendto(data, self.addr)
        except OSError:
            pass  # socket already torn down during shutdown


class ShapingProxy(threading.Thread):
    """Receives datagrams on in_port and re-emits them to out_addr after
    applying the link profile. One scheduler thread per direction."""

    def __init__(self, name: str, in_port: int, out_addr: tuple[str, int],
                 profile: LinkProfile):
        super().__init__(daemon=True, name=f"proxy-{name}")
        self.profile = profile
        self.out_addr = out_addr
        self.rng = random.Random(profile.seed)
        self.in_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.in_sock.bind(("127.0.0.1", in_port))
        self.in_sock.settimeout(0.1)
        self.out_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._heap: list[tuple[float, int, bytes]] = []
        self._tie = 0
        self._last_due: float | None = None
        self._lock = threading.Condition()
        self._stop = False
        self._pump = threading.Thread(target=self._drain, daemon=True,
                                      name=f"proxy-{name}-out")

    @property
    def port(self) -> int:
        return self.in_sock.getsockname()[1]

    def run(self) -> None:
        self._pump.start()
        while not self._stop:
            try:
                data, _ = self.in_sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                break
            if self.rng.random() < self.profile.drop_prob:
                continue
            jit = self.profile.jitter_ms
            delay = self.profile.base_latency_ms + self.rng.uniform(-jit, jit)
            due = time.monotonic() + max(0.0, delay) / 1e3
            with self._lock:
                self._tie += 1
                if (self._last_due is not None and self._last_due > time.monotonic()
                        and self.rng.random() < self.profile.reorder_prob):
                    # jump ahead of the previous in-flight packet
                    due, self._last_due = self._last_due, due
                else:
                    self._last_due = due
                heapq.heappush(self._heap, (due, self._tie, data))
                self._lock.notify()

    def _drain(self) -> None:
        while not self._stop:
            with self._lock:
                if not self._heap:
                    self._lock.wait(0.05)
                    continue
                due, _, data = self._heap[0]
                wait = due - time.monotonic()
                if wait > 0:
                    self._lock.wait(min(wait, 0.05))
                    continue
                heapq.heappop(self._heap)
            try:
                self.out_sock.sendto(data, self.out_addr)
            except OSError:
                break

    def stop(self) -> None:
        self._stop = True
        self.in_sock.close()


class _Receiver(threading.Thread):
    def __init__(self, name: str, sock: socket.socket, handler, clock: WallClock):
        super().__init__(daemon=True, name=f"recv-{name}")
        self.sock = sock
        self.handler = handler
        self.clock = clock
        self._stop = False

    def run(self) -> None:
        self.sock.settimeout(0.1)
        while not self._stop:
            try:
                data, _ = self.sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                break
            self.handler(data, self.clock.now_us)

    def stop(self) -> None:
        self._stop = True
        self.sock.close()


class LiveTopology:
    """Wall-clock variant of nodes.Topology over loopback UDP."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.clock = WallClock()
        self.world = World(scn, rep=0)
        self.telemetry_log = JsonlLog()
        self.phase_log = JsonlLog()
        self.edge = EdgeNode(scn, self.world, self.clock, self.telemetry_log)
        self.rcu = RcuNode(self.clock, scn.rcu_delay_ms)
        self.cloud = CloudNode(scn, self.world, self.clock, 0, self.phase_log)

        def sock() -> socket.socket:
            s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            s.bind(("127.0.0.1", 0))
            return s

        self.cloud_sock = sock()
        self.rcu_down_sock = sock()
        self.rcu_up_sock = sock()
        self.edge_sock = sock()
        edge_addr = self.edge_sock.getsockname()
        cloud_addr = self.cloud_sock.getsockname()

        self.proxies = [
            ShapingProxy("cloud_rcu", 0, self.rcu_down_sock.getsockname(),
                         scn.link_profile("cloud_rcu", 0)),
            ShapingProxy("rcu_edge", 0, edge_addr, scn.link_profile("rcu_edge", 1)),
            ShapingProxy("edge_rcu", 0, self.rcu_up_sock.getsockname(),
                         scn.link_profile("rcu_edge", 2)),
            ShapingProxy("rcu_cloud", 0, cloud_addr, scn.link_profile("cloud_rcu", 3)),
        ]
        p_cloud_rcu, p_rcu_edge, p_edge_rcu, p_rcu_cloud = self.proxies
        self.cloud.downlink = UdpSender(self.cloud_sock, ("127.0.0.1", p_cloud_rcu.port))
        self.rcu.out["down"] = UdpSender(self.rcu_down_sock, ("127.0.0.1", p_rcu_edge.port))
        self.rcu.out["up"] = UdpSender(self.rcu_up_sock, ("127.0.0.1", p_rcu_cloud.port))
        self.edge.uplink = UdpSender(self.edge_sock, ("127.0.0.1", p_edge_rcu.port))

        self.receivers = [
            _Receiver("rcu-down", self.rcu_down_sock,
                      lambda d, t: self.rcu.forward(d, "down"), self.clock),
            _Receiver("rcu-up", self.rcu_up_sock,
                      lambda d, t: self.rcu.forward(d, "up"), self.clock),
            _Receiver("edge", self.edge_sock, self.edge.on_datagram, self.clock),
            _Receiver("cloud", self.cloud_sock, self.cloud.on_datagram, self.clock),
        ]
        self._stop = False

    def start(self) -> None:
        for p in self.proxies:
            p.start()
        for r in self.receivers:
            r.start()
        threading.Thread(target=self._edge_loop, daemon=True, name="edge-loop").start()
        threading.Thread(target=self._cloud_loop, daemon=True, name="cloud-loop").start()

    def _edge_loop(self) -> None:
        period = 1.0 / self.scn.rates.edge_hz
        nxt = time.monotonic()
        while not self._stop:
            self.edge.tick()
            nxt += period
            delay = nxt - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                nxt = time.monotonic()  # fell behind; don't burst

    def _cloud_loop(self) -> None:
        period_cmd = 1.0 / self.scn.rates.command_hz
        every_rec = max(1, round(self.scn.rates.command_hz / self.scn.rates.cloud_hz))
        n = 0
        nxt = time.monotonic()
        while not self._stop:
            if n % every_rec == 0:
                self.cloud.recognition_tick()
            self.cloud.command_tick()
            n += 1
            nxt += period_cmd
            delay = nxt - time.monotonic()
            if delay > 0:
                time.sleep(delay)

    def stop(self) -> None:
        self._stop = True
        for sender in (self.cloud.downlink, self.rcu.out["down"], self.rcu.out["up"],
                       self.edge.uplink):
            if sender is not None:
                sender.severed = True
        self.clock.cancel_all()
        time.sleep(0.05)  # let in-flight loop iterations notice the stop flag
        for p in self.proxies:
            p.stop()
        for r in self.receivers:
            r.stop()


def run_live(scn: Scenario) -> int:
    topo = LiveTopology(scn)
    topo.start()
    log.info("live run: %s for %.1fs", scn.name, scn.duration_s)
    try:
        time.sleep(scn.duration_s)
    except KeyboardInterrupt:
        pass
    topo.stop()
    robot = topo.world.robot
    print(f"live done: phase={topo.cloud.controller.phase.value} "
          f"grasping={robot.grasping} fallen={robot.fallen}")
    return 0

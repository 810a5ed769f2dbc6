"""Websocket bridge for the browser teleop console.

Runs the deterministic topology paced to wall time, broadcasts JSON state
frames at 20 Hz on /ws, and converts incoming JSON commands into the same
CommandPackets the scripted teleop harness produces, so the live and
headless paths exercise identical server code. The built UI is served
statically from /.
"""

from __future__ import annotations

import asyncio
import json
import logging
from pathlib import Path

from aiohttp import WSMsgType, web

from .config import Scenario
from .nodes import Topology
from .telemetry import dumps

log = logging.getLogger("fogservo.bridge")

FRAME_PERIOD_S = 0.05  # 20 Hz both ways


class Bridge:
    def __init__(self, scn: Scenario, static_dir: str | None = None):
        self.scn = scn
        self.topology = Topology(scn, rep=0)
        self.static_dir = static_dir
        self.clients: set[web.WebSocketResponse] = set()
        self.commands: asyncio.Queue[dict] = asyncio.Queue()
        self._ticks_scheduled = False

    # -- simulation pacing -------------------------------------------------

    def _ensure_ticks(self) -> None:
        """Self-rescheduling node ticks without an end horizon (serve mode)."""
        if self._ticks_scheduled:
            return
        self._ticks_scheduled = True
        topo, r = self.topology, self.scn.rates

        def periodic(period_us, fn):
            def tick():
                fn()
                topo.clock.push(topo.clock.now_us + period_us, tick)
            topo.clock.push(topo.clock.now_us + period_us, tick)

        periodic(r.edge_tick_us, topo.edge.tick)
        periodic(r.cloud_tick_us, topo.cloud.recognition_tick)
        periodic(r.command_tick_us, topo.cloud.command_tick)

    async def pump(self) -> None:
        self._ensure_ticks()
        loop = asyncio.get_running_loop()
        t0 = loop.time()
        while True:
            await asyncio.sleep(FRAME_PERIOD_S)
            while not self.commands.empty():
                self.topology.inject_command(self.commands.get_nowait())
            target_us = round((loop.time() - t0) * 1e6)
            self.topology.clock.run_until(target_us)
            await self._broadcast(self.topology.ui_frame())

    async def _broadcast(self, frame: dict) -> None:
        if not self.clients:
            return
        payload = dumps(frame)
        dead = []
        for ws in self.clients:
            try:
                await ws.send_str(payload)
            except ConnectionError:
                dead.append(ws)
        for ws in dead:
            self.clients.discard(ws)

    # -- http handlers -------------------------------------------------------

    async def ws_handler(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(heartbeat=10.0)
        await ws.prepare(request)
        self.clients.add(ws)
        log.info("ui client connected (%d total)", len(self.clients))
        try:
            async for msg in ws:
                if msg.type == WSMsgType.TEXT:
                    try:
                        cmd = json.loads(msg.data)
                    except json.JSONDecodeError:
                        continue
                    if isinstance(cmd, dict) and "type" in cmd:
                        await self.commands.put(cmd)
                elif msg.type == WSMsgType.ERROR:
                    break
        finally:
            self.clients.discard(ws)
            log.info("ui client gone (%d left)", len(self.clients))
        return ws

    def build_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/ws", self.ws_handler)
        static = self.static_dir or str(Path(__file__).resolve().parents[2] / "frontend" / "dist")
        if Path(static).is_dir():
            async def index(_request: web.Request) -> web.FileResponse:
                return web.FileResponse(Path(static) / "index.html")
            app.router.add_get("/", index)
            app.router.add_static("/", static)
        return app


def serve(scn: Scenario, ws_port: int = 8765, http_port: int = 8000,
          static_dir: str | None = None) -> int:
    """Single server: static UI plus /ws on ws_port (http_port kept for
    compatibility when serving UI and socket from one port)."""
    bridge = Bridge(scn, static_dir)
    app = bridge.build_app()

    async def run() -> None:
        runner = web.AppRunner(app)
        await runner.setup()
        site = web.TCPSite(runner, "127.0.0.1", ws_port)
        await site.start()
        log.info("serving ui + websocket on http://127.0.0.1:%d (ws at /ws)", ws_port)
        await bridge.pump()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    return 0

import { InputLoop, INPUT_PERIOD_MS } from "./input.js";
import { cameraScene, drawCamera, drawSide, heartbeatBars, sideScene, statusInfo } from "./render.js";
import { ReconnectingSocket } from "./socket.js";
import { parseFrame, type UiFrame } from "./types.js";

const camCanvas = document.getElementById("camera") as HTMLCanvasElement;
const sideCanvas = document.getElementById("side") as HTMLCanvasElement;
const statusEl = document.getElementById("status") as HTMLDivElement;
const bannerEl = document.getElementById("banner") as HTMLDivElement;
const hbEl = document.getElementById("heartbeat") as HTMLDivElement;
const autoBtn = document.getElementById("auto") as HTMLButtonElement;
const graspBtn = document.getElementById("grasp") as HTMLButtonElement;

let frame: UiFrame | null = null;
let lastFrameMs = 0;
let frameErrors = 0;
let connected = false;

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const socket = new ReconnectingSocket(wsUrl, {
  onFrame: (raw) => {
    const parsed = parseFrame(raw);
    if (parsed === null) {
      frameErrors += 1;
      return;
    }
    frame = parsed;
    lastFrameMs = performance.now();
  },
  onStatus: (up) => {
    connected = up;
  },
});
socket.connect();

const input = new InputLoop((msg) => {
  socket.send(msg);
});

window.addEventListener("keydown", (ev) => {
  if (!ev.repeat) input.keyDown(ev.code);
});
window.addEventListener("keyup", (ev) => input.keyUp(ev.code));
autoBtn.addEventListener("click", () => input.engageAuto());
graspBtn.addEventListener("click", () => input.triggerGrasp());

setInterval(() => {
  const pads = navigator.getGamepads ? navigator.getGamepads() : [];
  const pad = pads && pads[0];
  if (pad) {
    input.setGamepad(pad.axes[1] ?? 0, pad.axes[0] ?? 0);
  } else {
    input.clearGamepad();
  }
  if (connected) input.tick();
}, INPUT_PERIOD_MS);

function paint(): void {
  const camCtx = camCanvas.getContext("2d")!;
  const sideCtx = sideCanvas.getContext("2d")!;
  if (frame) {
    drawCamera(camCtx, cameraScene(frame));
    drawSide(sideCtx, sideScene(frame));
    hbEl.textContent = heartbeatBars(frame);
  }
  const status = statusInfo(frame, performance.now(), lastFrameMs, frameErrors);
  statusEl.textContent = connected ? status.text : "disconnected - reconnecting...";
  bannerEl.style.display = status.degraded || !connected ? "block" : "none";
  requestAnimationFrame(paint);
}
requestAnimationFrame(paint);

// Scene computation is pure (and unit-tested); canvas painting is a thin
// layer over it.

import type { UiFrame } from "./types.js";

export interface CameraScene {
  width: number;
  height: number;
  centerLineX: number;
  greenBox: { cx: number; cy: number; size: number };
  tagPoly: Array<[number, number]> | null;
  tagLost: boolean;
  overlap: boolean;
}

/** Camera view: center line and target box are fixed; the tag square is
 * rebuilt from the streamed center + pixel size. */
export function cameraScene(frame: UiFrame): CameraScene {
  const { w, h } = frame.image;
  const target = frame.target_size_px;
  const obs = frame.obs;
  let tagPoly: Array<[number, number]> | null = null;
  let overlap = false;
  if (obs && obs.visible) {
    const s = obs.side_px / 2;
    tagPoly = [
      [obs.c_x - s, obs.c_y - s],
      [obs.c_x + s, obs.c_y - s],
      [obs.c_x + s, obs.c_y + s],
      [obs.c_x - s, obs.c_y + s],
    ];
    overlap =
      Math.abs(obs.c_x - w / 2) < 12 &&
      Math.abs(obs.c_y - h / 2) < 12 &&
      Math.abs(obs.side_px - target) < 8;
  }
  return {
    width: w,
    height: h,
    centerLineX: w / 2,
    greenBox: { cx: w / 2, cy: h / 2, size: target },
    tagPoly,
    tagLost: !obs || !obs.visible,
    overlap,
  };
}

export interface SideScene {
  wheel: { x: number; y: number; r: number };
  pendulum: { x1: number; y1: number; x2: number; y2: number; deg: number };
  com: { x: number; y: number };
  fallen: boolean;
}

const SIDE_W = 260;
const SIDE_H = 260;
const PX_PER_M = 180;

/** Side elevation: wheel on the ground, pendulum line at the lean angle,
 * CoM marker at the tip. */
export function sideScene(frame: UiFrame): SideScene {
  const wheelR = 0.1 * PX_PER_M;
  const cx = SIDE_W / 2;
  const ground = SIDE_H - 20;
  const wy = ground - wheelR;
  const len = (frame.robot.height + 0.1) * PX_PER_M * 0.75;
  const psi = frame.robot.psi;
  const tipX = cx + Math.sin(psi) * len;
  const tipY = wy - Math.cos(psi) * len;
  return {
    wheel: { x: cx, y: wy, r: wheelR },
    pendulum: { x1: cx, y1: wy, x2: tipX, y2: tipY, deg: (psi * 180) / Math.PI },
    com: { x: tipX, y: tipY },
    fallen: frame.robot.fallen,
  };
}

export interface StatusInfo {
  text: string;
  degraded: boolean;
}

export const STALE_MS = 500;

/** Status strip plus the link-degraded banner for stale frames. */
export function statusInfo(frame: UiFrame | null, nowMs: number, lastFrameMs: number,
                           errorCount: number): StatusInfo {
  const degraded = frame === null || nowMs - lastFrameMs > STALE_MS;
  if (!frame) {
    return { text: "waiting for telemetry...", degraded };
  }
  const e = frame.e_norm === null ? "-" : frame.e_norm.toFixed(3);
  const mode = frame.mode_auto ? "AUTO" : "TELEOP";
  const v = frame.robot.v.toFixed(2);
  const parts = [
    `t=${(frame.t / 1e6).toFixed(1)}s`,
    mode,
    `phase=${frame.phase}`,
    `|e|=${e}`,
    `v=${v} m/s`,
    `h=${frame.robot.height.toFixed(2)} m`,
  ];
  if (frame.robot.fallen) parts.push("FALLEN");
  if (frame.robot.grasping) parts.push("GRASPING");
  if (errorCount > 0) parts.push(`frame errors=${errorCount}`);
  return { text: parts.join("  |  "), degraded };
}

// --- painting ----------------------------------------------------------

export function drawCamera(ctx: CanvasRenderingContext2D, scene: CameraScene): void {
  ctx.clearRect(0, 0, scene.width, scene.height);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, scene.width, scene.height);

  ctx.strokeStyle = "#a64dff"; // purple center line
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(scene.centerLineX, 0);
  ctx.lineTo(scene.centerLineX, scene.height);
  ctx.stroke();

  const g = scene.greenBox;
  ctx.strokeStyle = scene.overlap ? "#7dff7d" : "#2e8b2e";
  ctx.lineWidth = scene.overlap ? 3 : 1.5;
  ctx.strokeRect(g.cx - g.size / 2, g.cy - g.size / 2, g.size, g.size);

  if (scene.tagPoly) {
    ctx.strokeStyle = "#ffffff";
    ctx.fillStyle = "rgba(255,255,255,0.15)";
    ctx.lineWidth = 2;
    ctx.beginPath();
    scene.tagPoly.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
    ctx.closePath();
    ctx.fill();
    ctx.stroke();
  } else {
    ctx.fillStyle = "#ff6666";
    ctx.font = "16px monospace";
    ctx.fillText("tag lost", 12, 24);
  }
}

export function drawSide(ctx: CanvasRenderingContext2D, scene: SideScene): void {
  ctx.clearRect(0, 0, SIDE_W, SIDE_H);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, SIDE_W, SIDE_H);
  ctx.strokeStyle = "#555";
  ctx.beginPath();
  ctx.moveTo(0, scene.wheel.y + scene.wheel.r);
  ctx.lineTo(SIDE_W, scene.wheel.y + scene.wheel.r);
  ctx.stroke();

  ctx.strokeStyle = scene.fallen ? "#ff4444" : "#cccccc";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.arc(scene.wheel.x, scene.wheel.y, scene.wheel.r, 0, Math.PI * 2);
  ctx.stroke();

  const p = scene.pendulum;
  ctx.strokeStyle = scene.fallen ? "#ff4444" : "#6db3ff";
  ctx.beginPath();
  ctx.moveTo(p.x1, p.y1);
  ctx.lineTo(p.x2, p.y2);
  ctx.stroke();

  ctx.fillStyle = "#ffd24d";
  ctx.beginPath();
  ctx.arc(scene.com.x, scene.com.y, 5, 0, Math.PI * 2);
  ctx.fill();

  ctx.fillStyle = "#888";
  ctx.font = "12px monospace";
  ctx.fillText(`lean ${p.deg.toFixed(1)} deg`, 8, 16);
}

export function heartbeatBars(frame: UiFrame): string {
  return Object.entries(frame.heartbeat)
    .map(([name, st]) => `${name}:${st.active ? "#" : "."}${st.ramp.toFixed(2)}`)
    .join(" ");
}

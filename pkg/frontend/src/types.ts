// Mirror of the websocket frame the bridge broadcasts at 20 Hz.

export interface RobotPose {
  x: number;
  y: number;
  heading: number;
  psi: number;
  psi_dot: number;
  v: number;
  height: number;
  fallen: boolean;
  grasping: boolean;
}

export interface TagObs {
  visible: boolean;
  c_x: number;
  c_y: number;
  side_px: number;
  capture_ts: number;
}

export interface HeartbeatState {
  active: boolean;
  ramp: number;
  value: number;
}

export interface UiFrame {
  t: number; // simulation microseconds
  robot: RobotPose;
  obs: TagObs | null;
  phase: string;
  e_norm: number | null;
  mode_auto: boolean;
  target_size_px: number;
  image: { w: number; h: number };
  heartbeat: Record<string, HeartbeatState>;
  link_stats: Record<string, { sent: number; delivered: number; dropped: number; swapped: number }>;
}

const isNum = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);
const isBool = (v: unknown): v is boolean => typeof v === "boolean";

/** Schema guard: malformed frames are skipped, never rendered. */
export function parseFrame(raw: unknown): UiFrame | null {
  if (typeof raw !== "object" || raw === null) return null;
  const f = raw as Record<string, unknown>;
  if (!isNum(f.t) || typeof f.phase !== "string") return null;
  const r = f.robot as Record<string, unknown> | undefined;
  if (!r) return null;
  for (const k of ["x", "y", "heading", "psi", "psi_dot", "v", "height"]) {
    if (!isNum(r[k])) return null;
  }
  if (!isBool(r.fallen) || !isBool(r.grasping)) return null;
  const img = f.image as Record<string, unknown> | undefined;
  if (!img || !isNum(img.w) || !isNum(img.h)) return null;
  if (!isNum(f.target_size_px)) return null;
  let obs: TagObs | null = null;
  if (f.obs !== null && f.obs !== undefined) {
    const o = f.obs as Record<string, unknown>;
    if (!isBool(o.visible) || !isNum(o.c_x) || !isNum(o.c_y) || !isNum(o.side_px)) {
      return null;
    }
    obs = o as unknown as TagObs;
  }
  if (typeof f.heartbeat !== "object" || f.heartbeat === null) return null;
  return {
    t: f.t,
    robot: r as unknown as RobotPose,
    obs,
    phase: f.phase,
    e_norm: isNum(f.e_norm) ? f.e_norm : null,
    mode_auto: f.mode_auto === true,
    target_size_px: f.target_size_px,
    image: { w: img.w as number, h: img.h as number },
    heartbeat: f.heartbeat as Record<string, HeartbeatState>,
    link_stats: (f.link_stats ?? {}) as UiFrame["link_stats"],
  };
}

export type CommandMsg =
  | { type: "velocity"; forward: number; yaw: number }
  | { type: "height"; rate: number }
  | { type: "grasp" }
  | { type: "mode"; value: number };

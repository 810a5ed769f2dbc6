// Keyboard/gamepad state sampled on a fixed 50 ms timer, matching the
// heartbeat streaming model: held inputs emit commands at 20 Hz, release
// just stops emitting and the edge-side window winds the robot down.

import type { CommandMsg } from "./types.js";

export const INPUT_PERIOD_MS = 50;

const SPEED = 0.3; // m/s per held key
const YAW = 0.6; // rad/s
const HEIGHT_RATE = 0.05; // m/s

export class InputLoop {
  private held = new Set<string>();
  private gamepadAxes: { forward: number; yaw: number } | null = null;

  constructor(private send: (msg: CommandMsg) => void) {}

  keyDown(code: string): void {
    this.held.add(code);
    // single-shot actions fire on the edge, not while held
    if (code === "Space") this.triggerGrasp();
    if (code === "KeyM") this.engageAuto();
  }

  keyUp(code: string): void {
    this.held.delete(code);
  }

  setGamepad(forward: number, yaw: number): void {
    const dead = (v: number) => (Math.abs(v) < 0.12 ? 0 : v);
    this.gamepadAxes = { forward: dead(forward), yaw: dead(yaw) };
  }

  clearGamepad(): void {
    this.gamepadAxes = null;
  }

  triggerGrasp(): void {
    this.send({ type: "grasp" });
  }

  engageAuto(): void {
    this.send({ type: "mode", value: 1 });
  }

  disengageAuto(): void {
    this.send({ type: "mode", value: 0 });
  }

  /** One 20 Hz sample: emit held commands, silence otherwise. */
  tick(): CommandMsg[] {
    const out: CommandMsg[] = [];
    let forward = 0;
    let yaw = 0;
    if (this.held.has("KeyW")) forward += SPEED;
    if (this.held.has("KeyS")) forward -= SPEED;
    if (this.held.has("KeyA")) yaw += YAW;
    if (this.held.has("KeyD")) yaw -= YAW;
    if (this.gamepadAxes) {
      forward += -this.gamepadAxes.forward * SPEED; // stick up is negative
      yaw += -this.gamepadAxes.yaw * YAW;
    }
    forward += 0; // squash negative zero from axis math
    yaw += 0;
    let height = 0;
    if (this.held.has("KeyQ")) height += HEIGHT_RATE;
    if (this.held.has("KeyE")) height -= HEIGHT_RATE;

    if (forward !== 0 || yaw !== 0) {
      out.push({ type: "velocity", forward, yaw });
    }
    if (height !== 0) {
      out.push({ type: "height", rate: height });
    }
    for (const msg of out) this.send(msg);
    return out;
  }
}

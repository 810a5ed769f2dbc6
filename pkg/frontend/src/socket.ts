// Reconnecting websocket wrapper. The UI is stateless for control: while
// disconnected nothing is sent and the edge heartbeat stops the robot.

export interface SocketHooks {
  onFrame: (raw: unknown) => void;
  onStatus: (connected: boolean) => void;
}

type WsFactory = (url: string) => WebSocket;

export class ReconnectingSocket {
  private ws: WebSocket | null = null;
  private closed = false;
  private attempt = 0;

  constructor(
    private url: string,
    private hooks: SocketHooks,
    private factory: WsFactory = (u) => new WebSocket(u),
    private schedule: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  connect(): void {
    if (this.closed) return;
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.attempt = 0;
      this.hooks.onStatus(true);
    };
    ws.onmessage = (ev: MessageEvent) => {
      try {
        this.hooks.onFrame(JSON.parse(ev.data as string));
      } catch {
        /* malformed frame: skipped, counted by the caller */
      }
    };
    ws.onclose = () => {
      this.hooks.onStatus(false);
      this.retry();
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  backoffMs(attempt: number): number {
    return Math.min(8000, 500 * 2 ** attempt);
  }

  private retry(): void {
    if (this.closed) return;
    const delay = this.backoffMs(this.attempt);
    this.attempt += 1;
    this.schedule(() => this.connect(), delay);
  }

  send(obj: unknown): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(obj));
      return true;
    }
    return false;
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}

// Latest-wins rate limiter for control messages. Pad drags and slider
// moves arrive at pointer rate (hundreds per second); the wire sees at
// most maxPerSecond messages, and a burst collapses to the newest value
// per control.

type Sender = (msg: object) => void;

export class MessageThrottle {
  private readonly send: Sender;
  private readonly intervalMs: number;
  private pending = new Map<string, object>();
  private lastSent = -Infinity;
  private timer: ReturnType<typeof setTimeout> | null = null;
  sentCount = 0;

  constructor(send: Sender, maxPerSecond = 30) {
    if (maxPerSecond <= 0) throw new Error("maxPerSecond must be positive");
    this.send = send;
    this.intervalMs = 1000 / maxPerSecond;
  }

  /** Queue a message under a coalescing key (e.g. "style" or "desc:brightness"). */
  push(key: string, msg: object): void {
    this.pending.set(key, msg);
    this.pump();
  }

  /** Messages waiting for the next send slot. */
  get pendingCount(): number {
    return this.pending.size;
  }

  private pump(): void {
    if (this.pending.size === 0) return;
    const now = Date.now();
    if (now - this.lastSent >= this.intervalMs) {
      // one message per slot keeps the combined wire rate capped even
      // when several controls move at once
      const key = this.pending.keys().next().value as string;
      const msg = this.pending.get(key)!;
      this.pending.delete(key);
      this.lastSent = now;
      this.sentCount += 1;
      this.send(msg);
    }
    if (this.pending.size > 0 && this.timer === null) {
      const wait = Math.max(0, this.lastSent + this.intervalMs - now);
      this.timer = setTimeout(() => {
        this.timer = null;
        this.pump();
      }, wait);
    }
  }

  /** Drop anything queued (e.g. on disconnect). */
  clear(): void {
    this.pending.clear();
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}

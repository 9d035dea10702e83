import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { WavespaceClient } from "../src/client.js";
import { WaveformFrame } from "../src/protocol.js";

type Listener = (event: any) => void;

class FakeSocket {
  sent: string[] = [];
  closed = false;
  listeners = new Map<string, Listener[]>();

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }

  addEventListener(type: string, listener: Listener): void {
    const bucket = this.listeners.get(type) ?? [];
    bucket.push(listener);
    this.listeners.set(type, bucket);
  }

  emit(type: string, event: object = {}): void {
    for (const fn of this.listeners.get(type) ?? []) fn(event);
  }
}

function connected() {
  const socket = new FakeSocket();
  const frames: WaveformFrame[] = [];
  const errors: string[] = [];
  const statuses: string[] = [];
  const client = new WavespaceClient(
    "ws://test",
    {
      onFrame: (f) => frames.push(f),
      onError: (m) => errors.push(m),
      onStatus: (s) => statuses.push(s),
    },
    () => socket,
  );
  socket.emit("open");
  return { socket, client, frames, errors, statuses };
}

describe("WavespaceClient", () => {
  beforeEach(() => {
    vi.useFakeTimers();
    vi.setSystemTime(0);
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("reports the connection lifecycle", () => {
    const { socket, client, statuses } = connected();
    expect(client.status).toBe("open");
    socket.emit("close");
    expect(client.status).toBe("closed");
    expect(statuses).toEqual(["open", "closed"]);
  });

  it("sends a clamped set_style for a pad drag", () => {
    const { socket, client } = connected();
    client.padDrag(0, 100, -2);
    expect(socket.sent).toHaveLength(1);
    expect(JSON.parse(socket.sent[0])).toEqual({ type: "set_style", subspace: 0, x: 8, y: -2 });
  });

  it("coalesces a drag burst through the throttle", () => {
    const { socket, client } = connected();
    for (let i = 0; i < 200; i++) {
      client.padDrag(0, i / 100, 0);
      vi.advanceTimersByTime(5);
    }
    vi.advanceTimersByTime(200);
    expect(socket.sent.length).toBeLessThanOrEqual(31);
    const last = JSON.parse(socket.sent[socket.sent.length - 1]);
    expect(last.x).toBeCloseTo(1.99, 10);
  });

  it("dispatches waveform frames and error frames", () => {
    const { socket, frames, errors } = connected();
    socket.emit("message", {
      data: JSON.stringify({ type: "waveform", samples: [0, 1], params: {} }),
    });
    socket.emit("message", { data: JSON.stringify({ type: "error", message: "nope" }) });
    socket.emit("message", { data: "garbage" });
    expect(frames).toHaveLength(1);
    expect(frames[0].samples).toEqual([0, 1]);
    expect(errors).toEqual(["nope"]);
  });

  it("drops control traffic while disconnected instead of queueing it", () => {
    const socket = new FakeSocket();
    const client = new WavespaceClient("ws://test", {}, () => socket);
    client.sendNote(440, true); // still connecting
    expect(socket.sent).toHaveLength(0);
    expect(client.droppedCount).toBe(1);
    socket.emit("open");
    client.sendNote(440, true);
    expect(socket.sent).toHaveLength(1);
  });

  it("envelope, gain and note bypass the throttle", () => {
    const { socket, client } = connected();
    client.sendNote(440, true);
    client.sendGain(0.5);
    client.sendEnvelope({ attack: 0.1, decay: 0.1, sustain: 0.5, release: 0.2 });
    expect(socket.sent.map((s) => JSON.parse(s).type)).toEqual(["note", "gain", "envelope"]);
  });

  it("close closes the socket and clears the throttle", () => {
    const { socket, client } = connected();
    client.padDrag(0, 1, 1);
    client.padDrag(0, 2, 2); // queued behind the rate limit
    client.close();
    vi.advanceTimersByTime(1000);
    expect(socket.closed).toBe(true);
    expect(socket.sent).toHaveLength(1);
  });
});

// WebSocket client for the oscillator service. Pad and slider traffic
// goes through the message throttle; while disconnected everything is
// dropped (never queued) and the status callback makes that visible.

import {
  DescriptorName,
  EnvelopeSettings,
  ServerFrame,
  WaveformFrame,
  encodeInitMessage,
  envelopeMessage,
  gainMessage,
  noteMessage,
  parseServerFrame,
  setDescriptor,
  setStyle,
} from "./protocol.js";
import { MessageThrottle } from "./throttle.js";
import { ConnectionStatus } from "./state.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (event: any) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHandlers {
  onFrame?: (frame: WaveformFrame) => void;
  onError?: (message: string) => void;
  onStatus?: (status: ConnectionStatus) => void;
}

export class WavespaceClient {
  status: ConnectionStatus = "connecting";
  private socket: SocketLike;
  private readonly throttle: MessageThrottle;
  private readonly handlers: ClientHandlers;
  droppedCount = 0;

  constructor(
    url: string,
    handlers: ClientHandlers = {},
    socketFactory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
    maxPerSecond = 30,
  ) {
    this.handlers = handlers;
    this.throttle = new MessageThrottle((msg) => this.sendNow(msg), maxPerSecond);
    this.socket = socketFactory(url);
    this.socket.addEventListener("open", () => this.setStatus("open"));
    this.socket.addEventListener("close", () => {
      this.throttle.clear();
      this.setStatus("closed");
    });
    this.socket.addEventListener("error", () => {
      this.handlers.onError?.("connection error");
    });
    this.socket.addEventListener("message", (event: { data: unknown }) => {
      if (typeof event.data !== "string") return;
      const frame: ServerFrame | null = parseServerFrame(event.data);
      if (frame === null) return;
      if (frame.type === "error") this.handlers.onError?.(frame.message);
      else this.handlers.onFrame?.(frame);
    });
  }

  private setStatus(status: ConnectionStatus): void {
    this.status = status;
    this.handlers.onStatus?.(status);
  }

  private sendNow(msg: object): void {
    if (this.status !== "open") {
      this.droppedCount += 1;
      this.handlers.onStatus?.(this.status);
      return;
    }
    this.socket.send(JSON.stringify(msg));
  }

  padDrag(subspace: number, x: number, y: number): void {
    this.throttle.push("style", setStyle(subspace, x, y));
  }

  sliderMove(name: DescriptorName, value: number): void {
    this.throttle.push(`descriptor:${name}`, setDescriptor(name, value));
  }

  sendNote(f0: number, gate: boolean): void {
    this.sendNow(noteMessage(f0, gate));
  }

  sendEnvelope(env: EnvelopeSettings): void {
    this.sendNow(envelopeMessage(env));
  }

  sendGain(value: number): void {
    this.sendNow(gainMessage(value));
  }

  sendEncodeInit(samples: ArrayLike<number>): void {
    this.sendNow(encodeInitMessage(samples));
  }

  close(): void {
    this.throttle.clear();
    this.socket.close();
  }
}

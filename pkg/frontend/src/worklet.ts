// Real-time audio callback: renders the wavetable voice into the output
// quantum. The message port feeds the frame slot and control fields; the
// render path itself only reads the slot, never waits.

import { FrameSlot, WavetableVoice } from "./engine.js";

interface WorkletMessage {
  kind: "frame" | "note" | "envelope" | "gain";
  samples?: Float32Array;
  f0?: number;
  gate?: boolean;
  attack?: number;
  decay?: number;
  sustain?: number;
  release?: number;
  value?: number;
}

class WavespaceProcessor extends AudioWorkletProcessor {
  private readonly slot = new FrameSlot();
  private readonly voice = new WavetableVoice(this.slot, sampleRate);

  constructor() {
    super();
    this.port.onmessage = (event: MessageEvent) => {
      const msg = event.data as WorkletMessage;
      switch (msg.kind) {
        case "frame":
          if (msg.samples) this.slot.publish(msg.samples);
          break;
        case "note":
          if (msg.f0 !== undefined) this.voice.f0 = msg.f0;
          if (msg.gate !== undefined) this.voice.envelope.setGate(msg.gate);
          break;
        case "envelope":
          this.voice.envelope.times = {
            attack: msg.attack ?? 0.01,
            decay: msg.decay ?? 0.05,
            sustain: msg.sustain ?? 0.8,
            release: msg.release ?? 0.1,
          };
          break;
        case "gain":
          if (msg.value !== undefined) this.voice.gain = msg.value;
          break;
      }
    };
  }

  process(_inputs: Float32Array[][], outputs: Float32Array[][]): boolean {
    const channel = outputs[0][0];
    const block = this.voice.renderBlock(channel.length);
    channel.set(block);
    for (let c = 1; c < outputs[0].length; c++) outputs[0][c].set(block);
    return true;
  }
}

registerProcessor("wavespace-voice", WavespaceProcessor);

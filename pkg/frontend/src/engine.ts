// Client-side playback of the received single-cycle waveform: a phase
// accumulator reads the cycle with linear interpolation, an ADSR shapes
// the level, and table swaps crossfade over one rendered block so a new
// frame never clicks. Pure math, shared by the audio worklet and the
// offline tests.

export interface EnvelopeTimes {
  attack: number;
  decay: number;
  sustain: number;
  release: number;
}

export interface Frame {
  seq: number;
  samples: Float32Array;
}

/** Latest-wins handoff cell between the message side and the audio callback. */
export class FrameSlot {
  private cell: Frame | null = null;
  private seq = 0;

  publish(samples: Float32Array): void {
    this.seq += 1;
    this.cell = { seq: this.seq, samples };
  }

  read(): Frame | null {
    return this.cell;
  }
}

type AdsrStage = "idle" | "attack" | "decay" | "sustain" | "release";

/** Emit-current-then-advance ADSR; release rate is frozen where the gate drops. */
export class AdsrEnvelope {
  times: EnvelopeTimes = { attack: 0.01, decay: 0.05, sustain: 0.8, release: 0.1 };
  private readonly sampleRate: number;
  private stage: AdsrStage = "idle";
  private level = 0;
  private releaseStep = 0;

  constructor(sampleRate: number) {
    this.sampleRate = sampleRate;
  }

  setGate(on: boolean): void {
    if (on && (this.stage === "idle" || this.stage === "release")) {
      this.stage = "attack";
    } else if (!on && this.stage !== "idle" && this.stage !== "release") {
      this.stage = "release";
      this.releaseStep =
        this.times.release > 0 ? this.level / (this.times.release * this.sampleRate) : 0;
      if (this.times.release <= 0) {
        this.stage = "idle";
        this.level = 0;
      }
    }
  }

  get active(): boolean {
    return this.stage !== "idle";
  }

  process(n: number): Float32Array {
    const out = new Float32Array(n);
    const t = this.times;
    for (let i = 0; i < n; i++) {
      if (this.stage === "attack") {
        if (t.attack <= 0) {
          this.level = 1;
          this.stage = t.decay > 0 ? "decay" : "sustain";
          if (this.stage === "sustain") this.level = t.sustain;
        }
      }
      out[i] = this.level;
      switch (this.stage) {
        case "attack":
          this.level += 1 / (t.attack * this.sampleRate);
          if (this.level >= 1) {
            this.level = 1;
            this.stage = t.decay > 0 ? "decay" : "sustain";
            if (this.stage === "sustain") this.level = t.sustain;
          }
          break;
        case "decay":
          this.level -= (1 - t.sustain) / (t.decay * this.sampleRate);
          if (this.level <= t.sustain) {
            this.level = t.sustain;
            this.stage = "sustain";
          }
          break;
        case "sustain":
          this.level = t.sustain;
          break;
        case "release":
          this.level -= this.releaseStep;
          if (this.level <= 0 || this.releaseStep === 0) {
            this.level = 0;
            this.stage = "idle";
          }
          break;
        case "idle":
          break;
      }
    }
    return out;
  }
}

function readCycle(samples: Float32Array, phase: number): number {
  const n = samples.length;
  const i0 = Math.floor(phase);
  const frac = phase - i0;
  const a = samples[i0 % n];
  const b = samples[(i0 + 1) % n];
  return a + frac * (b - a);
}

/**
 * Looping oscillator over the latest received frame.
 *
 * The phase accumulator emits the current index, then advances by
 * N * f0 / sampleRate (mod N), so f0 = sampleRate / N walks the table
 * exactly once per N output samples. When the slot holds a newer frame
 * than the one playing, one block is rendered from both tables over the
 * same phases and blended, reaching the new table at the block end.
 */
export class WavetableVoice {
  f0 = 220;
  gain = 0.8;
  readonly envelope: AdsrEnvelope;
  private readonly slot: FrameSlot;
  private readonly sampleRate: number;
  private current: Frame | null = null;
  private phase = 0;

  constructor(slot: FrameSlot, sampleRate = 48000) {
    this.slot = slot;
    this.sampleRate = sampleRate;
    this.envelope = new AdsrEnvelope(sampleRate);
  }

  renderBlock(n: number): Float32Array {
    const out = new Float32Array(n);
    const snap = this.slot.read();
    if (snap === null) {
      this.current = null;
      return out;
    }
    const previous = this.current;
    if (previous === null || previous.samples.length !== snap.samples.length) {
      this.current = snap;
      this.phase = this.phase % snap.samples.length;
    }
    const table = (this.current as Frame).samples;
    const len = table.length;
    const step = (len * this.f0) / this.sampleRate;
    const phases = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      phases[i] = this.phase;
      this.phase = (this.phase + step) % len;
    }
    const swapping = (this.current as Frame).seq !== snap.seq;
    for (let i = 0; i < n; i++) {
      const a = readCycle(table, phases[i]);
      if (swapping) {
        const b = readCycle(snap.samples, phases[i]);
        const w = (i + 1) / n;
        out[i] = a + w * (b - a);
      } else {
        out[i] = a;
      }
    }
    if (swapping) this.current = snap;
    const env = this.envelope.process(n);
    for (let i = 0; i < n; i++) out[i] *= env[i] * this.gain;
    return out;
  }
}

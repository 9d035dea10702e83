// Wire protocol for the oscillator service: message builders clamp every
// value to the server's accepted range, so the UI can never send a message
// the server would reject.

export const PAD_RANGE = 8;
export const MAX_F0 = 20000;
export const MAX_GAIN = 4;
export const MIN_F0 = 1e-3;

export const DESCRIPTOR_NAMES = [
  "brightness",
  "richness",
  "fullness",
  "undulation",
  "symmetry",
] as const;

export type DescriptorName = (typeof DESCRIPTOR_NAMES)[number];

export interface EnvelopeSettings {
  attack: number;
  decay: number;
  sustain: number;
  release: number;
}

export interface ParamState {
  style_coords: number[];
  active_subspace: number;
  descriptors: Record<DescriptorName, number>;
  envelope: EnvelopeSettings;
  note: { f0: number; gate: boolean };
  gain: number;
}

export interface WaveformFrame {
  type: "waveform";
  samples: number[];
  params: ParamState;
}

export interface ErrorFrame {
  type: "error";
  message: string;
}

export type ServerFrame = WaveformFrame | ErrorFrame;

export function clamp(v: number, lo: number, hi: number): number {
  if (!Number.isFinite(v)) return lo;
  return Math.min(hi, Math.max(lo, v));
}

export function descriptorRange(name: DescriptorName): [number, number] {
  return name === "symmetry" ? [-Math.PI, Math.PI] : [0, 1];
}

export function setStyle(subspace: number, x: number, y: number) {
  return {
    type: "set_style",
    subspace: Math.max(0, Math.round(subspace)),
    x: clamp(x, -PAD_RANGE, PAD_RANGE),
    y: clamp(y, -PAD_RANGE, PAD_RANGE),
  };
}

export function setDescriptor(name: DescriptorName, value: number) {
  const [lo, hi] = descriptorRange(name);
  return { type: "set_descriptor", name, value: clamp(value, lo, hi) };
}

export function noteMessage(f0: number, gate: boolean) {
  return { type: "note", f0: clamp(f0, MIN_F0, MAX_F0), gate: Boolean(gate) };
}

export function envelopeMessage(env: EnvelopeSettings) {
  return {
    type: "envelope",
    attack: Math.max(0, env.attack),
    decay: Math.max(0, env.decay),
    sustain: clamp(env.sustain, 0, 1),
    release: Math.max(0, env.release),
  };
}

export function gainMessage(value: number) {
  return { type: "gain", value: clamp(value, 0, MAX_GAIN) };
}

export function encodeInitMessage(samples: ArrayLike<number>) {
  return { type: "encode_init", samples: Array.from(samples) };
}

export function parseServerFrame(raw: string): ServerFrame | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const frame = obj as { type?: unknown };
  if (frame.type === "waveform" || frame.type === "error") {
    return frame as ServerFrame;
  }
  return null;
}

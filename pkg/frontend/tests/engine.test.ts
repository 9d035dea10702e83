import { describe, expect, it } from "vitest";
import { AdsrEnvelope, FrameSlot, WavetableVoice } from "../src/engine.js";

function sineTable(n: number, phaseOffset = 0): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.sin((2 * Math.PI * i) / n + phaseOffset);
  return out;
}

function sustainedVoice(slot: FrameSlot, sampleRate: number): WavetableVoice {
  const voice = new WavetableVoice(slot, sampleRate);
  voice.gain = 1;
  voice.envelope.times = { attack: 0, decay: 0, sustain: 1, release: 0.1 };
  voice.envelope.setGate(true);
  return voice;
}

describe("FrameSlot", () => {
  it("returns null before the first publish and the newest frame after", () => {
    const slot = new FrameSlot();
    expect(slot.read()).toBeNull();
    slot.publish(Float32Array.from([1]));
    slot.publish(Float32Array.from([2]));
    const frame = slot.read()!;
    expect(frame.seq).toBe(2);
    expect(frame.samples[0]).toBe(2);
  });
});

describe("AdsrEnvelope", () => {
  it("walks attack, decay, sustain at the configured rates", () => {
    const env = new AdsrEnvelope(1000);
    // 1/16 and 1/32 per-sample steps are exact in binary
    env.times = { attack: 0.016, decay: 0.016, sustain: 0.5, release: 0.1 };
    env.setGate(true);
    const out = env.process(40);
    expect(out[0]).toBe(0);
    expect(out[8]).toBeCloseTo(0.5, 6); // halfway up the 16-sample attack
    expect(out[16]).toBeCloseTo(1, 6); // attack peak
    expect(out[24]).toBeCloseTo(0.75, 6); // halfway down the decay
    expect(out[33]).toBeCloseTo(0.5, 6); // sustain
    expect(out[39]).toBeCloseTo(0.5, 6);
  });

  it("zero attack hits full scale on the first sample", () => {
    const env = new AdsrEnvelope(1000);
    env.times = { attack: 0, decay: 0.01, sustain: 0.2, release: 0.1 };
    env.setGate(true);
    const out = env.process(3);
    expect(out[0]).toBe(1);
    expect(out[1]).toBeLessThan(1);
  });

  it("zero release drops to idle immediately", () => {
    const env = new AdsrEnvelope(1000);
    env.times = { attack: 0, decay: 0, sustain: 1, release: 0 };
    env.setGate(true);
    env.process(4);
    env.setGate(false);
    expect(env.active).toBe(false);
    expect(Array.from(env.process(4))).toEqual([0, 0, 0, 0]);
  });

  it("freezes the release rate when the gate drops", () => {
    const env = new AdsrEnvelope(1000);
    env.times = { attack: 0, decay: 0, sustain: 1, release: 0.128 };
    env.setGate(true);
    env.process(2);
    env.setGate(false);
    env.times.release = 10; // must not slow the ongoing release
    const out = env.process(100); // step 1/128 per sample, exact in binary
    expect(out[0]).toBeCloseTo(1, 6);
    expect(out[64]).toBeCloseTo(0.5, 6);
    expect(env.active).toBe(true);
    env.process(40);
    expect(env.active).toBe(false);
  });

  it("retriggering from release restarts the attack", () => {
    const env = new AdsrEnvelope(1000);
    env.times = { attack: 0.01, decay: 0, sustain: 1, release: 0.5 };
    env.setGate(true);
    env.process(20);
    env.setGate(false);
    env.process(10);
    env.setGate(true);
    const out = env.process(20);
    expect(out[out.length - 1]).toBeCloseTo(1, 6);
  });
});

describe("WavetableVoice", () => {
  it("is silent before the first frame arrives", () => {
    const slot = new FrameSlot();
    const voice = sustainedVoice(slot, 48000);
    const out = voice.renderBlock(64);
    expect(Math.max(...out.map(Math.abs))).toBe(0);
  });

  it("walks the table exactly once per cycle at f0 = rate / length", () => {
    const slot = new FrameSlot();
    const table = sineTable(256);
    slot.publish(table);
    const voice = sustainedVoice(slot, 48000);
    voice.f0 = 48000 / 256; // integer phase step of 1
    const out = voice.renderBlock(512);
    for (let i = 0; i < 512; i++) {
      expect(out[i]).toBeCloseTo(table[i % 256], 6);
    }
  });

  it("interpolates between table entries for fractional phase", () => {
    const slot = new FrameSlot();
    slot.publish(Float32Array.from([0, 1, 0, -1]));
    const voice = sustainedVoice(slot, 48000);
    voice.f0 = 48000 / 8; // phase step 0.5 over a 4-entry table
    const out = voice.renderBlock(8);
    expect(Array.from(out.slice(0, 4))).toEqual([0, 0.5, 1, 0.5]);
  });

  it("adopts a new table length immediately", () => {
    const slot = new FrameSlot();
    slot.publish(sineTable(256));
    const voice = sustainedVoice(slot, 48000);
    voice.f0 = 48000 / 512;
    voice.renderBlock(64);
    const table = sineTable(512);
    slot.publish(table);
    const out = voice.renderBlock(16);
    // phase continues from 32 but now reads the 512-entry table directly
    for (let i = 0; i < 16; i++) {
      expect(out[i]).toBeCloseTo(table[(32 + i) % 512], 6);
    }
  });

  it("applies envelope and gain to the table read", () => {
    const slot = new FrameSlot();
    slot.publish(Float32Array.from([1, 1, 1, 1]));
    const voice = sustainedVoice(slot, 48000);
    voice.gain = 0.25;
    voice.f0 = 48000 / 4;
    const out = voice.renderBlock(4);
    expect(Array.from(out)).toEqual([0.25, 0.25, 0.25, 0.25]);
  });

  it("crossfades a frame swap with no audible discontinuity", () => {
    const rate = 48000;
    const n = 1024;
    const slot = new FrameSlot();
    slot.publish(sineTable(n));
    const voice = sustainedVoice(slot, rate);
    voice.f0 = rate / n;

    const before = voice.renderBlock(n);
    slot.publish(sineTable(n, Math.PI / 2)); // quarter-cycle shifted copy
    const across = voice.renderBlock(n);
    const after = voice.renderBlock(n);

    const joined = Float32Array.from([...before, ...across, ...after]);
    let worst = 0;
    for (let i = 1; i < joined.length; i++) {
      worst = Math.max(worst, Math.abs(joined[i] - joined[i - 1]));
    }
    expect(worst).toBeLessThan(0.05);

    // the swap is not a no-op: an abrupt switch at the same point jumps
    const abrupt = Math.abs(Math.sin(0 + Math.PI / 2) - Math.sin(0));
    expect(abrupt).toBeGreaterThan(0.05);
    // and the block after the swap plays the new table
    expect(after[0]).toBeCloseTo(Math.sin(Math.PI / 2), 6);
  });

  it("reaches the new table by the end of the crossfade block", () => {
    const slot = new FrameSlot();
    slot.publish(Float32Array.from(new Array(64).fill(-1)));
    const voice = sustainedVoice(slot, 48000);
    voice.f0 = 48000 / 64;
    voice.renderBlock(64);
    slot.publish(Float32Array.from(new Array(64).fill(1)));
    const across = voice.renderBlock(64);
    expect(across[0]).toBeCloseTo(-1 + (2 * 1) / 64, 6);
    expect(across[63]).toBeCloseTo(1, 6);
    const after = voice.renderBlock(4);
    expect(after[0]).toBeCloseTo(1, 6);
  });
});

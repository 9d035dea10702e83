// Wires the control surface to the service: pad and sliders send
// throttled messages, every waveform frame redraws the scope and feeds
// the audio worklet, and all local values are reconciled from the
// server's authoritative params.

import { WavespaceClient } from "./client.js";
import { XYPad } from "./pad.js";
import { WaveformScope } from "./scope.js";
import { UiState, applyFrame, applyStatus, initialState } from "./state.js";
import {
  DESCRIPTOR_NAMES,
  DescriptorName,
  MAX_GAIN,
  descriptorRange,
} from "./protocol.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

let state: UiState = initialState();
let audioNode: AudioWorkletNode | null = null;
let audioContext: AudioContext | null = null;

const serverUrl =
  new URLSearchParams(location.search).get("server") ?? "ws://127.0.0.1:8765";

const statusEl = byId<HTMLSpanElement>("status");
const padCanvas = byId<HTMLCanvasElement>("pad");
const scopeCanvas = byId<HTMLCanvasElement>("scope");
const subspaceSel = byId<HTMLSelectElement>("subspace");
const descriptorSel = byId<HTMLSelectElement>("descriptor");
const descriptorSlider = byId<HTMLInputElement>("descriptor-slider");
const descriptorEntry = byId<HTMLInputElement>("descriptor-entry");
const gainSlider = byId<HTMLInputElement>("gain");
const f0Entry = byId<HTMLInputElement>("f0");
const gateButton = byId<HTMLButtonElement>("gate");
const scope = new WaveformScope(scopeCanvas);

for (const name of DESCRIPTOR_NAMES) {
  const opt = document.createElement("option");
  opt.value = name;
  opt.textContent = name;
  descriptorSel.appendChild(opt);
}

function selectedDescriptor(): DescriptorName {
  return descriptorSel.value as DescriptorName;
}

function refreshDescriptorControls(): void {
  const name = selectedDescriptor();
  const [lo, hi] = descriptorRange(name);
  descriptorSlider.min = String(lo);
  descriptorSlider.max = String(hi);
  descriptorSlider.step = "0.001";
  descriptorSlider.value = String(state.descriptors[name]);
  descriptorEntry.value = state.descriptors[name].toFixed(3);
}

function redraw(): void {
  statusEl.textContent = state.status;
  statusEl.className = state.status;
  const s = state.activeSubspace;
  pad.setPoint(state.styleCoords[2 * s] ?? 0, state.styleCoords[2 * s + 1] ?? 0);
  pad.draw();
  scope.draw(state.waveform);
  if (document.activeElement !== descriptorSlider) refreshDescriptorControls();
}

async function ensureAudio(): Promise<void> {
  if (audioNode) return;
  audioContext = new AudioContext({ sampleRate: 48000 });
  await audioContext.audioWorklet.addModule("./dist/worklet.js");
  audioNode = new AudioWorkletNode(audioContext, "wavespace-voice", {
    numberOfInputs: 0,
    outputChannelCount: [1],
  });
  audioNode.connect(audioContext.destination);
  if (state.waveform) {
    audioNode.port.postMessage({ kind: "frame", samples: state.waveform });
  }
  await audioContext.resume();
}

const client = new WavespaceClient(serverUrl, {
  onStatus: (status) => {
    state = applyStatus(state, status);
    redraw();
  },
  onFrame: (frame) => {
    state = applyFrame(state, frame);
    audioNode?.port.postMessage({ kind: "frame", samples: state.waveform });
    redraw();
  },
  onError: (message) => {
    statusEl.textContent = `error: ${message}`;
  },
});

const pad = new XYPad(padCanvas, (x, y) => {
  const s = Number(subspaceSel.value);
  client.padDrag(s, x, y);
  // optimistic: track the pointer, reconcile on the next frame
  state.styleCoords[2 * s] = x;
  state.styleCoords[2 * s + 1] = y;
  state.activeSubspace = s;
  redraw();
});

subspaceSel.addEventListener("change", redraw);
descriptorSel.addEventListener("change", refreshDescriptorControls);

descriptorSlider.addEventListener("input", () => {
  const name = selectedDescriptor();
  const value = Number(descriptorSlider.value);
  client.sliderMove(name, value);
  state.descriptors[name] = value;
  descriptorEntry.value = value.toFixed(3);
});

descriptorEntry.addEventListener("change", () => {
  const name = selectedDescriptor();
  const value = Number(descriptorEntry.value);
  if (Number.isFinite(value)) {
    client.sliderMove(name, value);
    state.descriptors[name] = value;
    descriptorSlider.value = String(value);
  }
});

gainSlider.max = String(MAX_GAIN);
gainSlider.addEventListener("input", () => {
  const value = Number(gainSlider.value);
  client.sendGain(value);
  audioNode?.port.postMessage({ kind: "gain", value });
});

for (const id of ["attack", "decay", "sustain", "release"] as const) {
  byId<HTMLInputElement>(id).addEventListener("change", () => {
    const env = {
      attack: Number(byId<HTMLInputElement>("attack").value),
      decay: Number(byId<HTMLInputElement>("decay").value),
      sustain: Number(byId<HTMLInputElement>("sustain").value),
      release: Number(byId<HTMLInputElement>("release").value),
    };
    client.sendEnvelope(env);
    audioNode?.port.postMessage({ kind: "envelope", ...env });
  });
}

gateButton.addEventListener("pointerdown", async () => {
  await ensureAudio();
  const f0 = Number(f0Entry.value) || 220;
  client.sendNote(f0, true);
  audioNode?.port.postMessage({ kind: "note", f0, gate: true });
});

gateButton.addEventListener("pointerup", () => {
  const f0 = Number(f0Entry.value) || 220;
  client.sendNote(f0, false);
  audioNode?.port.postMessage({ kind: "note", f0, gate: false });
});

redraw();

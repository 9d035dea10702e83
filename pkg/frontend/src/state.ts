// Mirrored service state. Control gestures update it optimistically so
// the UI tracks the pointer; every waveform frame from the server
// overwrites the mirror with the authoritative params, and the displayed
// waveform is always the newest frame received.

import {
  DESCRIPTOR_NAMES,
  DescriptorName,
  EnvelopeSettings,
  ParamState,
  WaveformFrame,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface UiState {
  status: ConnectionStatus;
  styleCoords: number[];
  activeSubspace: number;
  descriptors: Record<DescriptorName, number>;
  envelope: EnvelopeSettings;
  f0: number;
  gate: boolean;
  gain: number;
  waveform: Float32Array | null;
  framesReceived: number;
}

export function initialState(numStyles = 4): UiState {
  const descriptors = {} as Record<DescriptorName, number>;
  for (const name of DESCRIPTOR_NAMES) descriptors[name] = name === "symmetry" ? 0 : 0.5;
  return {
    status: "connecting",
    styleCoords: new Array(2 * numStyles).fill(0),
    activeSubspace: 0,
    descriptors,
    envelope: { attack: 0.01, decay: 0.05, sustain: 0.8, release: 0.1 },
    f0: 220,
    gate: false,
    gain: 0.8,
    waveform: null,
    framesReceived: 0,
  };
}

export function applyStatus(state: UiState, status: ConnectionStatus): UiState {
  return { ...state, status };
}

/** Optimistic update for a pad drag. */
export function applyStyleLocal(state: UiState, subspace: number, x: number, y: number): UiState {
  const styleCoords = state.styleCoords.slice();
  while (styleCoords.length < 2 * (subspace + 1)) styleCoords.push(0);
  styleCoords[2 * subspace] = x;
  styleCoords[2 * subspace + 1] = y;
  return { ...state, styleCoords, activeSubspace: subspace };
}

/** Optimistic update for a slider move. */
export function applyDescriptorLocal(state: UiState, name: DescriptorName, value: number): UiState {
  return { ...state, descriptors: { ...state.descriptors, [name]: value } };
}

/** Reconcile with an authoritative server frame. */
export function applyFrame(state: UiState, frame: WaveformFrame): UiState {
  const p: ParamState = frame.params;
  return {
    ...state,
    styleCoords: p.style_coords.slice(),
    activeSubspace: p.active_subspace,
    descriptors: { ...p.descriptors },
    envelope: { ...p.envelope },
    f0: p.note.f0,
    gate: p.note.gate,
    gain: p.gain,
    waveform: Float32Array.from(frame.samples),
    framesReceived: state.framesReceived + 1,
  };
}

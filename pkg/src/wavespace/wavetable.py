"""Single-cycle waveform containers and the wavetable read path.

A wavetable is a stack of M single-cycle waveforms of N samples each.
Playback walks a fractional column index driven by the instantaneous
fundamental frequency and a fractional row index that morphs between
rows; both lookups are bilinear, with the column wrapping across the
cycle boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample as _fourier_resample

from .errors import DegenerateInputError, RangeError

DC_TOL = 1e-6
ENERGY_TOL = 1e-6


@dataclass(frozen=True)
class Waveform:
    """One single-cycle waveform: zero-mean, unit-energy samples."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError(f"waveform must be a 1-D array of >= 2 samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if abs(float(samples.sum())) > DC_TOL * samples.size:
            raise ValueError("waveform has residual DC offset")
        if abs(float(np.dot(samples, samples)) - 1.0) > ENERGY_TOL:
            raise ValueError("waveform energy is not 1")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def length(self) -> int:
        return self.samples.size

    def __eq__(self, other):
        return isinstance(other, Waveform) and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True)
class Wavetable:
    """Ordered stack of equal-length waveforms with bilinear read access."""

    rows: tuple[Waveform, ...]

    def __post_init__(self):
        rows = tuple(self.rows)
        if not rows:
            raise ValueError("wavetable needs at least one row")
        n = rows[0].length
        if any(r.length != n for r in rows):
            raise ValueError("all wavetable rows must share the same length")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_data", np.stack([r.samples for r in rows]))

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def length(self) -> int:
        return self.rows[0].length

    def as_array(self) -> np.ndarray:
        """(M, N) view of the table contents; do not mutate."""
        return self._data


@dataclass
class PhaseState:
    """Phase accumulator for one oscillator voice.

    The accumulator is a fractional column index in [0, N) and is read
    *before* each per-sample increment, so playback starts at phase 0.
    """

    table_length: int
    sample_rate: float
    accumulator: float = field(default=0.0)

    def __post_init__(self):
        if self.table_length < 1:
            raise ValueError("table_length must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.accumulator = float(self.accumulator) % self.table_length


def _table_data(table) -> np.ndarray:
    """(M, N) array behind a Wavetable, or a raw 2-D table as-is."""
    if isinstance(table, Wavetable):
        return table.as_array()
    data = np.asarray(table, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"table must be 2-D with at least one row, got shape {data.shape}")
    return data


def read(table, row_index: float, col_index: float) -> float:
    """Bilinear lookup at fractional (row, column); column wraps mod N."""
    data = _table_data(table)
    m, n = data.shape
    if not 0.0 <= row_index <= m - 1:
        raise RangeError(f"row index {row_index} outside [0, {m - 1}]")
    i0 = int(np.floor(row_index))
    i1 = min(i0 + 1, m - 1)
    fi = row_index - i0
    j0 = int(np.floor(col_index)) % n
    j1 = (j0 + 1) % n
    fj = col_index - np.floor(col_index)
    top = (1.0 - fj) * data[i0, j0] + fj * data[i0, j1]
    bot = (1.0 - fj) * data[i1, j0] + fj * data[i1, j1]
    return float((1.0 - fi) * top + fi * bot)


def read_block(table, row_index: np.ndarray, col_index: np.ndarray) -> np.ndarray:
    """Vectorized `read` over matching arrays of indices."""
    data = _table_data(table)
    m, n = data.shape
    row_index = np.asarray(row_index, dtype=np.float64)
    col_index = np.asarray(col_index, dtype=np.float64)
    if row_index.size and (row_index.min() < 0.0 or row_index.max() > m - 1):
        raise RangeError(f"row index outside [0, {m - 1}]")
    i0 = np.floor(row_index).astype(np.intp)
    i1 = np.minimum(i0 + 1, m - 1)
    fi = row_index - i0
    jf = np.floor(col_index)
    j0 = jf.astype(np.intp) % n
    j1 = (j0 + 1) % n
    fj = col_index - jf
    top = (1.0 - fj) * data[i0, j0] + fj * data[i0, j1]
    bot = (1.0 - fj) * data[i1, j0] + fj * data[i1, j1]
    return (1.0 - fi) * top + fi * bot


def advance_phase(state: PhaseState, f0_sample: float) -> float:
    """Emit the current column index, then advance by N * f0 / fs (mod N).

    f0 must satisfy 0 <= f0 < fs / 2.
    """
    if f0_sample < 0.0 or f0_sample >= state.sample_rate / 2.0:
        raise RangeError(f"f0 {f0_sample} outside [0, fs/2)")
    out = state.accumulator
    state.accumulator = (state.accumulator + state.table_length * f0_sample / state.sample_rate) % state.table_length
    return out


def phase_indices(state: PhaseState, f0_signal: np.ndarray) -> np.ndarray:
    """Vectorized phase accumulation for a block; updates the state.

    Equivalent to calling `advance_phase` once per sample: index k of the
    result is the accumulator value before the k-th increment.
    """
    f0_signal = np.asarray(f0_signal, dtype=np.float64)
    if f0_signal.size == 0:
        return f0_signal.copy()
    if f0_signal.min() < 0.0 or f0_signal.max() >= state.sample_rate / 2.0:
        raise RangeError("f0 outside [0, fs/2)")
    n = state.table_length
    increments = f0_signal * (n / state.sample_rate)
    # chunked so partial sums stay small; one long cumsum would round at
    # the magnitude of the raw running total instead of at N
    out = np.empty(f0_signal.size)
    acc = state.accumulator
    for start in range(0, f0_signal.size, 4096):
        chunk = increments[start:start + 4096]
        prefix = np.cumsum(chunk)
        # exclusive prefix sum: emitted index precedes its own increment
        out[start:start + chunk.size] = (acc + np.concatenate(([0.0], prefix[:-1]))) % n
        acc = (acc + prefix[-1]) % n
    state.accumulator = float(acc)
    return out


def render(
    table,
    row_signal: np.ndarray,
    f0_signal: np.ndarray,
    sample_rate: float,
    n_samples: int,
    state: PhaseState | None = None,
) -> np.ndarray:
    """Render a block by advancing phase and reading the table per sample.

    `row_signal` and `f0_signal` may be scalars or length-n arrays.
    Passing a PhaseState keeps phase continuity across blocks.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    if state is None:
        state = PhaseState(table_length=_table_data(table).shape[1], sample_rate=sample_rate)
    row_signal = np.broadcast_to(np.asarray(row_signal, dtype=np.float64), (n_samples,))
    f0_signal = np.broadcast_to(np.asarray(f0_signal, dtype=np.float64), (n_samples,))
    if n_samples == 0:
        return np.zeros(0)
    cols = phase_indices(state, f0_signal)
    return read_block(table, row_signal, cols)


def _normalize(samples: np.ndarray) -> np.ndarray:
    """Remove DC, scale to unit energy. Raises on (near-)zero input."""
    samples = np.asarray(samples, dtype=np.float64)
    centered = samples - samples.mean()
    energy = float(np.dot(centered, centered))
    if energy <= 1e-24:
        raise DegenerateInputError("input has no energy after DC removal")
    return centered / np.sqrt(energy)


def preprocess(raw: np.ndarray, target_length: int) -> Waveform:
    """Band-limited resample of one raw cycle, then DC removal and
    unit-energy normalization.

    Resampling is done in the Fourier domain (bin truncation / zero
    padding), which is exact for a signal that is periodic in the frame.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size < 2:
        raise ValueError(f"raw input must be a 1-D array of >= 2 samples, got shape {raw.shape}")
    if target_length < 2:
        raise ValueError("target length must be >= 2")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw input contains non-finite samples")
    if raw.size != target_length:
        raw = _fourier_resample(raw, target_length)
    return Waveform(_normalize(raw))


def postprocess(decoded: np.ndarray) -> Waveform:
    """Normalize a raw decoder output into a valid Waveform."""
    return Waveform(_normalize(decoded))

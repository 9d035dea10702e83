"""WAV import/export for wavetable files.

A wavetable file is the row waveforms concatenated head-to-tail into one
mono stream with a fixed frame length per file (the WaveEdit layout, 256
samples per frame). Export writes PCM float-32; import additionally
accepts 16-bit PCM.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .errors import IngestError
from .wavetable import Wavetable


def load_frames(path, frame_length: int) -> list[np.ndarray]:
    """Split a mono WAV into consecutive frames of `frame_length` samples."""
    if frame_length < 2:
        raise ValueError("frame_length must be >= 2")
    try:
        _, data = wavfile.read(path)
    except Exception as exc:
        raise IngestError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise IngestError(f"{path}: expected mono audio, got {data.ndim} channels")
    data = pcm_to_float(data)
    if data.size % frame_length != 0:
        raise IngestError(f"{path}: length {data.size} is not divisible by frame length {frame_length}")
    return [data[i : i + frame_length] for i in range(0, data.size, frame_length)]


def pcm_to_float(data: np.ndarray) -> np.ndarray:
    """Map integer PCM to [-1, 1) floats; pass float data through."""
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise IngestError(f"unsupported WAV sample format {data.dtype}")


def save_wavetable(path, table: Wavetable, sample_rate: int = 48000) -> None:
    """Write table rows head-to-tail as mono float-32 PCM."""
    flat = table.as_array().reshape(-1).astype(np.float32)
    wavfile.write(path, sample_rate, flat)


def save_samples(path, samples: np.ndarray, sample_rate: int = 48000) -> None:
    """Write an arbitrary mono block as float-32 PCM."""
    wavfile.write(path, sample_rate, np.asarray(samples, dtype=np.float32))

"""Timbral and morphological descriptors of a single-cycle waveform.

Five scalars summarize a waveform: brightness (spectral centroid),
richness (spectral spread), fullness (one minus the odd-harmonic power
fraction), undulation (mean absolute sample difference) and symmetry
(phase angle of the summed one-sided spectrum). Centroid, spread and
undulation pass through a logarithmic range compression before use.

Two extraction modes exist. The default "normalized" mode divides the
spectral sums by total power and the Nyquist bin count so the compression
input lies in [0, 1]. The "literal" mode evaluates the raw sums, clamped
to [0, 1], and is kept for comparison experiments only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RangeError
from .wavetable import Waveform

COMPRESSION_STRENGTH = 5.5

NAMES = ("brightness", "richness", "fullness", "undulation", "symmetry")


@dataclass(frozen=True)
class DescriptorVector:
    """The five descriptor scalars, in report column order."""

    brightness: float
    richness: float
    fullness: float
    undulation: float
    symmetry: float

    def __post_init__(self):
        for name in NAMES[:4]:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise RangeError(f"{name} {v} outside [0, 1]")
        if not -math.pi < self.symmetry <= math.pi + 1e-12:
            raise RangeError(f"symmetry {self.symmetry} outside (-pi, pi]")

    def as_array(self) -> np.ndarray:
        return np.array([self.brightness, self.richness, self.fullness, self.undulation, self.symmetry])

    @classmethod
    def from_array(cls, values) -> "DescriptorVector":
        b, r, f, u, s = (float(v) for v in values)
        return cls(b, r, f, u, s)


def compress(d: float, k: float = COMPRESSION_STRENGTH) -> float:
    """Logarithmic range compression on [0, 1]: log(d*(e^k - 1) + 1) / k.

    Strictly increasing, fixes 0 and 1.
    """
    if k <= 0:
        raise RangeError(f"compression strength must be positive, got {k}")
    if not 0.0 <= d <= 1.0:
        raise RangeError(f"compression input {d} outside [0, 1]")
    return math.log(d * (math.e**k - 1.0) + 1.0) / k


def _compress_array(d: np.ndarray, k: float) -> np.ndarray:
    return np.log(d * (math.e**k - 1.0) + 1.0) / k


def symmetry_error(a: float, b: float) -> float:
    """Smaller angle between two phases, in [0, pi]."""
    return float(-abs(((a - b) % (2.0 * math.pi)) - math.pi) + math.pi)


def extract(x: Waveform, mode: str = "normalized", k: float = COMPRESSION_STRENGTH) -> DescriptorVector:
    """Compute the five descriptors of one waveform."""
    values = extract_batch(x.samples[np.newaxis, :], mode=mode, k=k)[0]
    return DescriptorVector.from_array(values)


def extract_batch(samples: np.ndarray, mode: str = "normalized", k: float = COMPRESSION_STRENGTH) -> np.ndarray:
    """Descriptors for a (batch, N) array of waveforms; returns (batch, 5).

    Column order matches `NAMES`.
    """
    if mode not in ("normalized", "literal"):
        raise RangeError(f"unknown extraction mode {mode!r}")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (batch, N) samples, got shape {x.shape}")
    n = x.shape[1]
    half = n // 2

    spectrum = np.fft.rfft(x, axis=1)  # bins 0..N/2, unnormalized
    power = np.abs(spectrum) ** 2
    total = power.sum(axis=1)
    total = np.where(total > 0.0, total, 1.0)
    bins = np.arange(half + 1, dtype=np.float64)

    centroid = (bins * power).sum(axis=1) / total
    spread = np.sqrt(np.maximum(((bins - centroid[:, None]) ** 2 * power).sum(axis=1) / total, 0.0))
    odd_power = power[:, 1::2].sum(axis=1)
    fullness = 1.0 - odd_power / total
    mean_diff = np.abs(np.diff(x, axis=1)).sum(axis=1) / (n - 1)
    peak = np.abs(x).max(axis=1)
    peak = np.where(peak > 0.0, peak, 1.0)
    symmetry = np.angle(spectrum.sum(axis=1))

    if mode == "normalized":
        brightness = _compress_array(centroid / half, k)
        richness = _compress_array(spread / half, k)
        undulation = _compress_array(np.minimum(1.0, mean_diff / (2.0 * peak)), k)
    else:
        clamp = lambda v: np.clip(v, 0.0, 1.0)
        brightness = _compress_array(clamp((bins * power).sum(axis=1)), k)
        richness = _compress_array(clamp(((bins - centroid[:, None]) ** 2 * power).sum(axis=1)), k)
        undulation = _compress_array(clamp(mean_diff * (n - 1)), k) / (n - 1)

    out = np.stack([brightness, richness, np.clip(fullness, 0.0, 1.0), undulation, symmetry], axis=1)
    return out

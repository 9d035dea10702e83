"""Dataset construction: synthetic waveform families and WAV ingestion.

The synthetic generator replaces a proprietary corpus with eight
parametric families. Each family recipe is a band-limited harmonic
construction whose parameters (harmonic count, spectral slope, duty
cycle, modulation index) are jittered per sample by a seeded generator,
so identical seeds rebuild identical datasets bit for bit.

Families and their recipes:

  saw             amplitudes 1/k^p, p ~ U(0.95, 1.1), all harmonics,
                  alternating sine signs
  square          odd harmonics only, amplitudes 1/k^p, p ~ U(0.9, 1.1)
  triangle        odd harmonics, amplitudes 1/k^p, p ~ U(1.8, 2.2),
                  alternating signs
  pulse           rectangle of duty d ~ U(0.25, 0.33): amplitudes
                  |sin(pi k d)|/k over all harmonics
  harmonic-stack  2-3 odd harmonics from {3,5,7,9,11} plus 2-3 others
                  from 2..12, amplitudes U(0.5, 1)
  fm-bell         harmonic FM on carrier 2, sin(4 pi t + beta sin(4 pi t)),
                  beta ~ U(1.5, 3); spectrum lives on even harmonics only
  formant         harmonic comb under a Gaussian envelope centered at
                  harmonic U(18, 26) with width U(2, 3.5)
  soft-noise      every harmonic to ~64 with random phase, amplitudes
                  1/k^p, p ~ U(0.5, 0.7)

The parameter ranges are deliberately tight enough that the families
form separated clusters in magnitude-spectrum space. Every family adds
mild per-harmonic amplitude jitter and (except soft-noise, which is all
phase noise) small phase jitter, then passes through preprocess for
zero-DC unit-energy normalization.
"""

from __future__ import annotations

import io
import json
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .descriptors import DescriptorVector, extract, extract_batch
from .errors import ConfigError, DegenerateInputError, IngestError
from .wavetable import Waveform, preprocess
from .wavio import load_frames

FAMILY_NAMES = (
    "saw",
    "square",
    "triangle",
    "pulse",
    "harmonic-stack",
    "fm-bell",
    "formant",
    "soft-noise",
)

DEFAULT_STYLES = ("saw", "square", "triangle", "pulse")

DATASET_MAGIC = b"WSDS"


@dataclass(frozen=True)
class LabeledWaveform:
    """One training sample: waveform, style label, cached descriptors."""

    waveform: Waveform
    style_label: int
    descriptors: DescriptorVector
    source_id: str

    def __post_init__(self):
        fresh = extract(self.waveform)
        if np.max(np.abs(fresh.as_array() - self.descriptors.as_array())) > 1e-9:
            raise ConfigError(f"cached descriptors of {self.source_id!r} disagree with the extractor")


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for a reproducible dataset build."""

    source: str = "synthetic"
    styles: tuple = DEFAULT_STYLES
    waveforms_per_style: int = 128
    seed: int = 0
    fold_count: int = 5
    fold_index: int = 0

    def __post_init__(self):
        if self.source not in ("synthetic", "waveedit"):
            raise ConfigError(f"unknown dataset source {self.source!r}")
        if self.waveforms_per_style < 1:
            raise ConfigError("waveforms_per_style must be positive")
        if not 0 <= self.fold_index < self.fold_count:
            raise ConfigError(f"fold index {self.fold_index} outside [0, {self.fold_count})")
        object.__setattr__(self, "styles", tuple(self.styles))


def _harmonic_sum(n: int, amps: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """x[t] = sum_k amps[k] sin(2 pi (k+1) t / n + phases[k])."""
    t = np.arange(n)[np.newaxis, :]
    k = np.arange(1, amps.size + 1)[:, np.newaxis]
    return (amps[:, np.newaxis] * np.sin(2 * np.pi * k * t / n + phases[:, np.newaxis])).sum(axis=0)


def _jitter(rng, amps: np.ndarray, phases: np.ndarray, phase_scale: float = 0.1):
    amps = amps * (1.0 + 0.03 * rng.standard_normal(amps.size))
    phases = phases + phase_scale * rng.standard_normal(phases.size)
    return amps, phases


def _family_saw(rng, n):
    h = int(rng.integers(28, 41))
    p = rng.uniform(0.95, 1.1)
    k = np.arange(1, h + 1)
    amps = 1.0 / k**p
    phases = np.where(k % 2 == 1, 0.0, np.pi)  # alternating signs
    return _harmonic_sum(n, *_jitter(rng, amps, phases))


def _family_square(rng, n):
    h = int(rng.integers(28, 41))
    p = rng.uniform(0.9, 1.1)
    k = np.arange(1, h + 1)
    amps = np.where(k % 2 == 1, 1.0 / k**p, 0.0)
    return _harmonic_sum(n, *_jitter(rng, amps, np.zeros(h)))


def _family_triangle(rng, n):
    h = int(rng.integers(28, 41))
    p = rng.uniform(1.8, 2.2)
    k = np.arange(1, h + 1)
    amps = np.where(k % 2 == 1, 1.0 / k**p, 0.0)
    phases = np.where(k % 4 == 3, np.pi, 0.0)  # alternate odd-harmonic signs
    return _harmonic_sum(n, *_jitter(rng, amps, phases))


def _family_pulse(rng, n):
    h = int(rng.integers(28, 41))
    duty = rng.uniform(0.25, 0.33)
    k = np.arange(1, h + 1)
    amps = np.abs(np.sin(np.pi * k * duty)) / k
    return _harmonic_sum(n, *_jitter(rng, amps, np.zeros(h)))


def _family_harmonic_stack(rng, n):
    # always at least two odd members, keeping it apart from even-only bells
    odd = rng.choice(np.array([3, 5, 7, 9, 11]), size=int(rng.integers(2, 4)), replace=False)
    rest_pool = np.setdiff1d(np.arange(2, 13), odd)
    rest = rng.choice(rest_pool, size=int(rng.integers(2, 4)), replace=False)
    harmonics = np.concatenate([odd, rest])
    amps = np.zeros(12)
    amps[harmonics - 1] = rng.uniform(0.5, 1.0, size=harmonics.size)
    return _harmonic_sum(n, *_jitter(rng, amps, np.zeros(12)))


def _family_fm_bell(rng, n):
    beta = rng.uniform(1.5, 3.0)
    phase = rng.uniform(-np.pi, np.pi)
    t = np.arange(n) / n
    return np.sin(4 * np.pi * t + beta * np.sin(4 * np.pi * t) + phase)


def _family_formant(rng, n):
    h = 40
    center = rng.uniform(18.0, 26.0)
    width = rng.uniform(2.0, 3.5)
    k = np.arange(1, h + 1)
    amps = np.exp(-0.5 * ((k - center) / width) ** 2)
    return _harmonic_sum(n, *_jitter(rng, amps, np.zeros(h)))


def _family_soft_noise(rng, n):
    h = int(rng.integers(56, 65))
    p = rng.uniform(0.5, 0.7)
    k = np.arange(1, h + 1)
    amps = 1.0 / k**p
    phases = rng.uniform(-np.pi, np.pi, size=h)
    return _harmonic_sum(n, amps, phases)


_FAMILIES = {
    "saw": _family_saw,
    "square": _family_square,
    "triangle": _family_triangle,
    "pulse": _family_pulse,
    "harmonic-stack": _family_harmonic_stack,
    "fm-bell": _family_fm_bell,
    "formant": _family_formant,
    "soft-noise": _family_soft_noise,
}


def generate_synthetic(spec: DatasetSpec, target_length: int = 1024) -> list[LabeledWaveform]:
    """Build the labeled synthetic dataset described by `spec`."""
    for family in spec.styles:
        if family not in _FAMILIES:
            raise ConfigError(f"unknown waveform family {family!r}; known: {sorted(_FAMILIES)}")
    samples = []
    for label, family in enumerate(spec.styles):
        recipe = _FAMILIES[family]
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, label]))
        for i in range(spec.waveforms_per_style):
            raw = recipe(rng, target_length)
            waveform = preprocess(raw, target_length)
            samples.append(
                LabeledWaveform(
                    waveform=waveform,
                    style_label=label,
                    descriptors=extract(waveform),
                    source_id=f"synthetic:{family}:{spec.seed}:{i}",
                )
            )
    return samples


def ingest_waveedit(
    paths,
    frame_length: int = 256,
    style_assignment: str = "random",
    num_styles: int = 2,
    seed: int = 0,
    target_length: int = 1024,
) -> list[LabeledWaveform]:
    """Slice WAV files into single-cycle frames and label them.

    `style_assignment` is either "random" (seeded split into
    `num_styles` groups) or "directory" (label = position of the file's
    parent directory among all parent directories, sorted).
    """
    if style_assignment not in ("random", "directory"):
        raise ConfigError(f"unknown style assignment {style_assignment!r}")
    paths = [str(p) for p in paths]
    frames = []
    for path in paths:
        for j, frame in enumerate(load_frames(path, frame_length)):
            frames.append((path, j, frame))

    if style_assignment == "directory":
        import os

        dirs = sorted({os.path.dirname(p) for p in paths})
        labels = [dirs.index(os.path.dirname(p)) for p, _, _ in frames]
    else:
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, num_styles, size=len(frames)).tolist()

    samples = []
    silent = 0
    for (path, j, frame), label in zip(frames, labels):
        try:
            waveform = preprocess(frame, target_length)
        except DegenerateInputError:
            silent += 1
            continue
        samples.append(
            LabeledWaveform(
                waveform=waveform,
                style_label=int(label),
                descriptors=extract(waveform),
                source_id=f"{path}#{j}",
            )
        )
    if silent:
        warnings.warn(f"dropped {silent} silent frame(s) during ingestion", stacklevel=2)
    return samples


def kfold(dataset, fold_count: int = 5, fold_index: int = 0):
    """Stratified split: every fold_count-th sample of each style is test."""
    if not 0 <= fold_index < fold_count:
        raise ConfigError(f"fold index {fold_index} outside [0, {fold_count})")
    by_style: dict[int, list] = {}
    for sample in dataset:
        by_style.setdefault(sample.style_label, []).append(sample)
    for label, members in sorted(by_style.items()):
        if len(members) < fold_count:
            raise ConfigError(f"style {label} has {len(members)} samples, fewer than {fold_count} folds")
    train, test = [], []
    counters: dict[int, int] = {}
    for sample in dataset:
        i = counters.get(sample.style_label, 0)
        counters[sample.style_label] = i + 1
        (test if i % fold_count == fold_index else train).append(sample)
    return train, test


def descriptor_medians(dataset) -> np.ndarray:
    """Per-descriptor medians over a dataset, used as sweep defaults."""
    if not dataset:
        raise ConfigError("empty dataset has no descriptor medians")
    values = np.stack([s.descriptors.as_array() for s in dataset])
    return np.median(values, axis=0)


def as_arrays(dataset):
    """Dataset to (waveforms (M, N), labels (M,), descriptors (M, 5))."""
    x = np.stack([s.waveform.samples for s in dataset])
    labels = np.array([s.style_label for s in dataset], dtype=np.int64)
    d = np.stack([s.descriptors.as_array() for s in dataset])
    return x, labels, d


# ---------------------------------------------------------------------------
# cache file


def save_dataset(path, dataset, spec: DatasetSpec):
    """Manifest JSON plus one f32 block of waveforms and descriptors."""
    x, labels, desc = as_arrays(dataset)
    manifest = json.dumps(
        {
            "spec": {
                "source": spec.source,
                "styles": list(spec.styles),
                "waveforms_per_style": spec.waveforms_per_style,
                "seed": spec.seed,
                "fold_count": spec.fold_count,
                "fold_index": spec.fold_index,
            },
            "num_samples": len(dataset),
            "waveform_length": int(x.shape[1]) if len(dataset) else 0,
            "labels": labels.tolist(),
            "source_ids": [s.source_id for s in dataset],
        }
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(struct.pack("<Q", len(manifest)))
    buf.write(manifest)
    buf.write(np.ascontiguousarray(x, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(desc, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_dataset(path):
    """Rebuild (dataset, spec) from a cache file.

    Waveforms are stored f32; descriptors are recomputed from the loaded
    samples so the cached-descriptor invariant holds exactly, and the
    stored f32 copies are checked against them as a corruption guard.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != DATASET_MAGIC:
        raise IngestError(f"{path}: not a dataset cache file")
    (manifest_len,) = struct.unpack_from("<Q", blob, 4)
    offset = 12 + manifest_len
    try:
        manifest = json.loads(blob[12:offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestError(f"{path}: malformed manifest") from exc
    count = manifest["num_samples"]
    n = manifest["waveform_length"]
    want = offset + 4 * count * n + 4 * count * 5
    if len(blob) < want:
        raise IngestError(f"{path}: data block cut short ({len(blob)} of {want} bytes)")
    x = np.frombuffer(blob, dtype="<f4", count=count * n, offset=offset).reshape(count, n)
    stored = np.frombuffer(blob, dtype="<f4", count=count * 5, offset=offset + 4 * count * n)
    stored = stored.reshape(count, 5)

    spec = DatasetSpec(**manifest["spec"])
    fresh = extract_batch(x.astype(np.float64)) if count else np.zeros((0, 5))
    if count and np.max(np.abs(fresh - stored)) > 1e-3:
        raise IngestError(f"{path}: cached descriptors disagree with waveform data")
    dataset = [
        LabeledWaveform(
            waveform=Waveform(x[i].astype(np.float64)),
            style_label=int(manifest["labels"][i]),
            descriptors=DescriptorVector.from_array(fresh[i]),
            source_id=manifest["source_ids"][i],
        )
        for i in range(count)
    ]
    return dataset, spec

"""Reconstruction metrics, latent diagnostics, generation procedures, benchmarks.

Metric cores are pure array functions so they can be checked against
stub models; the model-facing wrappers handle encoding and decoding in
eval mode with zero posterior noise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import as_arrays
from .descriptors import NAMES, extract_batch
from .errors import ConfigError, RangeError, ShapeError
from .model import ArchitectureConfig, Model, SubspacePriorTable
from .wavetable import Wavetable

SYMMETRY_INDEX = NAMES.index("symmetry")
_VARIANCE_FLOOR = 1e-12


def _wrap_angle(theta):
    """Map angles into [-pi, pi)."""
    return (theta + np.pi) % (2.0 * np.pi) - np.pi


def _angular_abs_error(a, b):
    """Smaller angle between phase arrays, elementwise in [0, pi]."""
    return np.pi - np.abs((a - b) % (2.0 * np.pi) - np.pi)


def _descriptor_array(d) -> np.ndarray:
    values = d.as_array() if hasattr(d, "as_array") else d
    return np.asarray(values, dtype=np.float64).reshape(-1)


# ---------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class ReconMetrics:
    """Waveform/spectrum/descriptor errors over one sample set."""

    waveform_mae: float
    spectral_mse: float
    descriptor_mae: tuple
    per_style: dict = field(default_factory=dict)

    def __post_init__(self):
        values = [self.waveform_mae, self.spectral_mse, *self.descriptor_mae]
        if not all(math.isfinite(v) and v >= 0 for v in values):
            raise RangeError(f"metrics must be finite and >= 0, got {values}")


@dataclass(frozen=True)
class DisentanglementReport:
    """Subspace-prior fit and style-assignment quality of encoded latents."""

    latent_kl: float
    feedback_latent_kl: float
    prior_assignment_accuracy: float
    feedback_assignment_accuracy: float
    per_style_accuracy: dict = field(default_factory=dict)

    def __post_init__(self):
        values = [
            self.latent_kl,
            self.feedback_latent_kl,
            self.prior_assignment_accuracy,
            self.feedback_assignment_accuracy,
        ]
        if not all(math.isfinite(v) and v >= 0 for v in values):
            raise RangeError(f"report values must be finite and >= 0, got {values}")

    def as_dict(self) -> dict:
        return {
            "latent_kl": self.latent_kl,
            "feedback_latent_kl": self.feedback_latent_kl,
            "prior_assignment_accuracy": self.prior_assignment_accuracy,
            "feedback_assignment_accuracy": self.feedback_assignment_accuracy,
            "per_style_accuracy": dict(self.per_style_accuracy),
        }


@dataclass(frozen=True)
class EvalReport:
    """Full evaluation summary for one model on one held-out set."""

    waveform_mae: float
    spectral_mse: float
    descriptor_mae: tuple
    latent_kl: float
    feedback_latent_kl: float
    prior_assignment_accuracy: float
    feedback_assignment_accuracy: float
    per_style: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "waveform_mae": self.waveform_mae,
            "spectral_mse": self.spectral_mse,
            "descriptor_mae": {name: v for name, v in zip(NAMES, self.descriptor_mae)},
            "latent_kl": self.latent_kl,
            "feedback_latent_kl": self.feedback_latent_kl,
            "prior_assignment_accuracy": self.prior_assignment_accuracy,
            "feedback_assignment_accuracy": self.feedback_assignment_accuracy,
            "per_style": {k: dict(v) for k, v in self.per_style.items()},
        }


@dataclass(frozen=True)
class FlopsBreakdown:
    """Analytic per-decode cost of a decoder, by operation kind.

    `conv` is exactly twice the multiply-accumulate count of the conv,
    transposed-conv and linear layers; bias adds, batchnorm (2 per
    element) and activations (1 per element) are tallied separately.
    """

    macs: int
    conv: int
    bias: int
    batchnorm: int
    activation: int

    @property
    def total(self) -> int:
        return self.conv + self.bias + self.batchnorm + self.activation

    def as_dict(self) -> dict:
        return {
            "macs": self.macs,
            "conv": self.conv,
            "bias": self.bias,
            "batchnorm": self.batchnorm,
            "activation": self.activation,
            "total": self.total,
        }


@dataclass(frozen=True)
class BenchReport:
    """Decode latency benchmark at a fixed audio buffer configuration."""

    parameter_count: int
    flops_per_decode: int
    mean_latency_ms: float
    p99_latency_ms: float
    rtf: float
    buffer_length: int
    sample_rate: int

    def __post_init__(self):
        buffer_ms = 1000.0 * self.buffer_length / self.sample_rate
        if not math.isclose(self.rtf, buffer_ms / self.mean_latency_ms, rel_tol=1e-9):
            raise RangeError("rtf must equal buffer duration over mean latency")

    def as_dict(self) -> dict:
        return {
            "parameter_count": self.parameter_count,
            "flops_per_decode": self.flops_per_decode,
            "mean_latency_ms": self.mean_latency_ms,
            "p99_latency_ms": self.p99_latency_ms,
            "rtf": self.rtf,
            "buffer_length": self.buffer_length,
            "sample_rate": self.sample_rate,
        }


# ---------------------------------------------------------------------------
# reconstruction metrics


def waveform_metrics(x: np.ndarray, x_hat: np.ndarray, labels=None, style_names=None) -> ReconMetrics:
    """Errors between matched (B, N) waveform arrays.

    Waveform MAE is mean |x_hat - x|; spectral MSE is the mean squared
    difference of one-sided magnitude spectra; descriptor MAE compares
    normalized-mode descriptors per column, with the symmetry column
    measured along the circle.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.ndim != 2 or x.shape != x_hat.shape:
        raise ShapeError("metrics expect matching (batch, length) arrays", x.shape, x_hat.shape)
    if x.shape[0] == 0:
        raise ConfigError("cannot evaluate an empty sample set")

    wave_err = np.mean(np.abs(x_hat - x), axis=1)
    spec_err = np.mean((np.abs(np.fft.rfft(x_hat, axis=1)) - np.abs(np.fft.rfft(x, axis=1))) ** 2, axis=1)
    d_true = extract_batch(x)
    d_hat = extract_batch(x_hat)
    desc_err = np.abs(d_hat - d_true)
    desc_err[:, SYMMETRY_INDEX] = _angular_abs_error(d_hat[:, SYMMETRY_INDEX], d_true[:, SYMMETRY_INDEX])

    per_style = {}
    if labels is not None:
        labels = np.asarray(labels).reshape(-1)
        for label in np.unique(labels):
            mask = labels == label
            name = style_names[label] if style_names is not None else str(int(label))
            per_style[name] = {
                "count": int(mask.sum()),
                "waveform_mae": float(wave_err[mask].mean()),
                "spectral_mse": float(spec_err[mask].mean()),
                "descriptor_mae": desc_err[mask].mean(axis=0).tolist(),
            }
    return ReconMetrics(
        waveform_mae=float(wave_err.mean()),
        spectral_mse=float(spec_err.mean()),
        descriptor_mae=tuple(desc_err.mean(axis=0)),
        per_style=per_style,
    )


def reconstruct_batch(model: Model, samples):
    """Posterior-mean reconstructions of a sample list, eval mode."""
    from . import autodiff as ad

    x, labels, desc = as_arrays(samples)
    with ad.no_grad():
        mu, _ = model.encode_batch(x.astype(model.dtype), training=False)
        zd = np.concatenate([mu.values, desc.astype(model.dtype)], axis=1)
        raw = model.decode_batch(zd, training=False).values.astype(np.float64)
    centered = raw - raw.mean(axis=1, keepdims=True)
    energy = np.sum(centered * centered, axis=1, keepdims=True)
    if np.any(energy <= 1e-24):
        raise ConfigError("decoder produced a silent waveform; cannot normalize")
    x_hat = centered / np.sqrt(energy)
    return x, x_hat, labels, desc, mu.values.astype(np.float64)


def reconstruction_metrics(model: Model, samples) -> ReconMetrics:
    """Posterior-mean reconstruction errors on a held-out sample list."""
    if not samples:
        raise ConfigError("cannot evaluate an empty sample set")
    x, x_hat, labels, _, _ = reconstruct_batch(model, samples)
    return waveform_metrics(x, x_hat, labels, model.style_names)


# ---------------------------------------------------------------------------
# latent diagnostics


def subspace_prior_kl(mu: np.ndarray, labels, priors: SubspacePriorTable) -> float:
    """Mean over styles of KL(fitted subspace Gaussian, conditioned prior).

    For style i, the style-i rows of `mu` are restricted to subspace i, a
    diagonal Gaussian is fitted by moment matching, and the divergence to
    the switched-on prior of that subspace is computed in closed form.
    """
    mu = np.asarray(mu, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    dim = priors.subspace_dim
    divergences = []
    for style in range(priors.num_subspaces):
        rows = mu[labels == style][:, style * dim : (style + 1) * dim]
        if rows.shape[0] < 2:
            raise ConfigError(f"style {style} has {rows.shape[0]} samples; need >= 2 to fit a Gaussian")
        m = rows.mean(axis=0)
        v = np.maximum(rows.var(axis=0), _VARIANCE_FLOOR)
        pm = priors.on_means[style]
        pv = np.full(dim, priors.on_stds[style] ** 2)
        ratio = v / pv
        divergences.append(0.5 * np.sum(ratio + (m - pm) ** 2 / pv - 1.0 - np.log(ratio)))
    return float(np.mean(divergences))


def prior_patterns(priors: SubspacePriorTable) -> np.ndarray:
    """(S, S*dim) matrix; row i is the latent mean with subspace i switched on."""
    s, dim = priors.num_subspaces, priors.subspace_dim
    base = priors.off_means.reshape(-1)
    patterns = np.tile(base, (s, 1))
    for i in range(s):
        patterns[i, i * dim : (i + 1) * dim] = priors.on_means[i]
    return patterns


def prior_assignment(mu: np.ndarray, labels, priors: SubspacePriorTable):
    """Nearest-prior-pattern accuracy of encoded means.

    Returns (accuracy, per_style) where per_style maps style index to the
    fraction of its samples assigned back to it.
    """
    mu = np.asarray(mu, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    patterns = prior_patterns(priors)
    distances = np.sum((mu[:, np.newaxis, :] - patterns[np.newaxis, :, :]) ** 2, axis=2)
    predicted = distances.argmin(axis=1)
    accuracy = float(np.mean(predicted == labels))
    per_style = {
        int(style): float(np.mean(predicted[labels == style] == style)) for style in np.unique(labels)
    }
    return accuracy, per_style


def latent_disentanglement(model: Model, samples) -> DisentanglementReport:
    """Prior fit and assignment accuracy of direct and feedback latents.

    Feedback latents re-encode the posterior-mean reconstructions, so
    they measure whether decoded waveforms still carry their style.
    """
    if not samples:
        raise ConfigError("cannot evaluate an empty sample set")
    from . import autodiff as ad

    x, x_hat, labels, _, mu = reconstruct_batch(model, samples)
    with ad.no_grad():
        mu_fb, _ = model.encode_batch(x_hat.astype(model.dtype), training=False)
    mu_fb = mu_fb.values.astype(np.float64)

    latent_kl = subspace_prior_kl(mu, labels, model.priors)
    feedback_kl = subspace_prior_kl(mu_fb, labels, model.priors)
    accuracy, per_style = prior_assignment(mu, labels, model.priors)
    fb_accuracy, fb_per_style = prior_assignment(mu_fb, labels, model.priors)
    named = {
        model.style_names[style]: {"latent": acc, "feedback": fb_per_style.get(style, 0.0)}
        for style, acc in per_style.items()
    }
    return DisentanglementReport(
        latent_kl=latent_kl,
        feedback_latent_kl=feedback_kl,
        prior_assignment_accuracy=accuracy,
        feedback_assignment_accuracy=fb_accuracy,
        per_style_accuracy=named,
    )


def evaluate(model: Model, samples) -> EvalReport:
    """Reconstruction metrics and latent diagnostics in one report."""
    recon = reconstruction_metrics(model, samples)
    latent = latent_disentanglement(model, samples)
    per_style = {name: dict(stats) for name, stats in recon.per_style.items()}
    for name, acc in latent.per_style_accuracy.items():
        per_style.setdefault(name, {}).update(
            assignment_accuracy=acc["latent"], feedback_assignment_accuracy=acc["feedback"]
        )
    return EvalReport(
        waveform_mae=recon.waveform_mae,
        spectral_mse=recon.spectral_mse,
        descriptor_mae=recon.descriptor_mae,
        latent_kl=latent.latent_kl,
        feedback_latent_kl=latent.feedback_latent_kl,
        prior_assignment_accuracy=latent.prior_assignment_accuracy,
        feedback_assignment_accuracy=latent.feedback_assignment_accuracy,
        per_style=per_style,
    )


# ---------------------------------------------------------------------------
# generation procedures


def interpolate_wavetable(model, a, b, count: int) -> Wavetable:
    """Decode `count` evenly spaced points on the segment between a and b.

    Style coordinates and descriptors are combined convexly; the symmetry
    descriptor travels the shorter angular arc. Endpoints decode a and b
    exactly. `model` only needs a decode(style_coords, descriptors)
    method, so stubs can stand in for trained models.
    """
    if count < 2:
        raise RangeError(f"interpolation needs >= 2 rows, got {count}")
    a_s = np.asarray(a.style_coords, dtype=np.float64).reshape(-1)
    b_s = np.asarray(b.style_coords, dtype=np.float64).reshape(-1)
    if a_s.shape != b_s.shape:
        raise ShapeError("endpoint style coordinates disagree", a_s.shape, b_s.shape)
    a_d = _descriptor_array(a.descriptors)
    b_d = _descriptor_array(b.descriptors)
    if a_d.shape != b_d.shape:
        raise ShapeError("endpoint descriptors disagree", a_d.shape, b_d.shape)
    delta_s = b_s - a_s
    delta_d = b_d - a_d
    if a_d.size > SYMMETRY_INDEX:
        delta_d[SYMMETRY_INDEX] = _wrap_angle(b_d[SYMMETRY_INDEX] - a_d[SYMMETRY_INDEX])

    rows = []
    for i in range(count):
        if i == 0:
            s, d = a_s, a_d
        elif i == count - 1:
            s, d = b_s, b_d
        else:
            t = i / (count - 1)
            s = a_s + t * delta_s
            d = a_d + t * delta_d
            if a_d.size > SYMMETRY_INDEX and delta_d[SYMMETRY_INDEX] != 0.0:
                d[SYMMETRY_INDEX] = _wrap_angle(d[SYMMETRY_INDEX])
        rows.append(model.decode(s, d))
    return Wavetable(tuple(rows))


def descriptor_sweep(
    model,
    which: str,
    lo: float | None = None,
    hi: float | None = None,
    steps: int = 5,
    style_coords=None,
    medians=None,
) -> Wavetable:
    """Decode a table that varies one descriptor over [lo, hi] in `steps` rows.

    The remaining descriptors sit at the dataset medians (stored on the
    model by the trainer, or passed explicitly); style coordinates
    default to all zeros. Symmetry sweeps default to the full circle,
    the other descriptors to 0.2..1.0.
    """
    if which not in NAMES:
        raise ConfigError(f"unknown descriptor {which!r}; known: {list(NAMES)}")
    if steps < 2:
        raise RangeError(f"sweep needs >= 2 rows, got {steps}")
    index = NAMES.index(which)
    bound = (-np.pi, np.pi) if index == SYMMETRY_INDEX else (0.0, 1.0)
    if lo is None:
        lo = bound[0] if index == SYMMETRY_INDEX else 0.2
    if hi is None:
        hi = bound[1]
    if not lo < hi:
        raise RangeError(f"sweep needs lo < hi, got [{lo}, {hi}]")
    if lo < bound[0] or hi > bound[1]:
        raise RangeError(f"sweep range [{lo}, {hi}] outside descriptor range {bound}")

    if medians is None:
        medians = getattr(model, "extras", {}).get("descriptor_medians")
        if medians is None:
            raise ConfigError("model stores no descriptor medians; pass medians explicitly")
    medians = np.asarray(medians, dtype=np.float64).reshape(-1)
    if medians.size != len(NAMES):
        raise ShapeError("descriptor medians size mismatch", medians.shape, (len(NAMES),))
    if style_coords is None:
        style_coords = np.zeros(model.config.style_latent_dim)

    rows = []
    for value in np.linspace(lo, hi, steps):
        d = medians.copy()
        d[index] = value
        rows.append(model.decode(style_coords, d))
    return Wavetable(tuple(rows))


# ---------------------------------------------------------------------------
# compute benchmarks


def count_flops(config: ArchitectureConfig) -> FlopsBreakdown:
    """Analytic per-waveform decoder cost.

    Conv, transposed-conv and linear layers cost 2 FLOPs per
    multiply-accumulate; bias adds cost 1 per output element, batchnorm 2
    per element, activations 1 per element. Mirrors decode_batch layer
    for layer at batch 1.
    """
    macs = 0
    bias = 0
    batchnorm = 0
    activation = 0

    seed_dim = config.decoder_seed_channels * config.decoder_seed_length
    in_dim = config.style_latent_dim + config.descriptor_dim
    macs += in_dim * seed_dim
    bias += seed_dim
    activation += seed_dim

    channels = config.decoder_seed_channels
    length = config.decoder_seed_length
    for c in config.decoder_channels:
        macs += channels * c * config.decoder_up_kernel * length
        length *= 2
        batchnorm += 2 * c * length
        activation += c * length
        for _ in range(3):
            macs += c * c * config.decoder_res_kernel * length
            batchnorm += 2 * c * length
            activation += c * length
        channels = c

    macs += channels * 1 * 1 * length
    bias += length
    return FlopsBreakdown(macs=macs, conv=2 * macs, bias=bias, batchnorm=batchnorm, activation=activation)


def bench_rtf(
    model: Model,
    buffer_length: int = 1024,
    sample_rate: int = 48000,
    iterations: int = 100,
    warmup: int = 10,
    seed: int = 0,
) -> BenchReport:
    """Single-thread decode latency and real-time factor.

    Real-time factor is buffer duration over mean decode time, so > 1
    means the decoder outruns playback. The first `warmup` (>= 10)
    decodes are discarded and BLAS threading is pinned to one thread.
    """
    from threadpoolctl import threadpool_limits

    if iterations < 1:
        raise RangeError(f"iterations must be >= 1, got {iterations}")
    if warmup < 10:
        raise RangeError(f"warmup must be >= 10, got {warmup}")
    if buffer_length < 1 or sample_rate < 1:
        raise RangeError("buffer_length and sample_rate must be positive")

    rng = np.random.default_rng(seed)
    latents = rng.normal(size=(warmup + iterations, model.config.style_latent_dim))
    descriptors = np.array([0.5, 0.5, 0.5, 0.5, 0.0])
    times = np.empty(iterations)
    with threadpool_limits(limits=1):
        for i in range(warmup):
            model.decode(latents[i], descriptors)
        for i in range(iterations):
            tic = time.perf_counter()
            model.decode(latents[warmup + i], descriptors)
            times[i] = time.perf_counter() - tic
    times *= 1000.0
    mean_ms = float(times.mean())
    buffer_ms = 1000.0 * buffer_length / sample_rate
    return BenchReport(
        parameter_count=model.parameter_count(),
        flops_per_decode=count_flops(model.config).total,
        mean_latency_ms=mean_ms,
        p99_latency_ms=float(np.percentile(times, 99)),
        rtf=buffer_ms / mean_ms,
        buffer_length=buffer_length,
        sample_rate=sample_rate,
    )

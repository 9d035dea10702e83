"""Conditional VAE over single-cycle waveforms.

The encoder maps a length-N waveform to a Gaussian posterior over a
latent space organized as one 2-D subspace per style. The prior mean in
a subspace switches to (5, 5) when the sample carries that style label
and stays at the origin otherwise, so each style claims its own plane.
The decoder receives the sampled latent concatenated with the five
waveform descriptors and upsamples back to N samples.

Two stock configurations exist: `base_config` (the full-size model) and
`small_config` (a light variant for real-time decoding). Checkpoints
serialize every weight and running statistic bit-exactly.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import autodiff as ad
from .descriptors import COMPRESSION_STRENGTH, DescriptorVector
from .errors import (
    CheckpointFormatError,
    CheckpointNameError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    RangeError,
    ShapeError,
)
from .wavetable import Waveform, postprocess

CHECKPOINT_MAGIC = b"WSPC"
CHECKPOINT_VERSION = 1

NUM_BLOCKS = 6


@dataclass(frozen=True)
class ArchitectureConfig:
    """Sizes of every layer, plus the latent layout."""

    input_length: int = 1024
    num_styles: int = 4
    subspace_dim: int = 2
    descriptor_dim: int = 5
    encoder_channels: tuple = (8, 16, 32, 48, 64, 64)
    encoder_kernel: int = 5
    encoder_stride: int = 2
    encoder_padding: int = 2
    decoder_seed_channels: int = 64
    decoder_channels: tuple = (16, 8, 8, 4, 2, 2)
    decoder_up_kernel: int = 4
    decoder_res_kernel: int = 3
    variant: str = "ws-small"

    def __post_init__(self):
        if len(self.encoder_channels) != NUM_BLOCKS or len(self.decoder_channels) != NUM_BLOCKS:
            raise ConfigError(
                f"expected {NUM_BLOCKS} encoder and decoder channel entries, got "
                f"{len(self.encoder_channels)} and {len(self.decoder_channels)}"
            )
        if self.input_length % (self.encoder_stride**NUM_BLOCKS) != 0:
            raise ConfigError(f"input length {self.input_length} not divisible by the stride stack")
        if min(self.num_styles, self.subspace_dim, self.descriptor_dim) < 1:
            raise ConfigError("latent dimensions must be positive")

    @property
    def style_latent_dim(self) -> int:
        return self.num_styles * self.subspace_dim

    @property
    def decoder_seed_length(self) -> int:
        return self.input_length // (2**NUM_BLOCKS)

    @property
    def encoder_feature_length(self) -> int:
        return self.input_length // (self.encoder_stride**NUM_BLOCKS)


def small_config(num_styles: int = 4) -> ArchitectureConfig:
    """Light model. Decoder sized for real-time decoding on one core."""
    return ArchitectureConfig(num_styles=num_styles)


def base_config(num_styles: int = 4) -> ArchitectureConfig:
    """Full-size model, roughly 20x the small variant's weight count."""
    return ArchitectureConfig(
        num_styles=num_styles,
        encoder_channels=(32, 64, 128, 256, 256, 512),
        decoder_seed_channels=128,
        decoder_channels=(128, 64, 64, 32, 16, 8),
        variant="ws",
    )


@dataclass(frozen=True)
class SubspacePriorTable:
    """Per-subspace prior means and deviations, conditioned and not.

    Subspace j of a sample labeled with style j uses (on_mean, on_std);
    every other subspace uses (off_mean, off_std).
    """

    off_means: np.ndarray
    on_means: np.ndarray
    off_stds: np.ndarray
    on_stds: np.ndarray

    def __post_init__(self):
        off_means = np.asarray(self.off_means, dtype=np.float64)
        on_means = np.asarray(self.on_means, dtype=np.float64)
        off_stds = np.asarray(self.off_stds, dtype=np.float64)
        on_stds = np.asarray(self.on_stds, dtype=np.float64)
        if off_means.ndim != 2 or off_means.shape != on_means.shape:
            raise ShapeError("prior means must be (num_subspaces, dim)", off_means.shape, on_means.shape)
        n = off_means.shape[0]
        if off_stds.shape != (n,) or on_stds.shape != (n,):
            raise ShapeError("prior stds must have one entry per subspace", off_stds.shape, (n,))
        if np.any(off_stds <= 0) or np.any(on_stds <= 0):
            raise RangeError("prior standard deviations must be positive")
        for name, arr in (
            ("off_means", off_means),
            ("on_means", on_means),
            ("off_stds", off_stds),
            ("on_stds", on_stds),
        ):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def default(cls, num_styles: int, subspace_dim: int = 2) -> "SubspacePriorTable":
        return cls(
            off_means=np.zeros((num_styles, subspace_dim)),
            on_means=np.full((num_styles, subspace_dim), 5.0),
            off_stds=np.ones(num_styles),
            on_stds=np.ones(num_styles),
        )

    @property
    def num_subspaces(self) -> int:
        return self.off_means.shape[0]

    @property
    def subspace_dim(self) -> int:
        return self.off_means.shape[1]


def select_prior(table: SubspacePriorTable, target_style: int):
    """Concatenated prior (mean, variance) with the target subspace switched on.

    Subspace j contributes (on_mean_j, on_std_j^2) when j equals
    `target_style` and (off_mean_j, off_std_j^2) otherwise.
    """
    if not 0 <= target_style < table.num_subspaces:
        raise RangeError(f"style index {target_style} outside [0, {table.num_subspaces})")
    mean = table.off_means.copy()
    std = table.off_stds.copy()
    mean[target_style] = table.on_means[target_style]
    std[target_style] = table.on_stds[target_style]
    var = np.repeat(std**2, table.subspace_dim)
    return mean.reshape(-1), var


@dataclass(frozen=True)
class ParamPoint:
    """One decoder input: a point per style subspace plus descriptors."""

    style_coords: np.ndarray
    descriptors: DescriptorVector

    def __post_init__(self):
        coords = np.asarray(self.style_coords, dtype=np.float64).reshape(-1).copy()
        coords.flags.writeable = False
        object.__setattr__(self, "style_coords", coords)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.style_coords, self.descriptors.as_array()])


@dataclass(frozen=True)
class LossWeights:
    """Weights of the loss terms.

    `waveform_initial` decays toward its own value over training via
    `waveform_weight_schedule`; the other weights are constant.
    `descriptor` is None when the descriptor regression term is off.
    """

    spectral: float = 0.354
    divergence: float = 2.231
    waveform_initial: float = 4.170
    waveform_decay_rate: float = 0.144
    descriptor: tuple | None = None

    @classmethod
    def with_descriptor_term(cls) -> "LossWeights":
        return cls(descriptor=(4.17, 4.17, 4.17, 10.0, 40.0))


def waveform_weight_schedule(epoch: float, initial: float = 4.170, rate: float = 0.144) -> float:
    """Decaying weight of the waveform term: initial * (20 e^(-rate*epoch) + 1).

    Starts at 21x the base weight and settles to the base weight, so early
    training focuses on raw shape and later training on spectra.
    """
    if epoch < 0:
        raise RangeError(f"epoch must be >= 0, got {epoch}")
    return initial * (20.0 * math.exp(-rate * epoch) + 1.0)


def _he_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    # gain for leaky ReLU with slope 0.2
    gain = math.sqrt(2.0 / (1.0 + 0.2**2))
    return (rng.standard_normal(shape) * gain / math.sqrt(fan_in)).astype(dtype)


class Model:
    """Encoder/decoder weight set with forward passes and loss assembly."""

    def __init__(
        self,
        config: ArchitectureConfig,
        priors: SubspacePriorTable | None = None,
        style_names: tuple | None = None,
        init_seed: int = 0,
        dtype=np.float32,
    ):
        if priors is None:
            priors = SubspacePriorTable.default(config.num_styles, config.subspace_dim)
        if priors.num_subspaces != config.num_styles or priors.subspace_dim != config.subspace_dim:
            raise ConfigError(
                f"prior table covers {priors.num_subspaces}x{priors.subspace_dim}, "
                f"config wants {config.num_styles}x{config.subspace_dim}"
            )
        if style_names is None:
            style_names = tuple(f"style{i}" for i in range(config.num_styles))
        if len(style_names) != config.num_styles:
            raise ConfigError(f"{len(style_names)} style names for {config.num_styles} styles")
        self.config = config
        self.priors = priors
        self.style_names = tuple(str(s) for s in style_names)
        self.dtype = np.dtype(dtype)
        self.params: dict[str, ad.Tensor] = {}
        self.bn_states: dict[str, ad.BatchNormState] = {}
        self.extras: dict = {}
        self._build(np.random.default_rng(init_seed))

    # ------------------------------------------------------------------
    # construction

    def _add_param(self, name: str, values: np.ndarray) -> ad.Tensor:
        t = ad.Tensor(values, requires_grad=True)
        self.params[name] = t
        return t

    def _add_bn(self, name: str, channels: int):
        self._add_param(f"{name}.gamma", np.ones(channels, dtype=self.dtype))
        self._add_param(f"{name}.beta", np.zeros(channels, dtype=self.dtype))
        self.bn_states[name] = ad.BatchNormState(channels, dtype=self.dtype)

    def _build(self, rng):
        cfg = self.config
        k, dt = cfg.encoder_kernel, self.dtype
        c_prev = 1
        for i, c in enumerate(cfg.encoder_channels):
            # batchnorm follows every conv here, so conv biases would be inert
            self._add_param(f"enc{i}.w", _he_normal(rng, (c, c_prev, k), c_prev * k, dt))
            self._add_bn(f"enc{i}.bn", c)
            c_prev = c
        flat = cfg.encoder_channels[-1] * cfg.encoder_feature_length
        out_dim = 2 * cfg.style_latent_dim
        self._add_param("enc_out.w", _he_normal(rng, (out_dim, flat), flat, dt))
        self._add_param("enc_out.b", np.zeros(out_dim, dtype=dt))

        seed_dim = cfg.decoder_seed_channels * cfg.decoder_seed_length
        in_dim = cfg.style_latent_dim + cfg.descriptor_dim
        self._add_param("dec_seed.w", _he_normal(rng, (seed_dim, in_dim), in_dim, dt))
        self._add_param("dec_seed.b", np.zeros(seed_dim, dtype=dt))
        c_prev = cfg.decoder_seed_channels
        ku, kr = cfg.decoder_up_kernel, cfg.decoder_res_kernel
        for i, c in enumerate(cfg.decoder_channels):
            self._add_param(f"dec{i}.up.w", _he_normal(rng, (c_prev, c, ku), c_prev * ku, dt))
            self._add_bn(f"dec{i}.up.bn", c)
            for j in range(3):
                self._add_param(f"dec{i}.res{j}.w", _he_normal(rng, (c, c, kr), c * kr, dt))
                self._add_bn(f"dec{i}.res{j}.bn", c)
            c_prev = c
        # targets are unit-energy cycles (per-sample RMS 1/sqrt(N)); an
        # O(1)-amplitude init wastes the strong early waveform-loss epochs
        # shrinking the output, so start the projection at the data scale
        out_scale = 1.0 / math.sqrt(cfg.input_length)
        self._add_param("dec_out.w", _he_normal(rng, (1, c_prev, 1), c_prev, dt) * out_scale)
        self._add_param("dec_out.b", np.zeros(1, dtype=dt))

    def parameter_count(self) -> int:
        return sum(t.values.size for t in self.params.values())

    def tensor_names(self):
        """Checkpoint manifest order: weights, then running statistics."""
        names = list(self.params)
        for bn in self.bn_states:
            names.append(f"{bn}.running_mean")
            names.append(f"{bn}.running_var")
        return names

    def _get_tensor(self, name: str) -> np.ndarray:
        if name.endswith(".running_mean"):
            return self.bn_states[name[: -len(".running_mean")]].running_mean
        if name.endswith(".running_var"):
            return self.bn_states[name[: -len(".running_var")]].running_var
        return self.params[name].values

    def _set_tensor(self, name: str, values: np.ndarray):
        if name.endswith(".running_mean"):
            self.bn_states[name[: -len(".running_mean")]].running_mean = values
        elif name.endswith(".running_var"):
            self.bn_states[name[: -len(".running_var")]].running_var = values
        else:
            self.params[name].values = values.astype(self.dtype)

    # ------------------------------------------------------------------
    # forward passes

    def encode_batch(self, x: ad.Tensor | np.ndarray, training: bool = False):
        """(B, N) samples to posterior (mu, logvar), each (B, latent_dim)."""
        x = ad.as_tensor(x)
        cfg = self.config
        if x.values.ndim != 2 or x.shape[1] != cfg.input_length:
            raise ShapeError("encoder expects (batch, input_length)", x.shape, (-1, cfg.input_length))
        h = ad.reshape(x, (x.shape[0], 1, cfg.input_length))
        for i in range(NUM_BLOCKS):
            h = ad.conv1d(
                h,
                self.params[f"enc{i}.w"],
                stride=cfg.encoder_stride,
                padding=cfg.encoder_padding,
            )
            h = ad.batchnorm1d(
                h,
                self.params[f"enc{i}.bn.gamma"],
                self.params[f"enc{i}.bn.beta"],
                self.bn_states[f"enc{i}.bn"],
                training=training,
            )
            h = ad.leaky_relu(h)
        h = ad.reshape(h, (x.shape[0], cfg.encoder_channels[-1] * cfg.encoder_feature_length))
        out = ad.linear(h, self.params["enc_out.w"], self.params["enc_out.b"])
        d = cfg.style_latent_dim
        return out[:, :d], out[:, d:]

    def decode_batch(self, z: ad.Tensor | np.ndarray, training: bool = False) -> ad.Tensor:
        """(B, latent+descriptor) codes to raw (B, N) waveforms."""
        z = ad.as_tensor(z)
        cfg = self.config
        want = cfg.style_latent_dim + cfg.descriptor_dim
        if z.values.ndim != 2 or z.shape[1] != want:
            raise ShapeError("decoder expects (batch, latent+descriptors)", z.shape, (-1, want))
        h = ad.linear(z, self.params["dec_seed.w"], self.params["dec_seed.b"])
        h = ad.leaky_relu(h)
        h = ad.reshape(h, (z.shape[0], cfg.decoder_seed_channels, cfg.decoder_seed_length))
        for i in range(NUM_BLOCKS):
            h = ad.conv1d_transposed(h, self.params[f"dec{i}.up.w"], stride=2, padding=1)
            h = ad.batchnorm1d(
                h,
                self.params[f"dec{i}.up.bn.gamma"],
                self.params[f"dec{i}.up.bn.beta"],
                self.bn_states[f"dec{i}.up.bn"],
                training=training,
            )
            h = ad.leaky_relu(h)
            skip = h
            for j in range(3):
                h = ad.conv1d(
                    h,
                    self.params[f"dec{i}.res{j}.w"],
                    stride=1,
                    padding=(cfg.decoder_res_kernel - 1) // 2,
                )
                h = ad.batchnorm1d(
                    h,
                    self.params[f"dec{i}.res{j}.bn.gamma"],
                    self.params[f"dec{i}.res{j}.bn.beta"],
                    self.bn_states[f"dec{i}.res{j}.bn"],
                    training=training,
                )
                h = ad.leaky_relu(h)
            h = ad.add(skip, h)
        h = ad.conv1d(h, self.params["dec_out.w"], self.params["dec_out.b"])
        return ad.reshape(h, (z.shape[0], cfg.input_length))

    def encode(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Posterior (mu, logvar) of one waveform, eval mode."""
        samples = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError("encode expects a single waveform", samples.shape)
        with ad.no_grad():
            mu, logvar = self.encode_batch(samples[np.newaxis, :].astype(self.dtype))
        return mu.values[0].astype(np.float64), logvar.values[0].astype(np.float64)

    def decode(self, style_coords, descriptors) -> Waveform:
        """Decode one latent point to a normalized waveform, eval mode."""
        coords = np.asarray(style_coords, dtype=np.float64).reshape(-1)
        if coords.size != self.config.style_latent_dim:
            raise ShapeError("style coordinate size mismatch", coords.shape, (self.config.style_latent_dim,))
        if isinstance(descriptors, DescriptorVector):
            d = descriptors.as_array()
        else:
            d = np.asarray(descriptors, dtype=np.float64).reshape(-1)
        if d.size != self.config.descriptor_dim:
            raise ShapeError("descriptor size mismatch", d.shape, (self.config.descriptor_dim,))
        z = np.concatenate([coords, d])[np.newaxis, :].astype(self.dtype)
        with ad.no_grad():
            raw = self.decode_batch(z)
        return postprocess(raw.values[0].astype(np.float64))

    def decode_point(self, point: ParamPoint) -> Waveform:
        return self.decode(point.style_coords, point.descriptors)

    # ------------------------------------------------------------------
    # loss

    def loss(
        self,
        x: np.ndarray,
        style_labels,
        descriptors: np.ndarray,
        eps: np.ndarray,
        weights: LossWeights,
        epoch: float,
        training: bool = True,
    ):
        """Total training loss and its parts for a batch.

        x: (B, N) waveforms; style_labels: (B,) ints; descriptors: (B, 5)
        extracted from x; eps: (B, latent) posterior noise.
        """
        x = np.asarray(x)
        labels = np.asarray(style_labels).reshape(-1)
        if np.any(labels < 0) or np.any(labels >= self.config.num_styles):
            raise RangeError(f"style labels outside [0, {self.config.num_styles})")
        prior_mean = np.empty((labels.size, self.config.style_latent_dim))
        prior_var = np.empty_like(prior_mean)
        for row, label in enumerate(labels):
            prior_mean[row], prior_var[row] = select_prior(self.priors, int(label))

        mu, logvar = self.encode_batch(x.astype(self.dtype), training=training)
        z = ad.reparameterize(mu, logvar, eps.astype(self.dtype))
        zd = ad.concat([z, ad.Tensor(np.asarray(descriptors, dtype=self.dtype))], axis=1)
        x_hat = self.decode_batch(zd, training=training)
        return assemble_loss(
            x.astype(self.dtype), x_hat, mu, logvar, prior_mean, prior_var, weights, epoch,
            target_descriptors=np.asarray(descriptors),
        )


def assemble_loss(
    x: np.ndarray,
    x_hat: ad.Tensor,
    mu: ad.Tensor,
    logvar: ad.Tensor,
    prior_mean: np.ndarray,
    prior_var: np.ndarray,
    weights: LossWeights,
    epoch: float,
    target_descriptors: np.ndarray | None = None,
):
    """Weighted sum of spectral, divergence and waveform terms.

    Returns (total, parts) where parts maps term names to plain floats
    (including the scheduled waveform weight). The optional descriptor
    term regresses the decoded waveform's descriptors onto the targets.
    """
    x = np.asarray(x)
    target_mag = np.abs(np.fft.rfft(x, axis=1)).astype(x_hat.dtype)
    spectral = ad.l2(ad.magnitude_spectrum(x_hat), ad.Tensor(target_mag))
    divergence = ad.kl_diag_gaussian(mu, logvar, prior_mean, prior_var)
    waveform = ad.l1(x_hat, ad.Tensor(x.astype(x_hat.dtype)))
    w_wave = waveform_weight_schedule(epoch, weights.waveform_initial, weights.waveform_decay_rate)

    total = ad.add(
        ad.add(ad.mul(spectral, weights.spectral), ad.mul(divergence, weights.divergence)),
        ad.mul(waveform, w_wave),
    )
    parts = {
        "spectral": spectral.item(),
        "divergence": divergence.item(),
        "waveform": waveform.item(),
        "waveform_weight": w_wave,
    }
    if weights.descriptor is not None:
        if target_descriptors is None:
            raise ConfigError("descriptor loss enabled but no target descriptors supplied")
        desc_term = descriptor_regression(x_hat, np.asarray(target_descriptors), weights.descriptor)
        total = ad.add(total, desc_term)
        parts["descriptor"] = desc_term.item()
    parts["total"] = total.item()
    return total, parts


def differentiable_descriptors(x_hat: ad.Tensor, k: float = COMPRESSION_STRENGTH):
    """The five descriptors of raw (B, N) output as graph ops.

    Mirrors the normalized-mode extractor exactly; used by the optional
    descriptor regression term so gradients reach the decoder.
    """
    n = x_hat.shape[1]
    half = n // 2
    scale = math.e**k - 1.0

    def compress_t(t):
        return ad.mul(ad.log(ad.add(ad.mul(t, scale), 1.0)), 1.0 / k)

    mag = ad.magnitude_spectrum(x_hat)
    power = ad.square(mag)
    total = ad.tsum(power, axis=1)
    bins = np.arange(half + 1, dtype=np.float64)

    centroid = ad.div(ad.tsum(ad.mul(power, bins), axis=1), total)
    brightness = compress_t(ad.mul(centroid, 1.0 / half))
    second = ad.div(ad.tsum(ad.mul(power, bins**2), axis=1), total)
    spread = ad.sqrt(ad.sub(second, ad.square(centroid)))
    richness = compress_t(ad.mul(spread, 1.0 / half))
    odd = ad.tsum(power[:, 1::2], axis=1)
    fullness = ad.sub(1.0, ad.div(odd, total))
    mean_diff = ad.mul(ad.tsum(ad.absolute(ad.sub(x_hat[:, 1:], x_hat[:, :-1])), axis=1), 1.0 / (n - 1))
    peak = ad.tmax(ad.absolute(x_hat), axis=1)
    undulation = compress_t(ad.minimum_const(ad.div(mean_diff, ad.mul(peak, 2.0)), 1.0))
    symmetry = ad.spectral_phase_sum(x_hat)
    return brightness, richness, fullness, undulation, symmetry


def descriptor_regression(x_hat: ad.Tensor, targets: np.ndarray, term_weights) -> ad.Tensor:
    """Sum of weighted mean absolute descriptor errors; symmetry wraps."""
    term_weights = tuple(term_weights)
    if len(term_weights) != 5:
        raise ConfigError(f"descriptor loss needs 5 weights, got {len(term_weights)}")
    preds = differentiable_descriptors(x_hat)
    total = None
    for i, (pred, w) in enumerate(zip(preds, term_weights)):
        target = targets[:, i]
        if i == 4:
            wrapped = ad.mod_const(ad.sub(pred, target), 2.0 * math.pi)
            err = ad.sub(math.pi, ad.absolute(ad.sub(wrapped, math.pi)))
            term = ad.tmean(err)
        else:
            term = ad.tmean(ad.absolute(ad.sub(pred, target)))
        term = ad.mul(term, float(w))
        total = term if total is None else ad.add(total, term)
    return total


# ---------------------------------------------------------------------------
# checkpoint serialization


def _header_dict(model: Model, meta: dict, extras: dict) -> dict:
    any_bn = next(iter(model.bn_states.values()))
    tensors = [
        {"name": name, "shape": list(model._get_tensor(name).shape)} for name in model.tensor_names()
    ]
    tensors += [{"name": name, "shape": list(np.asarray(v).shape)} for name, v in extras.items()]
    return {
        "config": asdict(replace(model.config)),
        "style_names": list(model.style_names),
        "priors": {
            "off_means": model.priors.off_means.tolist(),
            "on_means": model.priors.on_means.tolist(),
            "off_stds": model.priors.off_stds.tolist(),
            "on_stds": model.priors.on_stds.tolist(),
        },
        "batchnorm": {"eps": any_bn.eps, "momentum": any_bn.momentum},
        "parameter_count": model.parameter_count(),
        "model_extras": model.extras,
        "meta": meta,
        "tensors": tensors,
    }


def save_checkpoint(model: Model, path, meta: dict | None = None, extras: dict | None = None):
    """Write weights, running stats and extra tensors to `path`.

    `extras` maps names to arrays stored after the model tensors (the
    trainer keeps optimizer state there). All data is little-endian f32.
    """
    meta = dict(meta or {})
    extras = {k: np.asarray(v, dtype=np.float32) for k, v in (extras or {}).items()}
    header = json.dumps(_header_dict(model, meta, extras)).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<Q", len(header)))
    buf.write(header)
    for name in model.tensor_names():
        data = np.ascontiguousarray(model._get_tensor(name), dtype="<f4")
        buf.write(struct.pack("<Q", data.size))
        buf.write(data.tobytes())
    for name, data in extras.items():
        data = np.ascontiguousarray(data, dtype="<f4")
        buf.write(struct.pack("<Q", data.size))
        buf.write(data.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


@dataclass
class Checkpoint:
    model: Model
    meta: dict
    extras: dict


def load_checkpoint(path) -> Checkpoint:
    """Rebuild a model bit-exactly from `save_checkpoint` output."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    offset = 16 + header_len
    if len(blob) < offset:
        raise CheckpointTruncatedError(f"{path}: header cut short")
    try:
        header = json.loads(blob[16:offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: malformed header") from exc

    config = ArchitectureConfig(
        **{k: tuple(v) if isinstance(v, list) else v for k, v in header["config"].items()}
    )
    priors = SubspacePriorTable(
        off_means=np.array(header["priors"]["off_means"]),
        on_means=np.array(header["priors"]["on_means"]),
        off_stds=np.array(header["priors"]["off_stds"]),
        on_stds=np.array(header["priors"]["on_stds"]),
    )
    model = Model(config, priors=priors, style_names=tuple(header["style_names"]))
    model.extras = dict(header.get("model_extras", {}))
    for state in model.bn_states.values():
        state.eps = header["batchnorm"]["eps"]
        state.momentum = header["batchnorm"]["momentum"]

    expected = model.tensor_names()
    stored = [entry["name"] for entry in header["tensors"]]
    if stored[: len(expected)] != expected:
        raise CheckpointNameError(f"{path}: stored tensors do not match the declared architecture")

    extras = {}
    for entry in header["tensors"]:
        if len(blob) < offset + 8:
            raise CheckpointTruncatedError(f"{path}: missing length for tensor {entry['name']!r}")
        (count,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        shape = tuple(entry["shape"])
        if count != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointNameError(
                f"{path}: tensor {entry['name']!r} length {count} does not match shape {shape}"
            )
        nbytes = count * 4
        if len(blob) < offset + nbytes:
            raise CheckpointTruncatedError(f"{path}: tensor {entry['name']!r} data cut short")
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
        if entry["name"] in expected:
            model._set_tensor(entry["name"], data)
        else:
            extras[entry["name"]] = data
    if header["parameter_count"] != model.parameter_count():
        raise CheckpointNameError(
            f"{path}: header parameter count {header['parameter_count']} "
            f"!= live count {model.parameter_count()}"
        )
    return Checkpoint(model=model, meta=header.get("meta", {}), extras=extras)

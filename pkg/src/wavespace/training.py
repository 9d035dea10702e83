"""Optimization loop: Adam updates, per-epoch schedules, checkpoints, logs.

Every epoch reseeds its generator from (seed, epoch), so minibatch order
and posterior noise depend only on the epoch index. Together with the
optimizer state stored in checkpoints this makes a resumed run
bit-identical to an uninterrupted one. Reproducibility is guaranteed at
thread count 1; BLAS threading can reorder reductions.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import as_arrays, descriptor_medians
from .errors import ConfigError, RangeError, ResumeError, TrainingDivergedError
from .model import LossWeights, Model, load_checkpoint, save_checkpoint

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs besides the dataset and the architecture."""

    epochs: int = 5000
    batch_size: int = 64
    learning_rate: float = 1e-3
    lr_start_factor: float = 1.0
    lr_end_factor: float = 0.5
    lr_ramp_epochs: int = 1500
    weights: LossWeights = field(default_factory=LossWeights)
    descriptor_loss: bool = False
    seed: int = 0
    checkpoint_every: int = 0  # epochs between periodic checkpoints; 0 = final only

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.lr_ramp_epochs < 1:
            raise ConfigError("lr_ramp_epochs must be >= 1")
        if self.lr_start_factor <= 0 or self.lr_end_factor <= 0:
            raise ConfigError("learning-rate factors must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        w = self.weights
        if self.descriptor_loss and w.descriptor is None:
            w = w.with_descriptor_term()
            object.__setattr__(self, "weights", w)
        if min(w.spectral, w.divergence, w.waveform_initial, w.waveform_decay_rate) <= 0:
            raise ConfigError("loss weights must be positive")
        if w.descriptor is not None and min(w.descriptor) <= 0:
            raise ConfigError("descriptor term weights must be positive")

    def as_dict(self) -> dict:
        d = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "lr_start_factor": self.lr_start_factor,
            "lr_end_factor": self.lr_end_factor,
            "lr_ramp_epochs": self.lr_ramp_epochs,
            "descriptor_loss": self.descriptor_loss,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "weights": {
                "spectral": self.weights.spectral,
                "divergence": self.weights.divergence,
                "waveform_initial": self.weights.waveform_initial,
                "waveform_decay_rate": self.weights.waveform_decay_rate,
                "descriptor": None if self.weights.descriptor is None else list(self.weights.descriptor),
            },
        }
        return d


def lr_multiplier(epoch, start: float = 1.0, end: float = 0.5, ramp_epochs: int = 1500) -> float:
    """Linear ramp from `start` at epoch 0 to `end` at `ramp_epochs`, flat after."""
    if epoch < 0:
        raise RangeError(f"epoch must be >= 0, got {epoch}")
    return start + (end - start) * min(epoch / ramp_epochs, 1.0)


class Adam:
    """Adam with bias correction over a name -> Tensor parameter dict."""

    def __init__(self, params, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, epsilon: float = ADAM_EPSILON):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = {name: np.zeros_like(p.values) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.values) for name, p in params.items()}

    def step(self, lr: float):
        """One update from the gradients currently stored on the parameters."""
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.values -= (lr / c1) * m / (np.sqrt(v / c2) + self.epsilon)

    def state_arrays(self) -> dict:
        """First and second moments, keyed for checkpoint extras."""
        out = {}
        for name in self.params:
            out[f"opt.{name}.m"] = self.m[name]
            out[f"opt.{name}.v"] = self.v[name]
        return out

    @classmethod
    def from_state(cls, params, extras: dict, step_count: int) -> "Adam":
        opt = cls(params)
        for name, p in params.items():
            for slot, store in (("m", opt.m), ("v", opt.v)):
                key = f"opt.{name}.{slot}"
                if key not in extras:
                    raise ResumeError(f"checkpoint has no optimizer state {key!r}")
                data = np.asarray(extras[key], dtype=p.values.dtype)
                if data.shape != p.values.shape:
                    raise ResumeError(
                        f"optimizer state {key!r} has shape {data.shape}, parameter is {p.values.shape}"
                    )
                store[name] = data.copy()
        opt.step_count = int(step_count)
        return opt


@dataclass
class EpochRecord:
    """Loss breakdown of one completed epoch (sample-weighted means)."""

    epoch: int
    total: float
    spectral: float
    divergence: float
    waveform: float
    waveform_weight: float
    lr: float
    wall_time: float
    descriptor: float | None = None

    def as_dict(self) -> dict:
        d = {
            "epoch": self.epoch,
            "total": self.total,
            "spectral": self.spectral,
            "divergence": self.divergence,
            "waveform": self.waveform,
            "waveform_weight": self.waveform_weight,
            "lr": self.lr,
            "wall_time": self.wall_time,
        }
        if self.descriptor is not None:
            d["descriptor"] = self.descriptor
        return d


class TrainLog:
    """Per-epoch records; one JSON object per line on disk."""

    def __init__(self, records=None):
        self.records: list[EpochRecord] = list(records or [])

    def append(self, record: EpochRecord):
        self.records.append(record)

    def numeric_records(self) -> list[dict]:
        """Records as dicts with timing stripped, for run-to-run comparison."""
        out = []
        for r in self.records:
            d = r.as_dict()
            d.pop("wall_time")
            out.append(d)
        return out

    def write(self, path):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.as_dict()) + "\n")

    @classmethod
    def read(cls, path) -> "TrainLog":
        records = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                records.append(EpochRecord(**d))
        return cls(records)


def train(config: TrainConfig, dataset, model: Model, *, checkpoint_dir=None, log_path=None, holdout_ids=None):
    """Optimize `model` on `dataset` from scratch; returns (model, TrainLog)."""
    _check_dataset(dataset, model, holdout_ids)
    model.extras["descriptor_medians"] = descriptor_medians(dataset).tolist()
    optimizer = Adam(model.params)
    return _run(config, dataset, model, optimizer, 0, checkpoint_dir, log_path)


def resume(checkpoint_path, config: TrainConfig, dataset, *, architecture=None, checkpoint_dir=None, log_path=None, holdout_ids=None):
    """Continue a checkpointed run up to config.epochs; returns (model, TrainLog).

    Schedules restart from the stored epoch, and the stored optimizer
    moments make the continuation bit-identical to a straight run with
    the same seed.
    """
    ck = load_checkpoint(checkpoint_path)
    model = ck.model
    if architecture is not None and model.config != architecture:
        raise ResumeError(
            f"checkpoint holds a {model.config.variant!r} model, caller expects {architecture.variant!r}"
        )
    start = int(ck.meta.get("epoch", 0))
    if start >= config.epochs:
        raise ResumeError(f"checkpoint already covers {start} epochs, config asks for {config.epochs}")
    optimizer = Adam.from_state(model.params, ck.extras, ck.meta.get("optimizer_steps", 0))
    _check_dataset(dataset, model, holdout_ids)
    model.extras.setdefault("descriptor_medians", descriptor_medians(dataset).tolist())
    return _run(config, dataset, model, optimizer, start, checkpoint_dir, log_path)


def _check_dataset(dataset, model: Model, holdout_ids):
    if not dataset:
        raise ConfigError("training needs a nonempty dataset")
    n = dataset[0].waveform.length
    if n != model.config.input_length:
        raise ConfigError(f"dataset waveforms have {n} samples, model expects {model.config.input_length}")
    labels = {s.style_label for s in dataset}
    if max(labels) >= model.config.num_styles:
        raise ConfigError(
            f"dataset uses style label {max(labels)}, model has {model.config.num_styles} styles"
        )
    if holdout_ids:
        held = frozenset(holdout_ids)
        leaked = [s.source_id for s in dataset if s.source_id in held]
        if leaked:
            raise ConfigError(f"training set contains {len(leaked)} held-out sample(s), e.g. {leaked[0]!r}")


def _run(config: TrainConfig, dataset, model: Model, optimizer: Adam, start_epoch: int, checkpoint_dir, log_path):
    x_all, labels_all, desc_all = as_arrays(dataset)
    latent = model.config.style_latent_dim
    log = TrainLog()
    log_fh = open(log_path, "a") if log_path else None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
    try:
        for epoch in range(start_epoch, config.epochs):
            tic = time.perf_counter()
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch]))
            order = rng.permutation(len(dataset))
            lr = config.learning_rate * lr_multiplier(
                epoch, config.lr_start_factor, config.lr_end_factor, config.lr_ramp_epochs
            )
            sums: dict[str, float] = {}
            seen = 0
            for step, lo in enumerate(range(0, order.size, config.batch_size)):
                idx = order[lo : lo + config.batch_size]
                eps = rng.standard_normal((idx.size, latent))
                for p in model.params.values():
                    p.zero_grad()
                total, parts = model.loss(
                    x_all[idx], labels_all[idx], desc_all[idx], eps, config.weights, epoch, training=True
                )
                if not np.isfinite(parts["total"]):
                    _snapshot_divergence(checkpoint_dir, x_all[idx], labels_all[idx], desc_all[idx], eps)
                    err = TrainingDivergedError(
                        f"non-finite loss {parts['total']} at epoch {epoch}, step {step}"
                    )
                    err.epoch = epoch
                    err.step = step
                    err.batch_indices = idx.copy()
                    raise err
                total.backward()
                optimizer.step(lr)
                for key, value in parts.items():
                    sums[key] = sums.get(key, 0.0) + value * idx.size
                seen += idx.size
            means = {key: value / seen for key, value in sums.items()}
            record = EpochRecord(
                epoch=epoch,
                total=means["total"],
                spectral=means["spectral"],
                divergence=means["divergence"],
                waveform=means["waveform"],
                waveform_weight=means["waveform_weight"],
                lr=lr,
                wall_time=time.perf_counter() - tic,
                descriptor=means.get("descriptor"),
            )
            log.append(record)
            if log_fh:
                log_fh.write(json.dumps(record.as_dict()) + "\n")
                log_fh.flush()
            completed = epoch + 1
            periodic = config.checkpoint_every and completed % config.checkpoint_every == 0
            if checkpoint_dir and periodic and completed < config.epochs:
                _write_checkpoint(model, optimizer, config, completed, os.path.join(checkpoint_dir, f"epoch-{completed:05d}.wsck"))
        if checkpoint_dir:
            _write_checkpoint(model, optimizer, config, config.epochs, os.path.join(checkpoint_dir, "final.wsck"))
    finally:
        if log_fh:
            log_fh.close()
    return model, log


def _write_checkpoint(model: Model, optimizer: Adam, config: TrainConfig, completed: int, path):
    meta = {
        "epoch": completed,
        "optimizer_steps": optimizer.step_count,
        "seed": config.seed,
        "train_config": config.as_dict(),
    }
    save_checkpoint(model, path, meta=meta, extras=optimizer.state_arrays())


def _snapshot_divergence(checkpoint_dir, x, labels, descriptors, eps):
    if not checkpoint_dir:
        return
    os.makedirs(checkpoint_dir, exist_ok=True)
    np.savez(
        os.path.join(checkpoint_dir, "diverged-batch.npz"),
        x=x, labels=labels, descriptors=descriptors, eps=eps,
    )

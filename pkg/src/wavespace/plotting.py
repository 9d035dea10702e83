"""Figure rendering for reports: reconstructions, latents, tables, curves.

Every function draws one figure and saves it to a file, returning the
path. The Agg backend is forced so report generation works headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError


def _style_name(style_names, label):
    if style_names is not None and 0 <= label < len(style_names):
        return style_names[label]
    return f"style{label}"


def plot_reconstructions(x, x_hat, path, labels=None, style_names=None, max_panels=8):
    """Overlay originals and reconstructions, one panel per sample."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape or x.ndim != 2:
        raise ConfigError(f"need matching 2-D sample blocks, got {x.shape} and {x_hat.shape}")
    count = min(x.shape[0], max_panels)
    if count < 1:
        raise ConfigError("nothing to plot")
    cols = min(count, 4)
    rows = int(np.ceil(count / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.2 * rows), squeeze=False)
    for k in range(rows * cols):
        ax = axes[k // cols][k % cols]
        if k >= count:
            ax.axis("off")
            continue
        ax.plot(x[k], lw=0.8, color="0.3", label="input")
        ax.plot(x_hat[k], lw=0.8, color="tab:red", label="decoded")
        title = _style_name(style_names, int(labels[k])) if labels is not None else f"sample {k}"
        ax.set_title(title, fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    axes[0][0].legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_latent_subspaces(mu, labels, priors, path, style_names=None):
    """Scatter each 2-D subspace, colored by label, with prior means marked."""
    mu = np.asarray(mu, dtype=np.float64)
    labels = np.asarray(labels)
    if mu.ndim != 2 or mu.shape[0] != labels.size:
        raise ConfigError(f"latent block {mu.shape} does not match {labels.size} labels")
    dim = priors.subspace_dim
    n_sub = priors.num_subspaces
    if mu.shape[1] != n_sub * dim:
        raise ConfigError(f"latent width {mu.shape[1]} does not match {n_sub} x {dim} subspaces")
    cols = min(n_sub, 4)
    rows = int(np.ceil(n_sub / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(3.0 * cols, 3.0 * rows), squeeze=False)
    cmap = plt.get_cmap("tab10")
    for s in range(rows * cols):
        ax = axes[s // cols][s % cols]
        if s >= n_sub:
            ax.axis("off")
            continue
        u, v = mu[:, 2 * s], mu[:, 2 * s + 1]
        for label in np.unique(labels):
            mask = labels == label
            ax.scatter(u[mask], v[mask], s=6, alpha=0.6, color=cmap(int(label) % 10),
                       label=_style_name(style_names, int(label)))
        ax.scatter(*priors.off_means[s], marker="o", s=90, facecolors="none", edgecolors="k")
        ax.scatter(*priors.on_means[s], marker="x", s=90, color="k")
        ax.set_title(f"subspace {s} ({_style_name(style_names, s)})", fontsize=9)
        ax.set_aspect("equal", adjustable="datalim")
    axes[0][0].legend(fontsize=7, markerscale=1.5)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_wavetable(table, path, title=None):
    """Waterfall view: each row offset vertically, first row at the bottom."""
    data = np.asarray(table.as_array() if hasattr(table, "as_array") else table, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ConfigError(f"need a 2-D wavetable, got shape {data.shape}")
    spread = 2.5 * np.max(np.abs(data))
    fig, ax = plt.subplots(figsize=(6.0, 1.0 + 0.45 * data.shape[0]))
    for i, row in enumerate(data):
        ax.plot(row + i * spread, lw=0.8, color=plt.get_cmap("viridis")(i / max(data.shape[0] - 1, 1)))
    ax.set_yticks([i * spread for i in range(data.shape[0])])
    ax.set_yticklabels([str(i) for i in range(data.shape[0])], fontsize=7)
    ax.set_xlabel("sample")
    ax.set_ylabel("row")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(log, path):
    """Loss parts on a log axis plus the waveform-weight schedule."""
    records = log.numeric_records() if hasattr(log, "numeric_records") else list(log)
    if not records:
        raise ConfigError("empty training log")
    epochs = [r["epoch"] for r in records]
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    for key in ("total", "spectral", "divergence", "waveform", "descriptor"):
        if key in records[0]:
            ax.semilogy(epochs, [r[key] for r in records], lw=1.0, label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax2.plot(epochs, [r["waveform_weight"] for r in records], lw=1.0, color="tab:green", label="waveform weight")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("waveform weight", color="tab:green")
    ax3 = ax2.twinx()
    ax3.plot(epochs, [r["lr"] for r in records], lw=1.0, color="tab:blue", label="lr")
    ax3.set_ylabel("learning rate", color="tab:blue")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_descriptor_profile(values, path, names=None):
    """Bar chart of per-descriptor reconstruction error."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if names is None:
        names = [f"d{i}" for i in range(values.size)]
    if len(names) != values.size:
        raise ConfigError(f"{len(names)} names for {values.size} values")
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.bar(range(values.size), values, color="tab:blue")
    ax.set_xticks(range(values.size))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("MAE")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

"""Wavetable generation from a factorized latent space.

Library layout:

- ``wavetable``   single-cycle waveform containers, table read math, preprocessing
- ``descriptors`` timbral/morphological descriptor extraction
- ``autodiff``    minimal reverse-mode tensor engine used by the model
- ``model``       encoder/decoder, per-style subspace priors, loss, checkpoints
- ``dataset``     synthetic corpus generator, WaveEdit ingestion, k-fold splits
- ``training``    optimization loop with schedules and resumable checkpoints
- ``evaluation``  reconstruction metrics, disentanglement, sweeps, benchmarks
- ``service``     rate-capped decode worker, lock-free snapshots, wire protocol
"""

__version__ = "0.1.0"

from .descriptors import DescriptorVector, compress, extract, symmetry_error
from .wavetable import PhaseState, Waveform, Wavetable, postprocess, preprocess, read, render

__all__ = [
    "DescriptorVector",
    "PhaseState",
    "Waveform",
    "Wavetable",
    "compress",
    "extract",
    "postprocess",
    "preprocess",
    "read",
    "render",
    "symmetry_error",
    "__version__",
]

"""Model contracts: priors, loss assembly, budgets, checkpoints."""

import math
import struct

import numpy as np
import pytest

from wavespace import autodiff as ad
from wavespace import model as M
from wavespace.descriptors import extract_batch
from wavespace.errors import (
    CheckpointFormatError,
    CheckpointNameError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    RangeError,
    ShapeError,
)
from wavespace.wavetable import Waveform


def unit_waveforms(rng, batch, n=1024):
    x = rng.normal(size=(batch, n))
    x = x - x.mean(axis=1, keepdims=True)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def tiny_config():
    return M.ArchitectureConfig(
        input_length=64,
        num_styles=2,
        encoder_channels=(2, 2, 2, 2, 2, 2),
        decoder_seed_channels=2,
        decoder_channels=(2, 2, 2, 2, 2, 2),
        variant="tiny",
    )


# ---------------------------------------------------------------------------
# configuration and budgets


def test_config_validation():
    with pytest.raises(ConfigError):
        M.ArchitectureConfig(encoder_channels=(8, 16))
    with pytest.raises(ConfigError):
        M.ArchitectureConfig(input_length=1000)
    with pytest.raises(ConfigError):
        M.ArchitectureConfig(num_styles=0)


def test_style_latent_dim():
    assert M.small_config(4).style_latent_dim == 8
    assert M.small_config(1).style_latent_dim == 2


def test_small_parameter_budget():
    count = M.Model(M.small_config(4)).parameter_count()
    assert 78_000 <= count <= 144_000


def test_base_parameter_budget():
    count = M.Model(M.base_config(4)).parameter_count()
    assert 1_200_000 <= count <= 2_200_000


def test_model_rejects_mismatched_priors():
    with pytest.raises(ConfigError):
        M.Model(M.small_config(4), priors=M.SubspacePriorTable.default(3))
    with pytest.raises(ConfigError):
        M.Model(M.small_config(2), style_names=("a", "b", "c"))


# ---------------------------------------------------------------------------
# prior table


def test_select_prior_two_styles():
    table = M.SubspacePriorTable.default(2)
    mean, var = M.select_prior(table, 0)
    assert np.array_equal(mean, [5.0, 5.0, 0.0, 0.0])
    assert np.array_equal(var, [1.0, 1.0, 1.0, 1.0])
    mean, var = M.select_prior(table, 1)
    assert np.array_equal(mean, [0.0, 0.0, 5.0, 5.0])


def test_select_prior_single_style():
    mean, _ = M.select_prior(M.SubspacePriorTable.default(1), 0)
    assert np.array_equal(mean, [5.0, 5.0])


def test_select_prior_differs_in_exactly_one_subspace():
    table = M.SubspacePriorTable.default(4)
    baseline = np.tile(table.off_means[0], 4)
    for i in range(4):
        mean, _ = M.select_prior(table, i)
        changed = [
            not np.array_equal(mean[2 * j : 2 * j + 2], baseline[2 * j : 2 * j + 2]) for j in range(4)
        ]
        assert changed == [j == i for j in range(4)]


def test_select_prior_bad_index():
    table = M.SubspacePriorTable.default(2)
    for i in (-1, 2, 7):
        with pytest.raises(RangeError):
            M.select_prior(table, i)


def test_prior_table_validation():
    with pytest.raises(ShapeError):
        M.SubspacePriorTable(np.zeros((2, 2)), np.zeros((3, 2)), np.ones(2), np.ones(2))
    with pytest.raises(ShapeError):
        M.SubspacePriorTable(np.zeros((2, 2)), np.zeros((2, 2)), np.ones(3), np.ones(2))
    with pytest.raises(RangeError):
        M.SubspacePriorTable(np.zeros((2, 2)), np.zeros((2, 2)), np.ones(2), np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# forward passes


def test_encode_output_dims_and_determinism():
    rng = np.random.default_rng(0)
    m = M.Model(M.small_config(4), init_seed=1)
    w = Waveform(unit_waveforms(rng, 1)[0])
    mu1, logvar1 = m.encode(w)
    mu2, logvar2 = m.encode(w)
    assert mu1.shape == (8,) and logvar1.shape == (8,)
    assert np.array_equal(mu1, mu2) and np.array_equal(logvar1, logvar2)


def test_encode_rejects_wrong_length():
    m = M.Model(tiny_config())
    with pytest.raises(ShapeError):
        m.encode(np.zeros(65))
    with pytest.raises(ShapeError):
        m.encode_batch(np.zeros((2, 63)))


def test_decode_output_contract():
    rng = np.random.default_rng(1)
    m = M.Model(M.small_config(4), init_seed=2)
    coords = rng.normal(size=8)
    d = extract_batch(unit_waveforms(rng, 1))[0]
    out1 = m.decode(coords, d)
    out2 = m.decode(coords, d)
    assert out1.length == 1024
    assert out1 == out2
    assert abs(float(out1.samples.sum())) <= 1e-6 * 1024
    assert float(out1.samples @ out1.samples) == pytest.approx(1.0, abs=1e-6)


def test_decode_rejects_bad_dims():
    m = M.Model(tiny_config())
    with pytest.raises(ShapeError):
        m.decode(np.zeros(3), np.zeros(5))
    with pytest.raises(ShapeError):
        m.decode(np.zeros(4), np.zeros(4))
    with pytest.raises(ShapeError):
        m.decode_batch(np.zeros((1, 8)))


def test_param_point_round_trip():
    d = extract_batch(unit_waveforms(np.random.default_rng(3), 1))[0]
    from wavespace.descriptors import DescriptorVector

    p = M.ParamPoint(np.arange(4.0), DescriptorVector.from_array(d))
    flat = p.as_array()
    assert flat.shape == (9,)
    assert np.array_equal(flat[:4], np.arange(4.0))


# ---------------------------------------------------------------------------
# schedules and loss


def test_waveform_weight_schedule_values():
    assert M.waveform_weight_schedule(0) == pytest.approx(87.57)
    epoch = math.log(20.0) / 0.144
    assert M.waveform_weight_schedule(epoch) == pytest.approx(2 * 4.170)
    assert M.waveform_weight_schedule(10_000) == pytest.approx(4.170)
    with pytest.raises(RangeError):
        M.waveform_weight_schedule(-1)


def test_waveform_weight_schedule_monotone():
    epochs = np.linspace(0, 400, 500)
    values = [M.waveform_weight_schedule(e) for e in epochs]
    # strictly falling until the exponential term drowns in float rounding
    assert all(a >= b for a, b in zip(values, values[1:]))
    early = [M.waveform_weight_schedule(e) for e in range(100)]
    assert all(a > b for a, b in zip(early, early[1:]))


def test_assemble_loss_perfect_reconstruction_is_zero():
    rng = np.random.default_rng(4)
    x = unit_waveforms(rng, 3, 64)
    prior_mean = np.tile(np.array([5.0, 5.0, 0.0, 0.0]), (3, 1))
    prior_var = np.ones((3, 4))
    total, parts = M.assemble_loss(
        x,
        ad.Tensor(x),
        ad.Tensor(prior_mean),
        ad.Tensor(np.zeros((3, 4))),
        prior_mean,
        prior_var,
        M.LossWeights(),
        epoch=0,
    )
    assert total.item() == 0.0
    assert parts["spectral"] == 0.0 and parts["divergence"] == 0.0 and parts["waveform"] == 0.0


def test_loss_parts_match_numpy_closed_forms():
    rng = np.random.default_rng(5)
    x = unit_waveforms(rng, 4, 64)
    x_hat = unit_waveforms(rng, 4, 64)
    mu = rng.normal(size=(4, 4))
    logvar = rng.normal(size=(4, 4)) * 0.3
    prior_mean = rng.normal(size=(4, 4))
    prior_var = rng.uniform(0.5, 2.0, size=(4, 4))
    weights = M.LossWeights()
    total, parts = M.assemble_loss(
        x, ad.Tensor(x_hat), ad.Tensor(mu), ad.Tensor(logvar), prior_mean, prior_var, weights, epoch=7
    )

    mag_x = np.abs(np.fft.rfft(x, axis=1))
    mag_h = np.abs(np.fft.rfft(x_hat, axis=1))
    spectral = np.mean((mag_h - mag_x) ** 2)
    waveform = np.mean(np.abs(x_hat - x))
    kl = 0.5 * (
        np.log(prior_var) - logvar + (np.exp(logvar) + (mu - prior_mean) ** 2) / prior_var - 1.0
    )
    divergence = kl.sum(axis=1).mean()
    assert parts["spectral"] == pytest.approx(spectral, rel=1e-9)
    assert parts["waveform"] == pytest.approx(waveform, rel=1e-9)
    assert parts["divergence"] == pytest.approx(divergence, rel=1e-9)
    expect = (
        weights.spectral * spectral
        + weights.divergence * divergence
        + M.waveform_weight_schedule(7) * waveform
    )
    assert total.item() == pytest.approx(expect, rel=1e-9)


def test_kl_closed_form_vs_monte_carlo():
    rng = np.random.default_rng(6)
    mu_q = rng.normal(size=4) * 2.0
    logvar_q = rng.normal(size=4) * 0.4
    mu_p = rng.normal(size=4) * 2.0
    var_p = rng.uniform(0.5, 2.0, size=4)
    closed = ad.kl_diag_gaussian(
        ad.Tensor(mu_q[np.newaxis, :]), ad.Tensor(logvar_q[np.newaxis, :]), mu_p, var_p
    ).item()

    n = 100_000
    std_q = np.exp(0.5 * logvar_q)
    z = mu_q + std_q * rng.standard_normal((n, 4))
    log_q = -0.5 * (((z - mu_q) / std_q) ** 2 + logvar_q + math.log(2 * math.pi)).sum(axis=1)
    log_p = -0.5 * (((z - mu_p) ** 2 / var_p) + np.log(var_p) + math.log(2 * math.pi)).sum(axis=1)
    mc = float(np.mean(log_q - log_p))
    assert closed == pytest.approx(mc, rel=0.01)


def test_loss_rejects_unknown_style_label():
    rng = np.random.default_rng(7)
    m = M.Model(tiny_config())
    x = unit_waveforms(rng, 2, 64)
    d = extract_batch(x)
    eps = np.zeros((2, 4))
    with pytest.raises(RangeError):
        m.loss(x, [0, 5], d, eps, M.LossWeights(), epoch=0)


def test_full_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    m = M.Model(tiny_config(), init_seed=3, dtype=np.float64)
    x = unit_waveforms(rng, 2, 64)
    labels = np.array([0, 1])
    d = extract_batch(x)
    eps = rng.normal(size=(2, 4))
    weights = M.LossWeights()

    def loss_value():
        total, _ = m.loss(x, labels, d, eps, weights, epoch=2)
        return float(total.values)

    total, _ = m.loss(x, labels, d, eps, weights, epoch=2)
    total.backward()
    step = 1e-5
    for name in ("enc0.w", "enc_out.w", "dec_seed.w", "dec3.res1.w", "dec_out.b"):
        tensor = m.params[name]
        flat_grad = tensor.grad.reshape(-1)
        flat_vals = tensor.values.reshape(-1)
        for idx in rng.choice(flat_vals.size, size=min(3, flat_vals.size), replace=False):
            orig = flat_vals[idx]
            flat_vals[idx] = orig + step
            hi = loss_value()
            flat_vals[idx] = orig - step
            lo = loss_value()
            flat_vals[idx] = orig
            numeric = (hi - lo) / (2 * step)
            assert flat_grad[idx] == pytest.approx(numeric, rel=1e-3, abs=1e-7), name


# ---------------------------------------------------------------------------
# differentiable descriptors


def test_differentiable_descriptors_match_extractor():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(6, 64))
    preds = M.differentiable_descriptors(ad.Tensor(x))
    stacked = np.stack([p.values for p in preds], axis=1)
    expect = extract_batch(x, mode="normalized")
    assert np.allclose(stacked, expect, atol=1e-9)


def test_descriptor_regression_zero_at_own_descriptors():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(3, 64))
    targets = extract_batch(x)
    term = M.descriptor_regression(ad.Tensor(x), targets, (1.0, 1.0, 1.0, 1.0, 1.0))
    assert term.item() == pytest.approx(0.0, abs=1e-9)


def test_descriptor_regression_weight_count():
    with pytest.raises(ConfigError):
        M.descriptor_regression(ad.Tensor(np.zeros((1, 64))), np.zeros((1, 5)), (1.0, 2.0))


def test_descriptor_regression_symmetry_wraps():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 64))
    targets = extract_batch(x)
    # shift the symmetry target by a full turn; wrap makes the term ignore it
    shifted = targets.copy()
    shifted[:, 4] += 2 * math.pi
    term = M.descriptor_regression(ad.Tensor(x), shifted, (0.0, 0.0, 0.0, 0.0, 1.0))
    assert term.item() == pytest.approx(0.0, abs=1e-9)


# ---------------------------------------------------------------------------
# checkpoints


def _trained_like_model():
    rng = np.random.default_rng(12)
    m = M.Model(tiny_config(), init_seed=4)
    x = unit_waveforms(rng, 4, 64).astype(np.float32)
    m.encode_batch(x, training=True)  # move the running stats off their init
    m.extras = {"descriptor_medians": [0.5, 0.4, 0.3, 0.2, 0.1]}
    return m


def test_checkpoint_round_trip_bit_exact(tmp_path):
    m = _trained_like_model()
    path = tmp_path / "model.ckpt"
    M.save_checkpoint(m, path, meta={"epoch": 17}, extras={"opt.m": np.arange(6.0, dtype=np.float32)})
    ck = M.load_checkpoint(path)
    assert ck.meta == {"epoch": 17}
    assert np.array_equal(ck.extras["opt.m"], np.arange(6.0, dtype=np.float32))
    assert ck.model.style_names == m.style_names
    assert ck.model.extras == m.extras
    for name in m.tensor_names():
        assert np.array_equal(ck.model._get_tensor(name), m._get_tensor(name)), name
    assert np.array_equal(ck.model.priors.on_means, m.priors.on_means)


def test_checkpoint_save_load_twice_identical_bytes(tmp_path):
    m = _trained_like_model()
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    M.save_checkpoint(m, p1)
    M.save_checkpoint(M.load_checkpoint(p1).model, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_wrong_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    m = _trained_like_model()
    M.save_checkpoint(m, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointFormatError):
        M.load_checkpoint(path)


def test_checkpoint_wrong_version(tmp_path):
    path = tmp_path / "bad.ckpt"
    M.save_checkpoint(_trained_like_model(), path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointVersionError):
        M.load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "bad.ckpt"
    M.save_checkpoint(_trained_like_model(), path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 40])
    with pytest.raises(CheckpointTruncatedError):
        M.load_checkpoint(path)


def test_checkpoint_name_mismatch(tmp_path):
    path = tmp_path / "bad.ckpt"
    M.save_checkpoint(_trained_like_model(), path)
    blob = path.read_bytes()
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    header = blob[16 : 16 + header_len].decode("utf-8")
    # corrupt a tensor name without changing the header byte length
    assert "enc0.w" in header
    tampered = header.replace('"enc0.w"', '"enc0.X"', 1).encode("utf-8")
    path.write_bytes(blob[:16] + tampered + blob[16 + header_len :])
    with pytest.raises(CheckpointNameError):
        M.load_checkpoint(path)


def test_checkpoint_header_reports_live_parameter_count(tmp_path):
    m = M.Model(M.small_config(4))
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(m, path)
    import json

    blob = path.read_bytes()
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    header = json.loads(blob[16 : 16 + header_len])
    assert header["parameter_count"] == m.parameter_count()

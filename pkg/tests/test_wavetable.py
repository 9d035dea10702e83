import numpy as np
import pytest

from wavespace.errors import DegenerateInputError, RangeError
from wavespace.wavetable import (
    PhaseState,
    Waveform,
    Wavetable,
    advance_phase,
    phase_indices,
    postprocess,
    preprocess,
    read,
    read_block,
    render,
)


def unit_cosine(n, bin_index=1, phase=0.0):
    t = np.arange(n)
    x = np.cos(2 * np.pi * bin_index * t / n + phase)
    return x / np.linalg.norm(x)


class TestRead:
    TABLE = [[0.0, 1.0], [2.0, 3.0]]

    def test_integer_index_identity(self):
        assert read(self.TABLE, 0, 0) == 0.0

    def test_bilinear_midpoint(self):
        assert read(self.TABLE, 0.5, 0.5) == pytest.approx(1.5, abs=1e-12)

    def test_column_wraps(self):
        # j=1.5 interpolates between column 1 and column 0 of the last row
        assert read(self.TABLE, 1, 1.5) == pytest.approx(2.5, abs=1e-12)

    def test_row_out_of_range(self):
        with pytest.raises(RangeError):
            read(self.TABLE, 1.01, 0)
        with pytest.raises(RangeError):
            read(self.TABLE, -0.01, 0)

    def test_integer_exactness_exhaustive(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m, n = rng.integers(1, 6), rng.integers(2, 9)
            data = rng.normal(size=(m, n))
            for i in range(m):
                for j in range(n):
                    assert read(data, float(i), float(j)) == data[i, j]

    def test_monotone_between_lattice_points(self):
        # corners increase along each axis -> interpolant increases too
        data = np.array([[0.0, 1.0, 4.0], [2.0, 3.0, 6.0]])
        cols = np.linspace(0.0, 1.0, 33)
        vals = read_block(data, np.zeros_like(cols), cols)
        assert np.all(np.diff(vals) > 0)
        rows = np.linspace(0.0, 1.0, 33)
        vals = read_block(data, rows, np.zeros_like(rows))
        assert np.all(np.diff(vals) > 0)

    def test_block_matches_scalar(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(4, 16))
        ri = rng.uniform(0, 3, size=64)
        ci = rng.uniform(0, 16, size=64)
        block = read_block(data, ri, ci)
        scalar = [read(data, r, c) for r, c in zip(ri, ci)]
        assert np.allclose(block, scalar, atol=1e-12)


class TestAdvancePhase:
    def test_unit_increment(self):
        state = PhaseState(table_length=4, sample_rate=8)
        emitted = [advance_phase(state, 2.0) for _ in range(6)]
        assert emitted == [0.0, 1.0, 2.0, 3.0, 0.0, 1.0]

    def test_zero_frequency_freezes(self):
        state = PhaseState(table_length=4, sample_rate=8)
        assert [advance_phase(state, 0.0) for _ in range(3)] == [0.0, 0.0, 0.0]

    def test_increment_magnitude(self):
        state = PhaseState(table_length=1024, sample_rate=48000)
        advance_phase(state, 440.0)
        assert state.accumulator == pytest.approx(1024 * 440 / 48000, abs=1e-9)

    def test_negative_f0_rejected(self):
        state = PhaseState(table_length=4, sample_rate=8)
        with pytest.raises(RangeError):
            advance_phase(state, -1.0)
        with pytest.raises(RangeError):
            advance_phase(state, 4.0)  # >= fs/2

    def test_accumulation_matches_closed_form_1e6(self):
        n, fs, f0 = 1024, 48000.0, 440.0
        state = PhaseState(table_length=n, sample_rate=fs)
        steps = 1_000_000
        phase_indices(state, np.full(steps, f0))
        expected = (steps * n * f0 / fs) % n
        assert abs(state.accumulator - expected) < 1e-6

    def test_block_equals_scalar_path(self):
        n, fs = 1024, 48000.0
        rng = np.random.default_rng(5)
        f0s = rng.uniform(0, 2000, size=500)
        s1 = PhaseState(table_length=n, sample_rate=fs)
        s2 = PhaseState(table_length=n, sample_rate=fs)
        block = phase_indices(s1, f0s)
        scalar = np.array([advance_phase(s2, f) for f in f0s])
        assert np.allclose(block, scalar, atol=1e-9)
        assert abs(s1.accumulator - s2.accumulator) < 1e-9


class TestRender:
    def test_identity_read_through(self):
        n, fs = 64, 64.0 * 100
        row = unit_cosine(n)
        table = Wavetable(rows=(Waveform(row),))
        out = render(table, 0.0, fs / n, fs, 3 * n)
        assert np.allclose(out, np.tile(row, 3), atol=1e-9)

    def test_two_row_morph(self):
        a = unit_cosine(8)
        b = unit_cosine(8, phase=np.pi)  # = -a
        table = Wavetable(rows=(Waveform(a), Waveform(b)))
        ramp = np.linspace(0.0, 1.0, 16)
        out = render(table, ramp, 0.0, 48000.0, 16)
        expected = (1 - ramp) * a[0] + ramp * b[0]  # frozen phase at column 0
        assert np.allclose(out, expected, atol=1e-12)

    def test_empty_block(self):
        table = Wavetable(rows=(Waveform(unit_cosine(8)),))
        assert render(table, 0.0, 440.0, 48000.0, 0).size == 0

    def test_deterministic(self):
        table = Wavetable(rows=(Waveform(unit_cosine(32)),))
        a = render(table, 0.0, 440.0, 48000.0, 256)
        b = render(table, 0.0, 440.0, 48000.0, 256)
        assert np.array_equal(a, b)


class TestPreprocess:
    def test_cosine_resample_exact(self):
        raw = np.cos(2 * np.pi * np.arange(2048) / 2048)
        wf = preprocess(raw, 1024)
        assert wf.length == 1024
        assert np.allclose(wf.samples, unit_cosine(1024), atol=1e-9)
        assert abs(wf.samples.sum()) < 1e-9
        assert np.dot(wf.samples, wf.samples) == pytest.approx(1.0, abs=1e-12)

    def test_constant_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            preprocess(np.full(256, 0.7), 1024)

    def test_short_frame_upsamples(self):
        rng = np.random.default_rng(9)
        raw = rng.normal(size=256)
        wf = preprocess(raw, 1024)
        assert wf.length == 1024

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        raw = rng.normal(size=300)
        once = preprocess(raw, 1024)
        twice = preprocess(once.samples, 1024)
        assert np.allclose(once.samples, twice.samples, atol=1e-6)

    def test_harmonics_below_nyquist_preserved(self):
        n_src, n_dst = 2048, 1024
        t = np.arange(n_src)
        amp = {1: 1.0, 3: 0.5, 7: 0.25, 100: 0.1}
        raw = sum(a * np.cos(2 * np.pi * h * t / n_src) for h, a in amp.items())
        wf = preprocess(raw, n_dst)
        spec_in = np.abs(np.fft.rfft(raw / np.linalg.norm(raw)))
        spec_out = np.abs(np.fft.rfft(wf.samples))
        for h in amp:
            # same relative amplitude once both are unit energy
            assert spec_out[h] / np.linalg.norm(spec_out) == pytest.approx(
                spec_in[h] / np.linalg.norm(spec_in[: n_dst // 2 + 1]), abs=1e-6
            )


class TestPostprocess:
    def test_constant_rejected(self):
        with pytest.raises(DegenerateInputError):
            postprocess(np.array([1.0, 1.0, 1.0, 1.0]))

    def test_scale_only_case(self):
        wf = postprocess(np.array([2.0, 0.0, -2.0, 0.0]))
        c = 1 / np.sqrt(2)
        assert np.allclose(wf.samples, [c, 0.0, -c, 0.0], atol=1e-12)

    def test_dc_eliminated(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=128) + 0.3
        wf = postprocess(x)
        assert abs(wf.samples.mean()) < 1e-9


class TestContainers:
    def test_waveform_invariants_enforced(self):
        with pytest.raises(ValueError):
            Waveform(np.array([1.0, 1.0]))  # DC
        with pytest.raises(ValueError):
            Waveform(np.array([1.0, -1.0]))  # energy 2

    def test_waveform_immutable(self):
        wf = Waveform(unit_cosine(16))
        with pytest.raises(ValueError):
            wf.samples[0] = 5.0

    def test_wavetable_rejects_mixed_lengths(self):
        with pytest.raises(ValueError):
            Wavetable(rows=(Waveform(unit_cosine(8)), Waveform(unit_cosine(16))))

    def test_wavetable_rejects_empty(self):
        with pytest.raises(ValueError):
            Wavetable(rows=())

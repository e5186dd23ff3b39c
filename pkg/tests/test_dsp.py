import numpy as np
import pytest

from promptsep.core.audio import AudioBuffer
from promptsep.core.dsp import (
    REFERENCE_BAND_WIDTHS,
    BandSplitSpec,
    Spectrogram,
    StftConfig,
    band_partition,
    istft,
    resample,
    stft,
)
from promptsep.core.errors import SignalError

SHORT = StftConfig(window_length=512, hop_length=128, fft_length=512)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


class TestStft:
    def test_zero_input(self):
        spec = stft(AudioBuffer.zeros(48000, 48000), SHORT)
        assert spec.num_bins == 257
        assert spec.num_frames == 1 + 48000 // 128
        assert not spec.real.any() and not spec.imag.any()

    def test_sine_peak_bin(self):
        t = np.arange(48000) / 48000
        spec = stft(AudioBuffer(np.sin(2 * np.pi * 1000 * t), 48000), SHORT)
        peaks = spec.magnitude()[4:-4].argmax(axis=1)
        assert set(peaks.tolist()) == {round(1000 * 512 / 48000)}

    def test_impulse_round_trip(self):
        x = np.zeros(4800)
        x[1000] = 1.0
        y = istft(stft(AudioBuffer(x, 48000), SHORT), len(x))
        assert np.max(np.abs(y.samples - x)) < 1e-6

    def test_random_round_trips(self, rng):
        config = StftConfig()
        for _ in range(100):
            num_samples = int(rng.integers(48000, 6 * 48000 + 1))
            x = rng.standard_normal(num_samples)
            y = istft(stft(AudioBuffer(x, 48000), config), num_samples)
            assert relative_error(y.samples, x) < 1e-6

    def test_length_contract(self, rng):
        x = AudioBuffer(rng.standard_normal(6 * 48000), 48000)
        assert len(istft(stft(x, StftConfig()), len(x))) == 288000

    def test_zero_spectrogram(self):
        spec = Spectrogram(np.zeros((11, 257)), np.zeros((11, 257)), SHORT, 48000)
        y = istft(spec, 1280)
        assert len(y) == 1280 and not y.samples.any()

    def test_linearity(self, rng):
        x, y = rng.standard_normal(4000), rng.standard_normal(4000)
        combined = stft(AudioBuffer(2.0 * x - 0.5 * y, 16000), SHORT).complex()
        separate = (
            2.0 * stft(AudioBuffer(x, 16000), SHORT).complex()
            - 0.5 * stft(AudioBuffer(y, 16000), SHORT).complex()
        )
        assert np.linalg.norm(combined - separate) / np.linalg.norm(combined) < 1e-6

    def test_frame_energy(self, rng):
        x = rng.standard_normal(4096)
        spec = stft(AudioBuffer(x, 16000), SHORT)
        n = SHORT.fft_length
        padded = np.pad(x, n // 2)
        frame = 10
        windowed = padded[frame * SHORT.hop_length : frame * SHORT.hop_length + n] * SHORT.window()
        power = spec.magnitude()[frame] ** 2
        one_sided = power[0] + power[-1] + 2 * power[1:-1].sum()
        assert one_sided / n == pytest.approx(np.sum(windowed**2), rel=1e-5)

    def test_empty(self):
        with pytest.raises(SignalError, match="empty signal"):
            stft(AudioBuffer.zeros(0, 16000), SHORT)

    def test_overlap_add_violation(self):
        config = StftConfig(window_length=16, hop_length=16, fft_length=16, window_kind="hann")
        spec = Spectrogram(np.zeros((3, 9)), np.zeros((3, 9)), config, 8000)
        with pytest.raises(SignalError, match="overlap-add"):
            istft(spec, 32)

    def test_target_length_too_far(self):
        spec = Spectrogram(np.zeros((11, 257)), np.zeros((11, 257)), SHORT, 48000)
        with pytest.raises(SignalError, match="more than one window"):
            istft(spec, 5000)

    def test_config_ordering(self):
        with pytest.raises(SignalError, match="hop_length <= window_length"):
            StftConfig(window_length=256, hop_length=512, fft_length=512)

    def test_for_rate(self):
        assert StftConfig.for_rate(48000) == StftConfig()
        config = StftConfig.for_rate(16000)
        assert config.window_length == 512 and config.hop_length == 160
        assert config.satisfies_overlap_add()


class TestResample:
    def test_identity(self, rng):
        x = AudioBuffer(rng.standard_normal(1000), 16000)
        np.testing.assert_array_equal(resample(x, 16000).samples, x.samples)

    @pytest.mark.parametrize(
        "source, target, num_samples, expected",
        [(48000, 16000, 48000, 16000), (44100, 48000, 1000, 1088), (16000, 48000, 7, 21)],
    )
    def test_length(self, source, target, num_samples, expected):
        out = resample(AudioBuffer.zeros(num_samples, source), target)
        assert len(out) == expected and out.sample_rate_hz == target

    def test_tone_survives_round_trip(self):
        t = np.arange(48000) / 48000
        x = np.sin(2 * np.pi * 2000 * t)
        y = resample(resample(AudioBuffer(x, 48000), 16000), 48000).samples
        assert np.corrcoef(x, y)[0, 1] > 0.99

    def test_bad_rate(self):
        with pytest.raises(SignalError):
            resample(AudioBuffer.zeros(10, 8000), 0)


class TestBands:
    def test_partition(self, rng):
        config = StftConfig(window_length=12, hop_length=3, fft_length=12)
        spec = Spectrogram(rng.standard_normal((4, 7)), rng.standard_normal((4, 7)), config, 8000)
        parts = band_partition(spec, BandSplitSpec((2, 2, 3)))
        assert [p.shape for p in parts] == [(4, 2, 2), (4, 2, 2), (4, 3, 2)]
        np.testing.assert_array_equal(np.concatenate(parts, axis=1), spec.stacked())

    def test_width_mismatch(self, rng):
        config = StftConfig(window_length=12, hop_length=3, fft_length=12)
        spec = Spectrogram(np.zeros((4, 7)), np.zeros((4, 7)), config, 8000)
        with pytest.raises(SignalError, match="band widths must sum to F"):
            band_partition(spec, BandSplitSpec((4, 4)))

    def test_reference_table(self):
        bands = BandSplitSpec.default()
        assert bands.num_bands == 62
        assert bands.num_bins == StftConfig().num_bins == 1025

    def test_scaled_table(self):
        bands = BandSplitSpec.scaled(257)
        assert bands.num_bands == 62
        assert bands.num_bins == 257
        assert min(bands.band_widths) >= 1

    def test_scaled_too_few_bins(self):
        with pytest.raises(SignalError):
            BandSplitSpec.scaled(len(REFERENCE_BAND_WIDTHS) - 1)

    def test_uniform(self):
        assert BandSplitSpec.uniform(9, 2).band_widths == (4, 5)

    def test_offsets(self):
        assert BandSplitSpec((2, 2, 3)).offsets == [0, 2, 4]

    def test_invalid_width(self):
        with pytest.raises(SignalError, match=">= 1"):
            BandSplitSpec((3, 0, 4))

    def test_load(self, tmp_path):
        (tmp_path / "bands.yaml").write_text("band_widths: [4, 5]\n")
        (tmp_path / "list.yaml").write_text("- 2\n- 7\n")
        assert BandSplitSpec.load(tmp_path / "bands.yaml").band_widths == (4, 5)
        assert BandSplitSpec.load(tmp_path / "list.yaml").band_widths == (2, 7)

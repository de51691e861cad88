"""Decode, resample, framing, trimming and pause-shortening contracts."""

from __future__ import annotations

import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxcurate import dsp
from voxcurate.errors import DecodeError, UnsupportedFormatError, ValidationError

from .conftest import concat, silence, tone


def write_pcm16(path, ints, rate=16_000, channels=1):
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(struct.pack(f"<{len(ints)}h", *ints))


class TestDecode:
    def test_mono_pcm16(self, tmp_path):
        write_pcm16(tmp_path / "a.wav", [0] * 16_000, rate=16_000)
        signal = dsp.decode(tmp_path / "a.wav")
        assert len(signal.samples) == 16_000
        assert signal.sample_rate_hz == 16_000

    def test_stereo_averages_to_mono(self, tmp_path):
        left, right = 16_384, -16_384  # +-0.5 full scale
        frames = [left, right] * 800
        write_pcm16(tmp_path / "st.wav", frames, rate=16_000, channels=2)
        signal = dsp.decode(tmp_path / "st.wav")
        assert len(signal.samples) == 800
        assert np.all(signal.samples == 0.0)

    def test_int16_min_maps_to_minus_one(self, tmp_path):
        # oracle: -32768 / 32768
        write_pcm16(tmp_path / "m.wav", [-32768, 32767], rate=16_000)
        signal = dsp.decode(tmp_path / "m.wav")
        assert signal.samples[0] == -32768 / 32768
        assert signal.samples[0] == -1.0
        assert signal.samples[1] == pytest.approx(32767 / 32768)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.wav"):
            dsp.decode(tmp_path / "nope.wav")

    def test_unknown_container(self, tmp_path):
        path = tmp_path / "x.ogg"
        path.write_bytes(b"OggS....")
        with pytest.raises(UnsupportedFormatError):
            dsp.decode(path)

    def test_truncated_wav(self, tmp_path):
        path = tmp_path / "t.wav"
        write_pcm16(path, [0] * 1000, rate=16_000)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(DecodeError):
            dsp.decode(path)

    def test_unsupported_rate(self, tmp_path):
        write_pcm16(tmp_path / "r.wav", [0] * 100, rate=11_025)
        with pytest.raises(UnsupportedFormatError, match="11025"):
            dsp.decode(tmp_path / "r.wav")

    def test_encode_decode_roundtrip_exact(self, tmp_path, rng):
        ints = rng.integers(-32768, 32768, size=5_000).astype(np.int64)
        signal = dsp.Signal(samples=ints / 32768.0, sample_rate_hz=16_000)
        dsp.write_wav(tmp_path / "rt.wav", signal)
        back = dsp.decode(tmp_path / "rt.wav")
        assert np.array_equal(back.samples * 32768.0, ints.astype(np.float64))


class TestResample:
    def test_48k_length(self):
        signal = dsp.Signal(samples=np.zeros(48_000), sample_rate_hz=48_000)
        out = dsp.resample_to_16k(signal)
        assert len(out.samples) == 16_000
        assert out.sample_rate_hz == 16_000

    def test_16k_identity(self):
        signal = tone(440, 0.5)
        assert dsp.resample_to_16k(signal) is signal

    def test_32k_and_44k_lengths(self):
        for rate in (32_000, 44_100, 22_050, 8_000):
            n = rate  # one second
            out = dsp.resample_to_16k(dsp.Signal(np.zeros(n), rate))
            assert len(out.samples) == round(n * 16_000 / rate), rate

    def test_unsupported_ratio(self):
        with pytest.raises(UnsupportedFormatError):
            dsp.resample_to_16k(dsp.Signal(np.zeros(100), 12_345))

    @staticmethod
    def spectrum_peak(samples: np.ndarray, nfft: int = 4096) -> tuple[int, np.ndarray]:
        # interior window, Hann to contain leakage of non-bin-centred tones
        start = (len(samples) - nfft) // 2
        win = samples[start : start + nfft] * np.hanning(nfft)
        mag = np.abs(np.fft.rfft(win))
        return int(np.argmax(mag)), mag

    def test_tone_peak_and_alias_suppression(self):
        # 1 kHz is exactly bin 256 of a 4096-point FFT at 16 kHz
        signal = tone(1000, 2.0, rate=48_000, amplitude=0.5)
        out = dsp.resample_to_16k(signal)
        peak, mag = self.spectrum_peak(out.samples)
        expected = round(1000 * 4096 / 16_000)
        assert abs(peak - expected) <= 1
        shoulder = np.ones(len(mag), dtype=bool)
        shoulder[max(0, peak - 3) : peak + 4] = False
        worst_db = 20 * np.log10(mag[shoulder].max() / mag[peak])
        assert worst_db <= -60.0

    @settings(max_examples=20, deadline=None)
    @given(freq=st.floats(min_value=100.0, max_value=6_900.0))
    def test_tone_frequency_preserved(self, freq):
        out = dsp.resample_to_16k(tone(freq, 1.0, rate=48_000, amplitude=0.5))
        peak, _ = self.spectrum_peak(out.samples)
        assert abs(peak - freq * 4096 / 16_000) <= 1.0


class TestFrameRms:
    def test_square_wave_is_zero_dbfs(self):
        samples = np.tile([1.0, -1.0], 1600)
        stats = dsp.frame_rms_dbfs(dsp.Signal(samples, 16_000), 10.0)
        assert np.allclose(stats.rms_dbfs_per_frame, 0.0)

    def test_all_zero_frame_is_minus_inf(self):
        stats = dsp.frame_rms_dbfs(silence(0.1), 10.0)
        assert np.all(np.isneginf(stats.rms_dbfs_per_frame))

    def test_full_scale_sine(self):
        # closed form: 20*log10(1/sqrt(2)) = -3.0103 dBFS
        stats = dsp.frame_rms_dbfs(tone(1000, 1.0), 10.0)
        assert np.allclose(stats.rms_dbfs_per_frame, 20 * math.log10(1 / math.sqrt(2)), atol=0.01)

    def test_frame_count_is_floor(self):
        stats = dsp.frame_rms_dbfs(silence(0.105), 10.0)
        assert len(stats.rms_dbfs_per_frame) == 10

    def test_empty_signal(self):
        stats = dsp.frame_rms_dbfs(dsp.Signal(np.zeros(0), 16_000), 10.0)
        assert len(stats.rms_dbfs_per_frame) == 0

    def test_dbfs_never_positive(self, rng):
        samples = rng.uniform(-1, 1, 4_000)
        stats = dsp.frame_rms_dbfs(dsp.Signal(samples, 16_000), 10.0)
        assert np.all(stats.rms_dbfs_per_frame <= 0.0)

    def test_bad_frame_len(self):
        with pytest.raises(ValidationError):
            dsp.frame_rms_dbfs(silence(0.1), 0.0)


class TestTrim:
    def test_silence_tone_silence(self):
        signal = concat(silence(1.0), tone(440, 1.0), silence(1.0))
        trimmed = dsp.trim_edge_silence(signal)
        assert dsp.duration_s(trimmed) == pytest.approx(1.0, abs=0.010)

    def test_no_silent_edges_is_identity(self):
        signal = tone(440, 0.5)
        trimmed = dsp.trim_edge_silence(signal)
        assert np.array_equal(trimmed.samples, signal.samples)

    def test_all_silent_returns_empty(self):
        trimmed = dsp.trim_edge_silence(silence(0.5))
        assert len(trimmed.samples) == 0
        assert trimmed.sample_rate_hz == 16_000

    def test_threshold_boundary_frame_kept(self):
        # frame exactly at the threshold level must not be removed
        level = 10 ** (-50.0 / 20.0)
        samples = np.concatenate([np.zeros(160), np.full(160, level), np.zeros(160)])
        trimmed = dsp.trim_edge_silence(dsp.Signal(samples, 16_000), -50.0, 10.0)
        assert len(trimmed.samples) == 160

    @settings(max_examples=30, deadline=None)
    @given(data=st.data())
    def test_idempotent(self, data):
        n_frames = data.draw(st.integers(min_value=0, max_value=30))
        levels = data.draw(
            st.lists(
                st.sampled_from([0.0, 1e-4, 1e-3, 0.05, 0.5]),
                min_size=n_frames, max_size=n_frames,
            )
        )
        tail = data.draw(st.integers(min_value=0, max_value=159))
        samples = np.concatenate(
            [np.full(160, lv) for lv in levels] + [np.full(tail, 0.3)]
        ) if levels or tail else np.zeros(0)
        signal = dsp.Signal(samples, 16_000)
        once = dsp.trim_edge_silence(signal)
        twice = dsp.trim_edge_silence(once)
        assert np.array_equal(once.samples, twice.samples)

    def test_never_removes_loud_frames(self, rng):
        signal = concat(silence(0.3), tone(300, 0.7, amplitude=0.4), silence(0.2))
        trimmed = dsp.trim_edge_silence(signal)
        loud_before = np.sum(
            dsp.frame_rms_dbfs(signal, 10.0).rms_dbfs_per_frame >= -50.0
        )
        loud_after = np.sum(
            dsp.frame_rms_dbfs(trimmed, 10.0).rms_dbfs_per_frame >= -50.0
        )
        assert loud_after >= loud_before


class TestShortenPauses:
    def test_long_pause_shortened(self):
        signal = concat(tone(440, 0.5), silence(0.5), tone(440, 0.5))
        out = dsp.shorten_internal_pauses(signal, 180.0)
        assert dsp.duration_s(out) == pytest.approx(1.18, abs=0.020)

    def test_short_pause_untouched(self):
        signal = concat(tone(440, 0.5), silence(0.1), tone(440, 0.5))
        out = dsp.shorten_internal_pauses(signal, 180.0)
        assert np.array_equal(out.samples, signal.samples)

    def test_no_pause_is_identity(self):
        signal = tone(440, 1.0)
        out = dsp.shorten_internal_pauses(signal)
        assert np.array_equal(out.samples, signal.samples)

    def test_output_never_longer(self, rng):
        for gap in (0.05, 0.2, 0.4, 0.8):
            signal = concat(tone(440, 0.3), silence(gap), tone(440, 0.3))
            out = dsp.shorten_internal_pauses(signal)
            assert dsp.duration_s(out) <= dsp.duration_s(signal)
            if gap <= 0.18:
                assert dsp.duration_s(out) == dsp.duration_s(signal)

    def test_requires_16k(self):
        with pytest.raises(ValidationError):
            dsp.shorten_internal_pauses(dsp.Signal(np.zeros(48_000), 48_000))


class TestDuration:
    def test_one_second(self):
        assert dsp.duration_s(dsp.Signal(np.zeros(16_000), 16_000)) == 1.0

    def test_empty(self):
        assert dsp.duration_s(dsp.Signal(np.zeros(0), 16_000)) == 0.0

    def test_max_utterance_length(self):
        assert dsp.duration_s(dsp.Signal(np.zeros(267_200), 16_000)) == 16.7

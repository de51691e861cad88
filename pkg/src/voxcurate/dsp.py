"""Audio decoding, resampling, framing and silence handling.

All downstream measurement assumes mono float signals in [-1, 1] at 16 kHz.
WAV PCM (8/16/24/32-bit int, mono or multichannel) is the reference decode
path; mp3 works only when an optional backend (soundfile) is importable.
"""

from __future__ import annotations

import importlib
import math
import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import upfirdn

from .errors import DecodeError, UnsupportedFormatError, ValidationError

TARGET_RATE = 16_000
INGEST_RATES = frozenset({8_000, 16_000, 22_050, 32_000, 44_100, 48_000})

DEFAULT_TRIM_THRESHOLD_DBFS = -50.0
DEFAULT_TRIM_FRAME_MS = 10.0

# Energy VAD used for interior pause shortening.
VAD_FRAME_MS = 30.0
VAD_HOP_MS = 10.0
VAD_SPEECH_THRESHOLD_DBFS = -40.0


@dataclass
class Signal:
    """Mono audio: float amplitudes in [-1, 1] plus a sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Signal):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(
            self.samples, other.samples
        )


@dataclass
class FrameStats:
    """Per-frame RMS level in dBFS (-inf for all-zero frames)."""

    frame_len_ms: float
    rms_dbfs_per_frame: np.ndarray


def duration_s(signal: Signal) -> float:
    return len(signal.samples) / signal.sample_rate_hz


def decode(path: str | Path) -> Signal:
    """Decode an audio file to a mono Signal.

    Multichannel audio is averaged down to mono. Integer PCM maps to [-1, 1]
    by division by the type's max magnitude (e.g. 32768 for 16-bit).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"audio file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".wav":
        return _decode_wav(path)
    if suffix == ".mp3":
        return _decode_mp3(path)
    raise UnsupportedFormatError(f"unsupported audio container: {path}")


def _decode_wav(path: Path) -> Signal:
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            sampwidth = wav.getsampwidth()
            rate = wav.getframerate()
            n_frames = wav.getnframes()
            raw = wav.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise DecodeError(f"cannot decode WAV file {path}: {exc}") from exc

    expected = n_frames * n_channels * sampwidth
    if len(raw) < expected:
        raise DecodeError(
            f"truncated WAV file {path}: expected {expected} bytes, got {len(raw)}"
        )

    if sampwidth == 1:
        # 8-bit WAV is unsigned.
        data = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
        data = (data - 128.0) / 128.0
    elif sampwidth == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif sampwidth == 3:
        as_bytes = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3)
        ints = (
            as_bytes[:, 0].astype(np.int32)
            | (as_bytes[:, 1].astype(np.int32) << 8)
            | (as_bytes[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        data = ints.astype(np.float64) / float(1 << 23)
    elif sampwidth == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
    else:
        raise UnsupportedFormatError(f"unsupported WAV sample width {sampwidth} in {path}")

    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    if rate not in INGEST_RATES:
        raise UnsupportedFormatError(f"unsupported sample rate {rate} Hz in {path}")
    return Signal(samples=np.clip(data, -1.0, 1.0), sample_rate_hz=rate)


def _decode_mp3(path: Path) -> Signal:
    try:
        sf = importlib.import_module("soundfile")
    except ImportError as exc:
        raise UnsupportedFormatError(
            f"mp3 decoding needs the optional 'soundfile' backend: {path}"
        ) from exc
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except Exception as exc:  # backend-specific error types
        raise DecodeError(f"cannot decode mp3 file {path}: {exc}") from exc
    mono = data.mean(axis=1)
    if rate not in INGEST_RATES:
        raise UnsupportedFormatError(f"unsupported sample rate {rate} Hz in {path}")
    return Signal(samples=np.clip(mono, -1.0, 1.0), sample_rate_hz=int(rate))


def write_wav(path: str | Path, signal: Signal) -> None:
    """Write a Signal as 16-bit mono PCM WAV (little-endian RIFF)."""
    ints = np.clip(np.rint(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(signal.sample_rate_hz)
        wav.writeframes(ints.tobytes())


@lru_cache(maxsize=None)
def _resampler_for(rate: int) -> tuple[np.ndarray, int, int, int]:
    """Polyphase decimator/interpolator taps for rate -> 16 kHz.

    Windowed-sinc low-pass, Kaiser window, 64 taps per phase. Cutoff is
    0.45x the output rate for decimation; when upsampling (8 kHz input) the
    cutoff must sit below the input Nyquist instead, to stop spectral images.
    Returns (taps, up, down, lead) where lead is the output-domain index of
    the filter's group delay, already aligned to the decimation grid.
    """
    g = math.gcd(rate, TARGET_RATE)
    up, down = TARGET_RATE // g, rate // g
    n_taps = 64 * up + 1
    cutoff_hz = 0.45 * min(rate, TARGET_RATE)
    fs_up = rate * up
    mid = (n_taps - 1) // 2
    n = np.arange(n_taps) - mid
    taps = 2.0 * cutoff_hz / fs_up * np.sinc(2.0 * cutoff_hz / fs_up * n)
    taps *= np.kaiser(n_taps, 8.6)
    taps *= up / taps.sum()
    # Pad the front so the group delay lands on a decimation-grid sample.
    pad = (-mid) % down
    taps = np.concatenate([np.zeros(pad), taps])
    lead = (mid + pad) // down
    return taps, up, down, lead


def resample_to_16k(signal: Signal) -> Signal:
    """Resample to 16 kHz with band-limited anti-aliasing.

    Output length is round(input_length * 16000 / input_rate). A 16 kHz
    input is returned unchanged.
    """
    rate = signal.sample_rate_hz
    if rate == TARGET_RATE:
        return signal
    if rate not in INGEST_RATES:
        raise UnsupportedFormatError(f"unsupported resampling ratio: {rate} -> 16000 Hz")
    x = np.asarray(signal.samples, dtype=np.float64)
    n_out = round(len(x) * TARGET_RATE / rate)
    if n_out == 0:
        return Signal(samples=np.zeros(0), sample_rate_hz=TARGET_RATE)
    taps, up, down, lead = _resampler_for(rate)
    # Trailing zeros guarantee the sliced range exists after group-delay shift.
    tail = int(np.ceil(len(taps) / up)) + down
    y = upfirdn(taps, np.concatenate([x, np.zeros(tail)]), up=up, down=down)
    out = y[lead : lead + n_out]
    return Signal(samples=np.clip(out, -1.0, 1.0), sample_rate_hz=TARGET_RATE)


def _frame_rms(x: np.ndarray, frame_len: int) -> np.ndarray:
    n_frames = len(x) // frame_len
    if n_frames == 0:
        return np.zeros(0)
    frames = x[: n_frames * frame_len].reshape(n_frames, frame_len)
    return np.sqrt(np.mean(frames * frames, axis=1))


def _to_dbfs(rms: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(rms)


def frame_rms_dbfs(signal: Signal, frame_len_ms: float = DEFAULT_TRIM_FRAME_MS) -> FrameStats:
    """Per-frame RMS in dBFS over non-overlapping frames (full frames only)."""
    if frame_len_ms <= 0:
        raise ValidationError(f"frame_len_ms must be positive, got {frame_len_ms}")
    frame_len = max(1, round(frame_len_ms / 1000.0 * signal.sample_rate_hz))
    rms = _frame_rms(np.asarray(signal.samples, dtype=np.float64), frame_len)
    return FrameStats(frame_len_ms=frame_len_ms, rms_dbfs_per_frame=_to_dbfs(rms))


def trim_edge_silence(
    signal: Signal,
    threshold_dbfs: float = DEFAULT_TRIM_THRESHOLD_DBFS,
    frame_len_ms: float = DEFAULT_TRIM_FRAME_MS,
) -> Signal:
    """Remove leading and trailing frames quieter than the threshold.

    Cuts at frame boundaries; interior content is untouched. If every frame
    is below the threshold an empty Signal is returned. The trailing partial
    frame (if any) is measured over its own length.
    """
    x = np.asarray(signal.samples, dtype=np.float64)
    if len(x) == 0:
        return signal
    frame_len = max(1, round(frame_len_ms / 1000.0 * signal.sample_rate_hz))
    n_frames = len(x) // frame_len
    bounds = [(i * frame_len, (i + 1) * frame_len) for i in range(n_frames)]
    if n_frames * frame_len < len(x):
        bounds.append((n_frames * frame_len, len(x)))
    loud = []
    for start, end in bounds:
        seg = x[start:end]
        rms = math.sqrt(float(np.mean(seg * seg)))
        db = 20.0 * math.log10(rms) if rms > 0 else -math.inf
        loud.append(db >= threshold_dbfs)
    if not any(loud):
        return Signal(samples=np.zeros(0), sample_rate_hz=signal.sample_rate_hz)
    first = loud.index(True)
    last = len(loud) - 1 - loud[::-1].index(True)
    return Signal(
        samples=x[bounds[first][0] : bounds[last][1]].copy(),
        sample_rate_hz=signal.sample_rate_hz,
    )


def shorten_internal_pauses(signal: Signal, max_pause_ms: float = 180.0) -> Signal:
    """Shorten interior non-speech runs longer than max_pause_ms to exactly it.

    Energy VAD: 30 ms frames every 10 ms, speech iff frame level is at least
    -40 dBFS. A sample counts as non-speech when any non-speech frame covers
    it, which biases toward measuring the full pause. Runs touching either
    signal edge are left alone (edges are assumed pre-trimmed).
    """
    if signal.sample_rate_hz != TARGET_RATE:
        raise ValidationError(
            f"pause shortening expects 16 kHz audio, got {signal.sample_rate_hz} Hz"
        )
    x = np.asarray(signal.samples, dtype=np.float64)
    frame_len = round(VAD_FRAME_MS / 1000.0 * TARGET_RATE)
    hop = round(VAD_HOP_MS / 1000.0 * TARGET_RATE)
    if len(x) <= frame_len:
        return signal

    nonspeech = np.zeros(len(x), dtype=bool)
    start = 0
    while start + frame_len <= len(x):
        seg = x[start : start + frame_len]
        rms = math.sqrt(float(np.mean(seg * seg)))
        db = 20.0 * math.log10(rms) if rms > 0 else -math.inf
        if db < VAD_SPEECH_THRESHOLD_DBFS:
            nonspeech[start : start + frame_len] = True
        start += hop

    max_pause = round(max_pause_ms / 1000.0 * TARGET_RATE)
    keep = np.ones(len(x), dtype=bool)
    run_start = None
    for i in range(len(x) + 1):
        inside = i < len(x) and nonspeech[i]
        if inside and run_start is None:
            run_start = i
        elif not inside and run_start is not None:
            run_end = i
            interior = run_start > 0 and run_end < len(x)
            if interior and run_end - run_start > max_pause:
                keep[run_start + max_pause : run_end] = False
            run_start = None
    if keep.all():
        return signal
    return Signal(samples=x[keep].copy(), sample_rate_hz=TARGET_RATE)

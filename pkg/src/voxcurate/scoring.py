"""Per-utterance pseudo-MOS scores on the 1-5 scale.

Scores come from exactly one of two sources per run: an external TSV of
precomputed neural-estimator scores, or the built-in DSP proxy. The proxy
combines a frame-percentile SNR estimate, a spectral rolloff bandwidth
estimate and a hard-clipping rate. Its weights are calibration constants:
only the orderings they induce are asserted anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import SpeakerProfile, split_lines
from .dsp import Signal, duration_s
from .errors import FormatError, ValidationError

SNR_FRAME_MS = 30.0
SNR_MIN_FINITE_FRAMES = 10
SNR_SPEECH_PERCENTILE = 90.0
SNR_NOISE_PERCENTILE = 10.0

ROLLOFF_NFFT = 4096
ROLLOFF_ENERGY_FRACTION = 0.99

CLIP_AMPLITUDE = 0.999

# Pseudo-MOS formula calibration.
SNR_FULL_SCALE_DB = 40.0
ROLLOFF_FLOOR_HZ = 2000.0
ROLLOFF_RANGE_HZ = 5500.0
SNR_WEIGHT = 0.6
BANDWIDTH_WEIGHT = 0.4
CLIP_PENALTY = 2.0

MIN_SCORING_DURATION_S = 0.5


@dataclass
class QualityScore:
    """A pseudo-MOS in [1, 5] with provenance and proxy diagnostics."""

    value: float
    source: str  # "external" or "proxy"
    snr_db: float | None = None
    rolloff_hz: float | None = None
    clip_rate: float | None = None

    def __post_init__(self) -> None:
        if self.source not in ("external", "proxy"):
            raise ValidationError(f"unknown score source: {self.source!r}")
        if not 1.0 <= self.value <= 5.0:
            raise ValidationError(f"pseudo-MOS {self.value} outside [1, 5]")
        if self.clip_rate is not None and not 0.0 <= self.clip_rate <= 1.0:
            raise ValidationError(f"clip_rate {self.clip_rate} outside [0, 1]")
        if self.rolloff_hz is not None and not self.rolloff_hz > 0:
            raise ValidationError(f"rolloff_hz must be positive, got {self.rolloff_hz}")


def estimate_snr_db(signal: Signal) -> float:
    """Difference between the 90th and 10th percentile of frame dBFS.

    Uses 30 ms non-overlapping frames; all-zero frames are excluded. With
    fewer than 10 finite frames there is no noise evidence and +inf is
    returned.
    """
    x = np.asarray(signal.samples, dtype=np.float64)
    if len(x) == 0:
        raise ValidationError("cannot estimate SNR of an empty signal")
    frame_len = round(SNR_FRAME_MS / 1000.0 * signal.sample_rate_hz)
    n_frames = len(x) // frame_len
    if n_frames == 0:
        return math.inf
    frames = x[: n_frames * frame_len].reshape(n_frames, frame_len)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    finite = rms[rms > 0.0]
    if len(finite) < SNR_MIN_FINITE_FRAMES:
        return math.inf
    db = 20.0 * np.log10(finite)
    speech = float(np.percentile(db, SNR_SPEECH_PERCENTILE))
    noise = float(np.percentile(db, SNR_NOISE_PERCENTILE))
    return speech - noise


def estimate_rolloff_hz(
    signal: Signal, energy_fraction: float = ROLLOFF_ENERGY_FRACTION
) -> float:
    """Smallest frequency below which the given fraction of power lies.

    Averaged periodogram: 4096-point Hann-windowed frames, 50 % overlap.
    """
    x = np.asarray(signal.samples, dtype=np.float64)
    if len(x) < ROLLOFF_NFFT:
        raise ValidationError(
            f"rolloff needs at least {ROLLOFF_NFFT} samples, got {len(x)}"
        )
    hop = ROLLOFF_NFFT // 2
    window = np.hanning(ROLLOFF_NFFT)
    power = np.zeros(ROLLOFF_NFFT // 2 + 1)
    n_frames = (len(x) - ROLLOFF_NFFT) // hop + 1
    for i in range(n_frames):
        seg = x[i * hop : i * hop + ROLLOFF_NFFT] * window
        spectrum = np.fft.rfft(seg)
        power += np.abs(spectrum) ** 2
    total = power.sum()
    if total <= 0.0:
        raise ValidationError("cannot estimate rolloff of an all-zero signal")
    cumulative = np.cumsum(power)
    k = int(np.searchsorted(cumulative, energy_fraction * total))
    bin_hz = signal.sample_rate_hz / ROLLOFF_NFFT
    return max(k, 1) * bin_hz


def clip_rate(signal: Signal) -> float:
    """Fraction of samples at or beyond 0.999 of full scale."""
    x = np.asarray(signal.samples, dtype=np.float64)
    if len(x) == 0:
        return 0.0
    return float(np.mean(np.abs(x) >= CLIP_AMPLITUDE))


def proxy_value(snr_db: float, rolloff_hz: float, clip_fraction: float) -> float:
    """Map (SNR, bandwidth, clipping) onto the 1-5 pseudo-MOS scale.

    1 + 4 * (0.6 * snr_n + 0.4 * bw_n) - 2 * clip, clamped to [1, 5], where
    snr_n saturates at 40 dB (the +inf sentinel maps to 1.0 as the best
    case) and bw_n ramps from a 2000 Hz floor over 5500 Hz.
    """
    snr_n = 1.0 if math.isinf(snr_db) else min(max(snr_db / SNR_FULL_SCALE_DB, 0.0), 1.0)
    bw_n = min(max((rolloff_hz - ROLLOFF_FLOOR_HZ) / ROLLOFF_RANGE_HZ, 0.0), 1.0)
    raw = 1.0 + 4.0 * (SNR_WEIGHT * snr_n + BANDWIDTH_WEIGHT * bw_n) - CLIP_PENALTY * clip_fraction
    return min(max(raw, 1.0), 5.0)


def proxy_score(signal: Signal) -> QualityScore:
    """Score a signal with the DSP proxy; needs at least 0.5 s of audio."""
    if duration_s(signal) < MIN_SCORING_DURATION_S:
        raise ValidationError(
            f"proxy scoring needs >= {MIN_SCORING_DURATION_S} s of audio, "
            f"got {duration_s(signal):.3f} s"
        )
    snr = estimate_snr_db(signal)
    rolloff = estimate_rolloff_hz(signal)
    clip = clip_rate(signal)
    return QualityScore(
        value=proxy_value(snr, rolloff, clip),
        source="proxy",
        snr_db=snr,
        rolloff_hz=rolloff,
        clip_rate=clip,
    )


def load_external_scores(path: str | Path) -> dict[str, QualityScore]:
    """Load a two-column TSV of utterance_id and pseudo-MOS in [1, 5]."""
    scores: dict[str, QualityScore] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(split_lines(text), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(
                f"{path} line {line_no}: expected 2 tab-separated columns, got {len(parts)}"
            )
        key, raw = parts[0].strip(), parts[1].strip()
        try:
            value = float(raw)
        except ValueError as exc:
            raise FormatError(f"{path} line {line_no}: score is not a number: {raw!r}") from exc
        if not 1.0 <= value <= 5.0:
            raise ValidationError(f"{path} line {line_no}: score {value} outside [1, 5]")
        scores[key] = QualityScore(value=value, source="external")
    return scores


def speaker_mean_score(
    profile: SpeakerProfile, utterance_scores: dict[str, QualityScore] | dict[str, float]
) -> float:
    """Arithmetic mean of the profile's utterance scores; all must be present."""
    values = []
    missing = []
    for utterance_id in profile.utterances:
        score = utterance_scores.get(utterance_id)
        if score is None:
            missing.append(utterance_id)
        else:
            values.append(score.value if isinstance(score, QualityScore) else float(score))
    if missing:
        raise ValidationError(
            f"speaker {profile.speaker_id} has unscored utterances: {', '.join(missing[:20])}"
        )
    return math.fsum(values) / len(values)


def diagnostics_tsv(scores: dict[str, QualityScore]) -> str:
    """Proxy diagnostics as TSV: utterance_id, value, snr_db, rolloff_hz, clip_rate."""
    lines = ["utterance_id\tvalue\tsnr_db\trolloff_hz\tclip_rate"]
    for utterance_id in sorted(scores):
        s = scores[utterance_id]
        lines.append(
            "\t".join(
                [
                    utterance_id,
                    f"{s.value:.4f}",
                    "" if s.snr_db is None else f"{s.snr_db:.2f}",
                    "" if s.rolloff_hz is None else f"{s.rolloff_hz:.1f}",
                    "" if s.clip_rate is None else f"{s.clip_rate:.6f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"

"""Shared signal builders and record factories."""

from __future__ import annotations

import numpy as np
import pytest

from voxcurate.corpus import UtteranceRecord
from voxcurate.dsp import Signal


def tone(freq_hz: float, duration_s: float, rate: int = 16_000, amplitude: float = 1.0) -> Signal:
    t = np.arange(round(duration_s * rate)) / rate
    return Signal(samples=amplitude * np.sin(2 * np.pi * freq_hz * t), sample_rate_hz=rate)


def silence(duration_s: float, rate: int = 16_000) -> Signal:
    return Signal(samples=np.zeros(round(duration_s * rate)), sample_rate_hz=rate)


def concat(*signals: Signal) -> Signal:
    rate = signals[0].sample_rate_hz
    assert all(s.sample_rate_hz == rate for s in signals)
    return Signal(samples=np.concatenate([s.samples for s in signals]), sample_rate_hz=rate)


def record(
    utterance_id: str,
    speaker_id: str = "spk",
    duration_s: float | None = None,
    quality_score: float | None = None,
    **kwargs,
) -> UtteranceRecord:
    return UtteranceRecord(
        utterance_id=utterance_id,
        speaker_id=speaker_id,
        audio_path=f"clips/{utterance_id}.wav",
        transcript=kwargs.pop("transcript", f"transcript for {utterance_id}"),
        duration_s=duration_s,
        quality_score=quality_score,
        **kwargs,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)

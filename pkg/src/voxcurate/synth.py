"""Deterministic synthetic corpora with labelled degradations.

Utterances are speech-like only in the features the proxy scorer measures:
amplitude-modulated noise bursts separated by short gaps, a controlled
noise floor, an optional band limit and optional hard clipping. Everything
derives from (seed, speaker_id, index), so regenerated corpora are
bit-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import split_lines
from .dsp import Signal, write_wav
from .errors import FormatError, ValidationError
from .seeding import derived_seed

SAMPLE_RATE = 16_000
PEAK_AMPLITUDE = 10 ** (-3.0 / 20.0)  # -3 dBFS
# Quiet breath-like floor in the gaps; far below the -50 dBFS trim threshold
# but above 16-bit quantization, so clean signals keep a measurable floor.
FLOOR_DB = -80.0
CLIP_DRIVE_DB = 30.0

_WORDS = (
    "amber", "basin", "cedar", "dome", "ember", "fable", "grove", "harbor",
    "inlet", "jasper", "kettle", "lagoon", "meadow", "north", "orchard",
    "pebble", "quill", "ridge", "saddle", "timber", "umber", "valley",
    "willow", "yonder", "zephyr", "copper", "drift", "flint", "garnet",
    "hollow", "ivory", "juniper", "linen", "marble", "nectar", "opal",
)


@dataclass(frozen=True)
class SyntheticSpeakerSpec:
    """Generation parameters for one synthetic speaker."""

    speaker_id: str
    n_utterances: int
    utterance_duration_s: float
    snr_db: float = math.inf
    cutoff_hz: float = 8000.0
    clip_fraction: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_utterances < 1:
            raise ValidationError("n_utterances must be >= 1")
        if self.utterance_duration_s <= 0:
            raise ValidationError("utterance_duration_s must be positive")
        if not 0 < self.cutoff_hz <= SAMPLE_RATE / 2:
            raise ValidationError(
                f"cutoff_hz must lie in (0, {SAMPLE_RATE // 2}], got {self.cutoff_hz}"
            )
        if not 0.0 <= self.clip_fraction <= 1.0:
            raise ValidationError("clip_fraction must lie in [0, 1]")


def _burst_mask(n: int, rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    pos = 0
    burst = True
    while pos < n:
        if burst:
            length = round(rng.uniform(0.15, 0.35) * SAMPLE_RATE)
        else:
            length = round(rng.uniform(0.05, 0.12) * SAMPLE_RATE)
        mask[pos : pos + length] = burst
        pos += length
        burst = not burst
    # Keep both edges voiced so edge trimming cannot eat into the nominal
    # duration.
    edge = min(n, round(0.1 * SAMPLE_RATE))
    mask[:edge] = True
    mask[n - edge :] = True
    return mask


def _envelope(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    env = np.zeros(len(mask))
    n = len(mask)
    i = 0
    while i < n:
        if not mask[i]:
            i += 1
            continue
        j = i
        while j < n and mask[j]:
            j += 1
        length = j - i
        ramp = max(1, min(round(0.02 * SAMPLE_RATE), length // 4))
        shape = np.ones(length)
        rise = np.sin(np.linspace(0.0, np.pi / 2.0, ramp)) ** 2
        shape[:ramp] = rise
        shape[length - ramp :] = rise[::-1]
        t = np.arange(length) / SAMPLE_RATE
        am = 0.7 + 0.3 * np.sin(
            2.0 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0.0, 2.0 * np.pi)
        )
        env[i:j] = shape * am
        i = j
    return env


def generate_utterance(spec: SyntheticSpeakerSpec, index: int) -> tuple[Signal, str]:
    """Generate one (signal, transcript) pair, deterministic in (seed, speaker, index)."""
    spec.validate()
    rng = np.random.default_rng(derived_seed(spec.seed, spec.speaker_id, index, "signal"))
    n = round(spec.utterance_duration_s * SAMPLE_RATE)

    mask = _burst_mask(n, rng)
    base = rng.standard_normal(n) * _envelope(mask, rng)
    peak = float(np.max(np.abs(base)))
    if peak > 0:
        base *= PEAK_AMPLITUDE / peak

    floor_sigma = PEAK_AMPLITUDE * 10 ** (FLOOR_DB / 20.0)
    x = base + rng.standard_normal(n) * floor_sigma

    if math.isfinite(spec.snr_db):
        speech_rms = float(np.sqrt(np.mean(base[mask] ** 2)))
        noise_sigma = speech_rms * 10 ** (-spec.snr_db / 20.0)
        x = x + rng.standard_normal(n) * noise_sigma

    if spec.cutoff_hz < SAMPLE_RATE / 2:
        spectrum = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
        spectrum[freqs > spec.cutoff_hz] = 0.0
        x = np.fft.irfft(spectrum, n)

    peak = float(np.max(np.abs(x)))
    if peak > 0:
        x *= PEAK_AMPLITUDE / peak
    if spec.clip_fraction > 0:
        drive = 10 ** (CLIP_DRIVE_DB * spec.clip_fraction / 20.0)
        x = np.clip(x * drive, -1.0, 1.0)

    signal = Signal(samples=np.clip(x, -1.0, 1.0), sample_rate_hz=SAMPLE_RATE)
    return signal, _transcript(spec, index)


def _transcript(spec: SyntheticSpeakerSpec, index: int) -> str:
    rng = np.random.default_rng(derived_seed(spec.seed, spec.speaker_id, index, "text"))
    n_words = int(rng.integers(6, 12))
    words = [_WORDS[int(rng.integers(0, len(_WORDS)))] for _ in range(n_words)]
    sentence = " ".join(words)
    return sentence[0].upper() + sentence[1:] + "."


def generate_corpus(specs: Sequence[SyntheticSpeakerSpec], out_dir: str | Path) -> Path:
    """Write WAVs plus a TSV manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    clips = out_dir / "clips"
    clips.mkdir(parents=True, exist_ok=True)
    lines = ["client_id\tpath\tsentence\tup_votes\tdown_votes\tage\tgender\taccents"]
    seen: set[str] = set()
    for spec in specs:
        spec.validate()
        if spec.speaker_id in seen:
            raise ValidationError(f"duplicate speaker_id in specs: {spec.speaker_id}")
        seen.add(spec.speaker_id)
        for index in range(spec.n_utterances):
            signal, transcript = generate_utterance(spec, index)
            name = f"{spec.speaker_id}_{index:03d}.wav"
            write_wav(clips / name, signal)
            lines.append(
                f"{spec.speaker_id}\tclips/{name}\t{transcript}\t3\t0\t\t\t"
            )
    manifest_path = out_dir / "manifest.tsv"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path


def load_speaker_specs(path: str | Path) -> list[SyntheticSpeakerSpec]:
    """Load one spec per line; snr_db accepts numbers, "inf" or null."""
    specs = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(split_lines(text), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path} line {line_no}: invalid JSON: {exc}") from exc
        snr = obj.get("snr_db", math.inf)
        if snr is None or (isinstance(snr, str) and snr.lower() in ("inf", "infinity")):
            snr = math.inf
        try:
            spec = SyntheticSpeakerSpec(
                speaker_id=str(obj["speaker_id"]),
                n_utterances=int(obj["n_utterances"]),
                utterance_duration_s=float(obj["utterance_duration_s"]),
                snr_db=float(snr),
                cutoff_hz=float(obj.get("cutoff_hz", 8000.0)),
                clip_fraction=float(obj.get("clip_fraction", 0.0)),
                seed=int(obj.get("seed", 0)),
            )
        except KeyError as exc:
            raise FormatError(f"{path} line {line_no}: missing field {exc}") from exc
        spec.validate()
        specs.append(spec)
    return specs

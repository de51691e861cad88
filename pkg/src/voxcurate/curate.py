"""Selection pipeline: duration gates, score thresholding, speaker capping.

Stage order is fixed: scan (decode/trim/measure) -> max utterance duration
-> score -> threshold -> LID -> CER -> speaker-duration cap. Records are
canonicalized to utterance_id order at intake, so outputs are byte-stable
and independent of manifest row order. All score boundaries are inclusive
(kept iff score >= threshold).
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import dsp
from .corpus import UtteranceRecord, split_lines
from .errors import FormatError, PipelineStageError, ValidationError
from .metrics import cer
from .scoring import QualityScore, proxy_score
from .seeding import derived_seed

DEFAULT_MAX_UTTERANCE_S = 16.7
DEFAULT_MIN_SPEAKER_S = 20.0 * 60.0
DEFAULT_MAX_SPEAKER_S = 10.0 * 3600.0
DEFAULT_LID_MIN_PROB = 0.8
DEFAULT_MAX_CER = 0.4
DEFAULT_THRESHOLDS: tuple[float | None, ...] = (None, 2.0, 3.0, 3.5, 3.8, 4.0)

STAGES = (
    "scan",
    "max_utterance_duration",
    "score",
    "score_threshold",
    "lid",
    "cer",
    "speaker_cap",
)

REPORT_HEADER = "# voxcurate curation report v1"


@dataclass(frozen=True)
class CurationConfig:
    """All selection parameters plus the seed that fixes random subsets."""

    score_threshold: float | None = None
    threshold_level: str = "speaker"  # or "utterance"
    min_speaker_duration_s: float | None = DEFAULT_MIN_SPEAKER_S
    max_speaker_duration_s: float = DEFAULT_MAX_SPEAKER_S
    max_utterance_duration_s: float = DEFAULT_MAX_UTTERANCE_S
    lid_min_prob: float | None = None
    max_cer: float | None = None
    rng_seed: int = 0
    score_source: str = "external"  # or "proxy"

    def validate(self) -> None:
        if self.score_threshold is not None and not 1.0 <= self.score_threshold <= 5.0:
            raise ValidationError(
                f"score_threshold {self.score_threshold} outside the [1, 5] score domain"
            )
        if self.threshold_level not in ("speaker", "utterance"):
            raise ValidationError(f"unknown threshold_level: {self.threshold_level!r}")
        if self.score_source not in ("external", "proxy"):
            raise ValidationError(f"unknown score_source: {self.score_source!r}")
        if self.min_speaker_duration_s is not None:
            if self.min_speaker_duration_s < 0:
                raise ValidationError("min_speaker_duration_s must be >= 0")
            if self.min_speaker_duration_s > self.max_speaker_duration_s:
                raise ValidationError(
                    "min_speaker_duration_s exceeds max_speaker_duration_s"
                )
        if self.max_speaker_duration_s <= 0:
            raise ValidationError("max_speaker_duration_s must be positive")
        if self.max_utterance_duration_s <= 0:
            raise ValidationError("max_utterance_duration_s must be positive")
        if self.lid_min_prob is not None and not 0.0 <= self.lid_min_prob <= 1.0:
            raise ValidationError(f"lid_min_prob {self.lid_min_prob} outside [0, 1]")
        if self.max_cer is not None and self.max_cer < 0:
            raise ValidationError("max_cer must be >= 0")
        if not -(2**63) <= self.rng_seed < 2**64:
            raise ValidationError("rng_seed must fit in 64 bits")


@dataclass
class StageCount:
    stage: str
    records_in: int
    records_out: int


@dataclass
class SpeakerRow:
    speaker_id: str
    mean_score: float | None
    score_variance: float | None
    kept_duration_s: float
    kept_utterances: int


@dataclass
class CurationReport:
    stages: list[StageCount]
    total_duration_h: float
    speaker_count: int
    speakers: list[SpeakerRow]
    score_source: str
    warnings: dict[str, int] = field(default_factory=dict)

    def to_tsv(self) -> str:
        lines = [REPORT_HEADER, "[stages]", "stage\trecords_in\trecords_out"]
        for sc in self.stages:
            lines.append(f"{sc.stage}\t{sc.records_in}\t{sc.records_out}")
        lines += [
            "[totals]",
            f"score_source\t{self.score_source}",
            f"total_duration_h\t{self.total_duration_h:.6f}",
            f"speaker_count\t{self.speaker_count}",
        ]
        for key in sorted(self.warnings):
            lines.append(f"warning_{key}\t{self.warnings[key]}")
        lines += [
            "[speakers]",
            "speaker_id\tmean_score\tscore_variance\tkept_duration_s\tkept_utterances",
        ]
        for row in self.speakers:
            mean = "" if row.mean_score is None else f"{row.mean_score:.4f}"
            var = "" if row.score_variance is None else f"{row.score_variance:.6f}"
            lines.append(
                f"{row.speaker_id}\t{mean}\t{var}\t{row.kept_duration_s:.6f}"
                f"\t{row.kept_utterances}"
            )
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        lines = [
            f"{'stage':<24}{'in':>8}{'out':>8}",
        ]
        for sc in self.stages:
            lines.append(f"{sc.stage:<24}{sc.records_in:>8}{sc.records_out:>8}")
        lines.append(
            f"kept: {self.total_duration_h:.2f} h across {self.speaker_count} speakers"
        )
        return "\n".join(lines)


@dataclass
class SweepRow:
    threshold: float | None
    duration_h: float
    speaker_count: int

    @property
    def label(self) -> str:
        return "baseline" if self.threshold is None else f"{self.threshold:g}"


def _require_durations(records: Sequence[UtteranceRecord], stage: str) -> None:
    missing = [r.utterance_id for r in records if r.duration_s is None]
    if missing:
        raise PipelineStageError(stage, "records without duration_s", missing)


def filter_max_utterance_duration(
    records: Sequence[UtteranceRecord], max_s: float = DEFAULT_MAX_UTTERANCE_S
) -> list[UtteranceRecord]:
    """Keep records whose (post-trim) duration is at most max_s."""
    _require_durations(records, "max_utterance_duration")
    return [r for r in records if r.duration_s <= max_s]


def filter_by_speaker_score(
    records: Sequence[UtteranceRecord], speaker_scores: Mapping[str, float], threshold: float
) -> list[UtteranceRecord]:
    """Keep all utterances of speakers whose mean score is >= threshold."""
    unscored = sorted({r.speaker_id for r in records} - set(speaker_scores))
    if unscored:
        raise ValidationError(f"speakers without a score: {', '.join(unscored[:20])}")
    return [r for r in records if speaker_scores[r.speaker_id] >= threshold]


def filter_by_utterance_score(
    records: Sequence[UtteranceRecord], threshold: float
) -> list[UtteranceRecord]:
    """Keep records whose own score is >= threshold; speakers may become partial."""
    unscored = [r.utterance_id for r in records if r.quality_score is None]
    if unscored:
        raise ValidationError(
            f"records without a quality_score: {', '.join(unscored[:20])}"
        )
    return [r for r in records if r.quality_score >= threshold]


def cap_speaker_durations(
    records: Sequence[UtteranceRecord],
    min_s: float | None,
    max_s: float,
    seed: int,
) -> list[UtteranceRecord]:
    """Bound each speaker's total duration to [min_s, max_s].

    Speakers under min_s are removed entirely (skipped when min_s is None).
    Speakers over max_s keep a seeded random subset: their utterances are
    shuffled by a permutation keyed on (seed, speaker_id) and the longest
    prefix with cumulative duration <= max_s is kept. The kept set does not
    depend on the order of the input records.
    """
    _require_durations(records, "speaker_cap")
    by_speaker: dict[str, list[UtteranceRecord]] = {}
    for record in records:
        by_speaker.setdefault(record.speaker_id, []).append(record)

    kept_ids: set[str] = set()
    for speaker_id, members in by_speaker.items():
        total = math.fsum(m.duration_s for m in members)
        if min_s is not None and total < min_s:
            continue
        if total <= max_s:
            kept_ids.update(m.utterance_id for m in members)
            continue
        ordered = sorted(members, key=lambda m: m.utterance_id)
        rng = random.Random(derived_seed(seed, "speaker_cap", speaker_id))
        rng.shuffle(ordered)
        cumulative = 0.0
        for member in ordered:
            if cumulative + member.duration_s > max_s:
                break
            cumulative += member.duration_s
            kept_ids.add(member.utterance_id)
    return [r for r in records if r.utterance_id in kept_ids]


def filter_by_lid(
    records: Sequence[UtteranceRecord], min_prob: float = DEFAULT_LID_MIN_PROB
) -> tuple[list[UtteranceRecord], int]:
    """Keep records with language probability >= min_prob.

    Records without a LID annotation are kept; their count is returned so
    callers can warn. Returns (kept, unannotated_count).
    """
    kept = []
    unannotated = 0
    for record in records:
        if record.lid_prob is None:
            unannotated += 1
            kept.append(record)
        elif record.lid_prob >= min_prob:
            kept.append(record)
    return kept, unannotated


def filter_by_cer(
    records: Sequence[UtteranceRecord], max_cer: float = DEFAULT_MAX_CER
) -> tuple[list[UtteranceRecord], int]:
    """Keep records whose hypothesis-vs-transcript CER is <= max_cer.

    The boundary is inclusive: only a CER strictly above max_cer drops a
    record. Unannotated records are kept and counted.
    """
    kept = []
    unannotated = 0
    for record in records:
        if record.asr_hypothesis is None:
            unannotated += 1
            kept.append(record)
        elif cer(record.asr_hypothesis, record.transcript) <= max_cer:
            kept.append(record)
    return kept, unannotated


@dataclass
class ScanResult:
    records: list[UtteranceRecord]
    dropped_empty: list[str] = field(default_factory=list)
    signals: dict[str, dsp.Signal] = field(default_factory=dict)


def scan_records(
    records: Sequence[UtteranceRecord],
    audio_root: str | Path,
    trim_threshold_dbfs: float = dsp.DEFAULT_TRIM_THRESHOLD_DBFS,
    trim_frame_ms: float = dsp.DEFAULT_TRIM_FRAME_MS,
    jobs: int = 1,
    keep_signals: bool = False,
) -> ScanResult:
    """Decode, resample to 16 kHz, trim edge silence and measure durations.

    Records that are entirely silent after trimming are dropped and listed.
    With keep_signals the trimmed signals are returned for reuse (scoring).
    """
    root = Path(audio_root)

    def process(record: UtteranceRecord):
        signal = dsp.resample_to_16k(dsp.decode(root / record.audio_path))
        raw = dsp.duration_s(signal)
        trimmed = dsp.trim_edge_silence(signal, trim_threshold_dbfs, trim_frame_ms)
        return record, raw, trimmed

    if jobs > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(process, records))
    else:
        results = [process(r) for r in records]

    out: list[UtteranceRecord] = []
    dropped: list[str] = []
    signals: dict[str, dsp.Signal] = {}
    for record, raw, trimmed in results:
        if len(trimmed.samples) == 0:
            dropped.append(record.utterance_id)
            continue
        out.append(
            replace(record, raw_duration_s=raw, duration_s=dsp.duration_s(trimmed))
        )
        if keep_signals:
            signals[record.utterance_id] = trimmed
    return ScanResult(records=out, dropped_empty=dropped, signals=signals)


@dataclass
class ScoreResult:
    records: list[UtteranceRecord]
    scores: dict[str, QualityScore]
    missing: list[str] = field(default_factory=list)


def score_records(
    records: Sequence[UtteranceRecord],
    source: str,
    audio_root: str | Path | None = None,
    external_scores: Mapping[str, QualityScore] | None = None,
    signals: Mapping[str, dsp.Signal] | None = None,
    trim_threshold_dbfs: float = dsp.DEFAULT_TRIM_THRESHOLD_DBFS,
    trim_frame_ms: float = dsp.DEFAULT_TRIM_FRAME_MS,
    jobs: int = 1,
) -> ScoreResult:
    """Attach utterance scores from exactly one source.

    source="external" copies values from external_scores (records already
    carrying a quality_score keep it); records matched by neither are
    reported in missing. source="proxy" computes DSP proxy scores from the
    trimmed audio; passing external_scores alongside is an error, so the
    two kinds can never mix within a run.
    """
    if source == "proxy" and external_scores:
        raise ValidationError("proxy scoring must not be mixed with external scores")
    if source not in ("external", "proxy"):
        raise ValidationError(f"unknown score source: {source!r}")

    scores: dict[str, QualityScore] = {}
    missing: list[str] = []
    out: list[UtteranceRecord] = []

    if source == "external":
        table = dict(external_scores or {})
        for record in records:
            if record.utterance_id in table:
                score = table[record.utterance_id]
                scores[record.utterance_id] = score
                out.append(replace(record, quality_score=score.value))
            elif record.quality_score is not None:
                scores[record.utterance_id] = QualityScore(
                    value=record.quality_score, source="external"
                )
                out.append(record)
            else:
                missing.append(record.utterance_id)
                out.append(record)
        return ScoreResult(records=out, scores=scores, missing=missing)

    signals = dict(signals or {})

    def compute(record: UtteranceRecord) -> tuple[str, QualityScore]:
        signal = signals.get(record.utterance_id)
        if signal is None:
            if audio_root is None:
                raise ValidationError(
                    f"proxy scoring needs audio_root to decode {record.utterance_id}"
                )
            decoded = dsp.resample_to_16k(dsp.decode(Path(audio_root) / record.audio_path))
            signal = dsp.trim_edge_silence(decoded, trim_threshold_dbfs, trim_frame_ms)
        return record.utterance_id, proxy_score(signal)

    todo = [r for r in records if r.quality_score is None]
    if jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            computed = dict(pool.map(compute, todo))
    else:
        computed = dict(compute(r) for r in todo)

    for record in records:
        if record.utterance_id in computed:
            score = computed[record.utterance_id]
            scores[record.utterance_id] = score
            out.append(replace(record, quality_score=score.value))
        else:
            scores[record.utterance_id] = QualityScore(
                value=record.quality_score, source="proxy"
            )
            out.append(record)
    return ScoreResult(records=out, scores=scores, missing=missing)


def speaker_stats(
    records: Sequence[UtteranceRecord],
) -> dict[str, tuple[float, float] | None]:
    """Per-speaker (mean, population variance) of utterance scores.

    Speakers with any unscored utterance map to None: partial means would
    bias speaker-level selection.
    """
    groups: dict[str, list[float | None]] = {}
    for record in records:
        groups.setdefault(record.speaker_id, []).append(record.quality_score)
    stats: dict[str, tuple[float, float] | None] = {}
    for speaker_id, values in groups.items():
        if any(v is None for v in values):
            stats[speaker_id] = None
            continue
        mean = math.fsum(values) / len(values)
        variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
        stats[speaker_id] = (mean, variance)
    return stats


def _intake(records: Iterable[UtteranceRecord]) -> list[UtteranceRecord]:
    ordered = sorted(records, key=lambda r: r.utterance_id)
    seen: set[str] = set()
    for record in ordered:
        if record.utterance_id in seen:
            raise FormatError(f"duplicate utterance_id: {record.utterance_id}")
        seen.add(record.utterance_id)
    return ordered


def run_pipeline(
    records: Iterable[UtteranceRecord],
    config: CurationConfig,
    audio_root: str | Path | None = None,
    external_scores: Mapping[str, QualityScore] | None = None,
    jobs: int = 1,
) -> tuple[list[UtteranceRecord], CurationReport]:
    """Run the full selection pipeline and build its report.

    Records already carrying durations skip decoding; records already
    carrying scores skip scoring. Any stage failure raises
    PipelineStageError naming the stage and offending ids.
    """
    config.validate()
    current = _intake(records)
    stages: list[StageCount] = []
    warnings: dict[str, int] = {}

    def run_stage(name, fn):
        n_in = len(current)
        try:
            result = fn()
        except PipelineStageError:
            raise
        except (ValidationError, FormatError, FileNotFoundError, OSError) as exc:
            raise PipelineStageError(name, str(exc)) from exc
        stages.append(StageCount(stage=name, records_in=n_in, records_out=len(result)))
        return result

    # scan
    signals: dict[str, dsp.Signal] = {}

    def scan_stage():
        nonlocal signals
        todo = [r for r in current if r.duration_s is None]
        if not todo:
            return list(current)
        if audio_root is None:
            raise PipelineStageError(
                "scan", "records need decoding but no audio_root was given",
                [r.utterance_id for r in todo[:20]],
            )
        keep = config.score_source == "proxy"
        scan = scan_records(todo, audio_root, jobs=jobs, keep_signals=keep)
        if scan.dropped_empty:
            warnings["scan_dropped_silent"] = len(scan.dropped_empty)
        signals = scan.signals
        scanned = {r.utterance_id: r for r in scan.records}
        dropped = set(scan.dropped_empty)
        return [
            scanned.get(r.utterance_id, r)
            for r in current
            if r.utterance_id not in dropped
        ]

    current = run_stage("scan", scan_stage)
    current = run_stage(
        "max_utterance_duration",
        lambda: filter_max_utterance_duration(current, config.max_utterance_duration_s),
    )

    def score_stage():
        result = score_records(
            current,
            source=config.score_source,
            audio_root=audio_root,
            external_scores=external_scores,
            signals=signals,
            jobs=jobs,
        )
        return result.records

    current = run_stage("score", score_stage)
    stats = speaker_stats(current)

    def threshold_stage():
        if config.score_threshold is None:
            return list(current)
        if config.threshold_level == "utterance":
            return filter_by_utterance_score(current, config.score_threshold)
        means = {s: st[0] for s, st in stats.items() if st is not None}
        return filter_by_speaker_score(current, means, config.score_threshold)

    current = run_stage("score_threshold", threshold_stage)

    def lid_stage():
        if config.lid_min_prob is None:
            return list(current)
        kept, unannotated = filter_by_lid(current, config.lid_min_prob)
        if unannotated:
            warnings["lid_unannotated"] = unannotated
        return kept

    current = run_stage("lid", lid_stage)

    def cer_stage():
        if config.max_cer is None:
            return list(current)
        kept, unannotated = filter_by_cer(current, config.max_cer)
        if unannotated:
            warnings["cer_unannotated"] = unannotated
        return kept

    current = run_stage("cer", cer_stage)
    current = run_stage(
        "speaker_cap",
        lambda: cap_speaker_durations(
            current,
            config.min_speaker_duration_s,
            config.max_speaker_duration_s,
            config.rng_seed,
        ),
    )

    final = [
        replace(
            r,
            speaker_score=(
                stats.get(r.speaker_id)[0] if stats.get(r.speaker_id) is not None else None
            ),
        )
        for r in current
    ]
    report = _build_report(final, stages, stats, config, warnings)
    return final, report


def _build_report(
    final: Sequence[UtteranceRecord],
    stages: list[StageCount],
    stats: dict[str, tuple[float, float] | None],
    config: CurationConfig,
    warnings: dict[str, int],
) -> CurationReport:
    by_speaker: dict[str, list[UtteranceRecord]] = {}
    for record in final:
        by_speaker.setdefault(record.speaker_id, []).append(record)
    rows = []
    for speaker_id in sorted(by_speaker):
        members = by_speaker[speaker_id]
        st = stats.get(speaker_id)
        rows.append(
            SpeakerRow(
                speaker_id=speaker_id,
                mean_score=st[0] if st is not None else None,
                score_variance=st[1] if st is not None else None,
                kept_duration_s=math.fsum(m.duration_s for m in members),
                kept_utterances=len(members),
            )
        )
    total_h = math.fsum(r.duration_s for r in final) / 3600.0
    return CurationReport(
        stages=stages,
        total_duration_h=total_h,
        speaker_count=len(by_speaker),
        speakers=rows,
        score_source=config.score_source,
        warnings=warnings,
    )


def prepare_records(
    records: Iterable[UtteranceRecord],
    config: CurationConfig,
    audio_root: str | Path | None = None,
    external_scores: Mapping[str, QualityScore] | None = None,
    jobs: int = 1,
) -> list[UtteranceRecord]:
    """Annotate durations and scores once, so repeated pipeline runs skip audio."""
    current = _intake(records)
    todo = [r for r in current if r.duration_s is None]
    signals: dict[str, dsp.Signal] = {}
    if todo:
        if audio_root is None:
            raise ValidationError("records need decoding but no audio_root was given")
        scan = scan_records(
            todo, audio_root, jobs=jobs, keep_signals=config.score_source == "proxy"
        )
        signals = scan.signals
        scanned = {r.utterance_id: r for r in scan.records}
        dropped = set(scan.dropped_empty)
        current = [
            scanned.get(r.utterance_id, r)
            for r in current
            if r.utterance_id not in dropped
        ]
    result = score_records(
        current,
        source=config.score_source,
        audio_root=audio_root,
        external_scores=external_scores,
        signals=signals,
        jobs=jobs,
    )
    return result.records


def threshold_sweep(
    records: Iterable[UtteranceRecord],
    config: CurationConfig,
    thresholds: Sequence[float | None] | None = None,
    audio_root: str | Path | None = None,
    external_scores: Mapping[str, QualityScore] | None = None,
    jobs: int = 1,
) -> list[SweepRow]:
    """Run the pipeline once per threshold; rows give duration and speakers."""
    if thresholds is None:
        thresholds = DEFAULT_THRESHOLDS
    prepared = prepare_records(
        records, config, audio_root=audio_root, external_scores=external_scores, jobs=jobs
    )
    rows = []
    for threshold in thresholds:
        _, report = run_pipeline(prepared, replace(config, score_threshold=threshold))
        rows.append(
            SweepRow(
                threshold=threshold,
                duration_h=report.total_duration_h,
                speaker_count=report.speaker_count,
            )
        )
    return rows


def sweep_tsv(rows: Sequence[SweepRow]) -> str:
    lines = ["threshold\tduration_h\tspeaker_count"]
    for row in rows:
        lines.append(f"{row.label}\t{row.duration_h:.6f}\t{row.speaker_count}")
    return "\n".join(lines) + "\n"


def sweep_table(rows: Sequence[SweepRow]) -> str:
    """Aligned human-readable table: threshold, duration (h), speakers."""
    header = f"{'threshold':<12}{'duration_h':>12}{'speakers':>10}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row.label:<12}{row.duration_h:>12.2f}{row.speaker_count:>10}")
    return "\n".join(lines)


def parse_config_text(text: str) -> dict[str, object]:
    """Parse a flat key = value config file into CurationConfig kwargs."""
    none_words = {"none", "null", ""}
    values: dict[str, object] = {}
    field_types = {
        "score_threshold": float,
        "threshold_level": str,
        "min_speaker_duration_s": float,
        "max_speaker_duration_s": float,
        "max_utterance_duration_s": float,
        "lid_min_prob": float,
        "max_cer": float,
        "rng_seed": int,
        "score_source": str,
    }
    for line_no, line in enumerate(split_lines(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FormatError(f"config line {line_no}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in field_types:
            raise FormatError(f"config line {line_no}: unknown key {key!r}")
        if raw.lower() in none_words:
            values[key] = None
            continue
        try:
            values[key] = field_types[key](raw)
        except ValueError as exc:
            raise FormatError(f"config line {line_no}: bad value for {key}: {raw!r}") from exc
    return values


def load_config_file(path: str | Path) -> dict[str, object]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))

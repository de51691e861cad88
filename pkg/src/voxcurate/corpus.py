"""Corpus manifests: parse crowd-corpus TSVs, join annotations, group speakers.

Two on-disk formats live here. The ingest format is the Common Voice style
TSV (header row, at least client_id/path/sentence). The curated format is
line-delimited JSON with a leading comment header, which round-trips every
record field exactly (transcripts may contain tabs and newlines).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

from .errors import FormatError, ValidationError

MANIFEST_HEADER = "# voxcurate curated manifest v1"

REQUIRED_COLUMNS = ("client_id", "path", "sentence")
OPTIONAL_COLUMNS = ("up_votes", "down_votes", "age", "gender", "accents")

# Keys always present on a curated manifest line, in this order.
CURATED_KEYS = (
    "utterance_id",
    "speaker_id",
    "audio_path",
    "transcript",
    "duration_s",
    "quality_score",
    "speaker_score",
)


@dataclass
class UtteranceRecord:
    """One corpus row plus optional derived annotations."""

    utterance_id: str
    speaker_id: str
    audio_path: str
    transcript: str
    up_votes: int = 0
    down_votes: int = 0
    age: str | None = None
    gender: str | None = None
    accent: str | None = None
    raw_duration_s: float | None = None
    duration_s: float | None = None
    quality_score: float | None = None
    speaker_score: float | None = None
    lid_prob: float | None = None
    asr_hypothesis: str | None = None

    def validate(self) -> None:
        if not self.utterance_id:
            raise ValidationError("utterance_id must be non-empty")
        if self.duration_s is not None and not self.duration_s > 0:
            raise ValidationError(
                f"{self.utterance_id}: duration_s must be > 0, got {self.duration_s}"
            )
        if self.quality_score is not None and not 1.0 <= self.quality_score <= 5.0:
            raise ValidationError(
                f"{self.utterance_id}: quality_score {self.quality_score} outside [1, 5]"
            )
        if self.lid_prob is not None and not 0.0 <= self.lid_prob <= 1.0:
            raise ValidationError(
                f"{self.utterance_id}: lid_prob {self.lid_prob} outside [0, 1]"
            )
        if self.up_votes < 0 or self.down_votes < 0:
            raise ValidationError(f"{self.utterance_id}: vote counts must be >= 0")


@dataclass
class SpeakerProfile:
    """Aggregate view over one speaker's utterances."""

    speaker_id: str
    utterances: list[str]
    total_duration_s: float
    mean_score: float | None = None


@dataclass
class ParseResult:
    records: list[UtteranceRecord]
    skipped_rows: int = 0


@dataclass
class JoinResult:
    records: list[UtteranceRecord]
    unmatched: dict[str, list[str]] = field(default_factory=dict)


def utterance_id_for(audio_path: str) -> str:
    """Stable utterance id: the audio filename without its extension."""
    return Path(audio_path).stem


def split_lines(text: str) -> list[str]:
    """Split on newlines only; unlike splitlines() this never breaks a line
    at characters like U+0085 that may legitimately occur inside a field."""
    lines = [line.rstrip("\r") for line in text.split("\n")]
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def parse_cv_manifest(tsv_text: str, audio_root: str | Path | None = None) -> ParseResult:
    """Parse a Common Voice style TSV manifest.

    Rows with an empty client_id, path or sentence are skipped and counted.
    Unknown extra columns are ignored; column sets drift across corpus
    versions. audio_root is carried by callers that later decode audio; the
    stored audio_path stays relative.
    """
    del audio_root  # paths stay relative; decoding resolves against a root
    lines = split_lines(tsv_text)
    if not lines:
        raise FormatError("manifest is empty: missing header row")
    header = lines[0].split("\t")
    col_index = {name: i for i, name in enumerate(header)}
    for required in REQUIRED_COLUMNS:
        if required not in col_index:
            raise FormatError(f"manifest is missing required column '{required}'")

    def cell(row: list[str], name: str) -> str:
        idx = col_index.get(name)
        if idx is None or idx >= len(row):
            return ""
        return row[idx].strip()

    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    skipped = 0
    for line in lines[1:]:
        if not line.strip():
            continue
        row = line.split("\t")
        client_id, path, sentence = (cell(row, c) for c in REQUIRED_COLUMNS)
        if not client_id or not path or not sentence:
            skipped += 1
            continue
        utterance_id = utterance_id_for(path)
        if utterance_id in seen:
            raise FormatError(f"duplicate utterance_id in manifest: {utterance_id}")
        seen.add(utterance_id)
        records.append(
            UtteranceRecord(
                utterance_id=utterance_id,
                speaker_id=client_id,
                audio_path=path,
                transcript=sentence,
                up_votes=_parse_votes(cell(row, "up_votes")),
                down_votes=_parse_votes(cell(row, "down_votes")),
                age=cell(row, "age") or None,
                gender=cell(row, "gender") or None,
                accent=cell(row, "accents") or None,
            )
        )
    return ParseResult(records=records, skipped_rows=skipped)


def _parse_votes(text: str) -> int:
    if not text:
        return 0
    try:
        value = int(text)
    except ValueError as exc:
        raise FormatError(f"vote count is not an integer: {text!r}") from exc
    if value < 0:
        raise FormatError(f"vote count must be non-negative: {value}")
    return value


def load_cv_manifest(path: str | Path) -> ParseResult:
    """Read and parse a TSV manifest file; bad encodings raise FormatError."""
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"manifest {path} is not valid UTF-8: {exc}") from exc
    return parse_cv_manifest(text)


def join_annotations(
    records: Iterable[UtteranceRecord],
    scores: Mapping[str, float] | None = None,
    lid_probs: Mapping[str, float] | None = None,
    hypotheses: Mapping[str, str] | None = None,
) -> JoinResult:
    """Attach per-utterance annotations keyed by utterance_id.

    Records without a matching key keep their fields absent; annotation keys
    that match no record are reported per annotation kind. Out-of-domain
    values raise ValidationError naming the offending key.
    """
    records = list(records)
    by_id = {r.utterance_id for r in records}
    unmatched: dict[str, list[str]] = {}

    if scores is not None:
        for key, value in scores.items():
            if not 1.0 <= float(value) <= 5.0:
                raise ValidationError(f"score for '{key}' outside [1, 5]: {value}")
        unmatched_keys = sorted(set(scores) - by_id)
        if unmatched_keys:
            unmatched["scores"] = unmatched_keys
    if lid_probs is not None:
        for key, value in lid_probs.items():
            if not 0.0 <= float(value) <= 1.0:
                raise ValidationError(f"LID probability for '{key}' outside [0, 1]: {value}")
        unmatched_keys = sorted(set(lid_probs) - by_id)
        if unmatched_keys:
            unmatched["lid"] = unmatched_keys
    if hypotheses is not None:
        unmatched_keys = sorted(set(hypotheses) - by_id)
        if unmatched_keys:
            unmatched["hypotheses"] = unmatched_keys

    out: list[UtteranceRecord] = []
    for record in records:
        changes: dict[str, object] = {}
        if scores is not None and record.utterance_id in scores:
            changes["quality_score"] = float(scores[record.utterance_id])
        if lid_probs is not None and record.utterance_id in lid_probs:
            changes["lid_prob"] = float(lid_probs[record.utterance_id])
        if hypotheses is not None and record.utterance_id in hypotheses:
            changes["asr_hypothesis"] = hypotheses[record.utterance_id]
        out.append(replace(record, **changes) if changes else record)
    return JoinResult(records=out, unmatched=unmatched)


def group_by_speaker(records: Iterable[UtteranceRecord]) -> list[SpeakerProfile]:
    """One profile per speaker, sorted by speaker_id.

    Every record must carry duration_s. mean_score is present iff every
    member utterance is scored.
    """
    records = list(records)
    missing = [r.utterance_id for r in records if r.duration_s is None]
    if missing:
        raise ValidationError(
            f"records without duration_s: {', '.join(sorted(missing)[:20])}"
        )
    groups: dict[str, list[UtteranceRecord]] = {}
    for record in records:
        groups.setdefault(record.speaker_id, []).append(record)

    profiles = []
    for speaker_id in sorted(groups):
        members = groups[speaker_id]
        ids = sorted(m.utterance_id for m in members)
        total = math.fsum(m.duration_s for m in members)  # type: ignore[misc]
        scores = [m.quality_score for m in members]
        mean = (
            math.fsum(scores) / len(scores)  # type: ignore[arg-type]
            if all(s is not None for s in scores)
            else None
        )
        profiles.append(
            SpeakerProfile(
                speaker_id=speaker_id,
                utterances=ids,
                total_duration_s=total,
                mean_score=mean,
            )
        )
    return profiles


_FIELD_NAMES = tuple(f.name for f in fields(UtteranceRecord))


def _record_to_obj(record: UtteranceRecord) -> dict:
    obj: dict[str, object] = {}
    for key in CURATED_KEYS:
        obj[key] = getattr(record, key)
    for name in _FIELD_NAMES:
        if name in CURATED_KEYS:
            continue
        value = getattr(record, name)
        if name in ("up_votes", "down_votes"):
            if value:
                obj[name] = value
        elif value is not None:
            obj[name] = value
    return obj


def _record_from_obj(obj: dict, line_no: int) -> UtteranceRecord:
    unknown = set(obj) - set(_FIELD_NAMES)
    if unknown:
        raise FormatError(f"line {line_no}: unknown manifest keys {sorted(unknown)}")
    missing = [k for k in CURATED_KEYS if k not in obj]
    if missing:
        raise FormatError(f"line {line_no}: missing manifest keys {missing}")
    record = UtteranceRecord(**obj)
    record.validate()
    return record


def manifest_to_text(records: Iterable[UtteranceRecord]) -> str:
    lines = [MANIFEST_HEADER]
    for record in records:
        lines.append(json.dumps(_record_to_obj(record), ensure_ascii=False, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_manifest(records: Iterable[UtteranceRecord], destination: str | Path) -> int:
    """Write records in the curated manifest format; returns bytes written."""
    data = manifest_to_text(records).encode("utf-8")
    Path(destination).write_bytes(data)
    return len(data)


def manifest_from_text(text: str) -> list[UtteranceRecord]:
    lines = split_lines(text)
    if not lines or not lines[0].startswith("#"):
        raise FormatError("curated manifest must start with a '#' header line")
    records = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {line_no}: invalid JSON: {exc}") from exc
        record = _record_from_obj(obj, line_no)
        if record.utterance_id in seen:
            raise FormatError(f"line {line_no}: duplicate utterance_id {record.utterance_id}")
        seen.add(record.utterance_id)
        records.append(record)
    return records


def read_manifest(source: str | Path) -> list[UtteranceRecord]:
    """Read a curated manifest written by write_manifest."""
    try:
        text = Path(source).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"manifest {source} is not valid UTF-8: {exc}") from exc
    return manifest_from_text(text)


def load_keyed_values(path: str | Path, kind: str = "value") -> dict[str, float]:
    """Load a two-column TSV of utterance_id and decimal value."""
    result: dict[str, float] = {}
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
            result[key] = float(raw)
        except ValueError as exc:
            raise FormatError(f"{path} line {line_no}: {kind} is not a number: {raw!r}") from exc
    return result


def load_keyed_text(path: str | Path) -> dict[str, str]:
    """Load a two-column TSV of utterance_id and free text (e.g. ASR hypotheses)."""
    result: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(split_lines(text), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise FormatError(f"{path} line {line_no}: expected 2 tab-separated columns")
        result[parts[0].strip()] = parts[1]
    return result

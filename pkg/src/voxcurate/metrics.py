"""Objective evaluation primitives: CER, embedding similarity, bootstrap CIs.

The equivalence test is a two-sided bootstrap of the mean difference; the
choice of test is isolated here and labelled in outputs, since reporting
only says which systems are statistically indistinguishable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import split_lines
from .errors import FormatError, ValidationError

EMBEDDING_DIM = 256
BOOTSTRAP_RESAMPLES = 10_000
EQUIVALENCE_ALPHA = 0.05
EQUIVALENCE_METHOD = "two-sided bootstrap of mean difference"


@dataclass
class Embedding:
    """A speaker embedding vector, optionally L2-normalized."""

    vector: np.ndarray
    normalized: bool = False


@dataclass
class MetricSummary:
    """Mean with a 95 % bootstrap confidence interval."""

    mean: float
    ci_low: float
    ci_high: float
    n: int


@dataclass
class EquivalenceResult:
    equivalent: bool
    p: float
    method: str = EQUIVALENCE_METHOD


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def normalize_text(text: str) -> str:
    """Lowercase, collapse whitespace runs to single spaces, strip edges."""
    return " ".join(text.lower().split())


def cer(hypothesis: str, reference: str, normalize: bool = True) -> float:
    """Character error rate: edit distance over reference length."""
    hyp = normalize_text(hypothesis) if normalize else hypothesis
    ref = normalize_text(reference) if normalize else reference
    if not ref:
        raise ValidationError("CER reference is empty after normalization")
    return levenshtein(hyp, ref) / len(ref)


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Cosine of the angle between two embeddings, in [-1, 1]."""
    va = np.asarray(a.vector, dtype=np.float64)
    vb = np.asarray(b.vector, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValidationError(f"embedding dimensions differ: {va.shape} vs {vb.shape}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValidationError("cosine similarity is undefined for a zero vector")
    value = float(np.dot(va, vb) / (norm_a * norm_b))
    return min(max(value, -1.0), 1.0)


def bootstrap_summary(
    values: Sequence[float], n_resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0
) -> MetricSummary:
    """Mean plus 2.5/97.5 percentile CI of resampled means; seed-deterministic."""
    data = np.asarray(list(values), dtype=np.float64)
    if len(data) == 0:
        raise ValidationError("bootstrap_summary needs at least one value")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(data), size=(n_resamples, len(data)))
    means = data[idx].mean(axis=1)
    mean = float(data.mean())
    ci_low = float(np.percentile(means, 2.5))
    ci_high = float(np.percentile(means, 97.5))
    # Percentile CIs of resampled means bracket the sample mean in all
    # non-degenerate cases; pin the documented invariant exactly.
    return MetricSummary(
        mean=mean, ci_low=min(ci_low, mean), ci_high=max(ci_high, mean), n=len(data)
    )


def equivalence_test(
    samples_a: Sequence[float],
    samples_b: Sequence[float],
    alpha: float = EQUIVALENCE_ALPHA,
    seed: int = 0,
    n_resamples: int = BOOTSTRAP_RESAMPLES,
) -> EquivalenceResult:
    """Two-sided bootstrap test of the mean difference.

    p is the (add-one corrected) fraction of resampled mean differences on
    the far side of zero, doubled; systems are equivalent iff p >= alpha.
    """
    a = np.asarray(list(samples_a), dtype=np.float64)
    b = np.asarray(list(samples_b), dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("equivalence_test needs non-empty sample sets")
    rng = np.random.default_rng(seed)
    idx_a = rng.integers(0, len(a), size=(n_resamples, len(a)))
    idx_b = rng.integers(0, len(b), size=(n_resamples, len(b)))
    diffs = a[idx_a].mean(axis=1) - b[idx_b].mean(axis=1)
    at_most = int(np.count_nonzero(diffs <= 0.0))
    at_least = int(np.count_nonzero(diffs >= 0.0))
    p = 2.0 * (min(at_most, at_least) + 1) / (n_resamples + 1)
    p = min(p, 1.0)
    return EquivalenceResult(equivalent=p >= alpha, p=p)


def wvmos_aggregate(
    score_map: Mapping[str, float], n_resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0
) -> MetricSummary:
    """Bootstrap summary over a map of utterance scores (key-sorted for determinism)."""
    values = [float(score_map[k]) for k in sorted(score_map)]
    return bootstrap_summary(values, n_resamples=n_resamples, seed=seed)


def load_embeddings(
    path: str | Path, normalize: bool = False, dim: int = EMBEDDING_DIM
) -> dict[str, Embedding]:
    """Load line-delimited {utterance_id, vector} embeddings, validating dimension."""
    embeddings: dict[str, Embedding] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(split_lines(text), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path} line {line_no}: invalid JSON: {exc}") from exc
        if "utterance_id" not in obj or "vector" not in obj:
            raise FormatError(f"{path} line {line_no}: needs utterance_id and vector")
        vector = np.asarray(obj["vector"], dtype=np.float64)
        if vector.shape != (dim,):
            raise FormatError(
                f"{path} line {line_no}: expected {dim}-dimensional vector, got {vector.shape}"
            )
        if normalize:
            norm = float(np.linalg.norm(vector))
            if norm == 0.0:
                raise ValidationError(f"{path} line {line_no}: cannot normalize zero vector")
            vector = vector / norm
        embeddings[obj["utterance_id"]] = Embedding(vector=vector, normalized=normalize)
    return embeddings


def summary_tsv(rows: Iterable[tuple[str, str, MetricSummary]]) -> str:
    """Metric output rows: metric, group, mean, ci_low, ci_high, n."""
    lines = ["metric\tgroup\tmean\tci_low\tci_high\tn"]
    for metric, group, summary in rows:
        lines.append(
            f"{metric}\t{group}\t{summary.mean:.6f}\t{summary.ci_low:.6f}"
            f"\t{summary.ci_high:.6f}\t{summary.n}"
        )
    return "\n".join(lines) + "\n"

"""Durable state for listening tests: definitions, sessions, responses.

Everything lives in one append-only JSONL event log. Reads work off the
in-memory snapshot rebuilt by replaying the log at startup, so a restart
loses nothing that was acknowledged. Appends are serialized through a
single lock (single-writer contract).
"""

from __future__ import annotations

import json
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..corpus import split_lines
from ..errors import FormatError, ValidationError
from ..metrics import MetricSummary, bootstrap_summary
from ..seeding import derived_seed

KINDS = ("mos", "smos", "minimal_pair")
CHOICES = ("word", "confusable", "neither")
SCALE_MIN, SCALE_MAX = 1, 5


class DuplicateResponseError(Exception):
    """The (session_id, stimulus_id) pair was already answered."""


class NotFoundError(KeyError):
    """Unknown test, session or stimulus."""


@dataclass(frozen=True)
class Stimulus:
    stimulus_id: str
    kind: str
    audio_path: str
    reference_audio_path: str | None = None
    pair: tuple[str, str] | None = None  # (word, confusable)
    correct_word: str | None = None

    def validate(self) -> None:
        if not self.stimulus_id:
            raise ValidationError("stimulus_id must be non-empty")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown stimulus kind: {self.kind!r}")
        if self.kind == "smos" and not self.reference_audio_path:
            raise ValidationError(
                f"smos stimulus {self.stimulus_id} needs reference_audio_path"
            )
        if self.kind == "minimal_pair":
            if not self.pair or len(self.pair) != 2:
                raise ValidationError(
                    f"minimal_pair stimulus {self.stimulus_id} needs a word pair"
                )
            if self.correct_word not in self.pair:
                raise ValidationError(
                    f"minimal_pair stimulus {self.stimulus_id}: correct_word must be "
                    "one of the pair"
                )

    @staticmethod
    def from_obj(obj: dict) -> "Stimulus":
        pair = obj.get("pair")
        if isinstance(pair, dict):
            pair = (pair.get("word", ""), pair.get("confusable", ""))
        elif isinstance(pair, (list, tuple)):
            pair = tuple(pair)
        stimulus = Stimulus(
            stimulus_id=str(obj.get("stimulus_id", "")),
            kind=str(obj.get("kind", "")),
            audio_path=str(obj.get("audio_path", "")),
            reference_audio_path=obj.get("reference_audio_path"),
            pair=pair,
            correct_word=obj.get("correct_word"),
        )
        stimulus.validate()
        return stimulus

    def to_obj(self) -> dict:
        obj: dict[str, object] = {
            "stimulus_id": self.stimulus_id,
            "kind": self.kind,
            "audio_path": self.audio_path,
        }
        if self.reference_audio_path is not None:
            obj["reference_audio_path"] = self.reference_audio_path
        if self.pair is not None:
            obj["pair"] = {"word": self.pair[0], "confusable": self.pair[1]}
        if self.correct_word is not None:
            obj["correct_word"] = self.correct_word
        return obj


@dataclass
class TestDefinition:
    test_id: str
    seed: int
    stimuli: list[Stimulus]

    def stimulus(self, stimulus_id: str) -> Stimulus:
        for stimulus in self.stimuli:
            if stimulus.stimulus_id == stimulus_id:
                return stimulus
        raise NotFoundError(stimulus_id)


@dataclass
class Session:
    session_id: str
    test_id: str
    playlist: list[str]


@dataclass
class RaterResponse:
    session_id: str
    stimulus_id: str
    kind: str
    value: int | None = None
    choice: str | None = None
    timestamp: float = 0.0

    def validate(self) -> None:
        if self.kind in ("mos", "smos"):
            if self.choice is not None:
                raise ValidationError(f"{self.kind} responses carry a value, not a choice")
            if not isinstance(self.value, int) or isinstance(self.value, bool):
                raise ValidationError(f"{self.kind} value must be an integer")
            if not SCALE_MIN <= self.value <= SCALE_MAX:
                raise ValidationError(
                    f"{self.kind} value {self.value} outside [{SCALE_MIN}, {SCALE_MAX}]"
                )
        elif self.kind == "minimal_pair":
            if self.value is not None:
                raise ValidationError("minimal_pair responses carry a choice, not a value")
            if self.choice not in CHOICES:
                raise ValidationError(
                    f"minimal_pair choice must be one of {CHOICES}, got {self.choice!r}"
                )
        else:
            raise ValidationError(f"unknown response kind: {self.kind!r}")


@dataclass
class TestResults:
    mos: MetricSummary | None
    smos: MetricSummary | None
    intelligibility: float | None
    intelligibility_n: int

    def to_obj(self) -> dict:
        def summary_obj(s: MetricSummary | None):
            if s is None:
                return None
            return {"mean": s.mean, "ci": [s.ci_low, s.ci_high], "n": s.n}

        return {
            "mos": summary_obj(self.mos),
            "smos": summary_obj(self.smos),
            "intelligibility": self.intelligibility,
            "intelligibility_n": self.intelligibility_n,
        }


@dataclass
class _TestState:
    definition: TestDefinition
    session_count: int = 0
    responses: list[RaterResponse] = field(default_factory=list)


class ListeningStore:
    """Event-sourced store for one data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "events.jsonl"
        # Reentrant so each command (validate + append) is atomic as a whole:
        # the single-writer contract.
        self._lock = threading.RLock()
        self._tests: dict[str, _TestState] = {}
        self._sessions: dict[str, Session] = {}
        self._answered: set[tuple[str, str]] = set()
        self._replay()

    # -- persistence ------------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        with self.log_path.open("r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(
                        f"{self.log_path} line {line_no}: invalid JSON: {exc}"
                    ) from exc
                self._apply(event)

    def _apply(self, event: dict) -> None:
        etype = event.get("type")
        if etype == "test":
            definition = TestDefinition(
                test_id=event["test_id"],
                seed=int(event["seed"]),
                stimuli=[Stimulus.from_obj(o) for o in event["stimuli"]],
            )
            self._tests[definition.test_id] = _TestState(definition=definition)
        elif etype == "session":
            session = Session(
                session_id=event["session_id"],
                test_id=event["test_id"],
                playlist=list(event["playlist"]),
            )
            self._sessions[session.session_id] = session
            self._tests[session.test_id].session_count += 1
        elif etype == "response":
            response = RaterResponse(
                session_id=event["session_id"],
                stimulus_id=event["stimulus_id"],
                kind=event["kind"],
                value=event.get("value"),
                choice=event.get("choice"),
                timestamp=float(event.get("timestamp", 0.0)),
            )
            session = self._sessions[response.session_id]
            self._tests[session.test_id].responses.append(response)
            self._answered.add((response.session_id, response.stimulus_id))
        else:
            raise FormatError(f"unknown event type in log: {etype!r}")

    def _append(self, event: dict) -> None:
        line = json.dumps(event, ensure_ascii=False, separators=(",", ":"))
        with self._lock:
            with self.log_path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())
            self._apply(event)

    # -- commands ---------------------------------------------------------

    def create_test(
        self, stimuli: list[Stimulus], test_id: str | None = None, seed: int = 0
    ) -> str:
        ids = [s.stimulus_id for s in stimuli]
        if len(set(ids)) != len(ids):
            raise ValidationError("stimulus_ids must be unique within a test")
        with self._lock:
            known = {
                s.stimulus_id
                for state in self._tests.values()
                for s in state.definition.stimuli
            }
            clashes = sorted(set(ids) & known)
            if clashes:
                raise ValidationError(
                    f"stimulus_ids already used by another test: {', '.join(clashes)}"
                )
            if test_id is None:
                test_id = f"test-{len(self._tests) + 1:04d}"
            if test_id in self._tests:
                raise ValidationError(f"test_id already exists: {test_id}")
            self._append(
                {
                    "type": "test",
                    "test_id": test_id,
                    "seed": seed,
                    "stimuli": [s.to_obj() for s in stimuli],
                }
            )
        return test_id

    def create_session(self, test_id: str) -> Session:
        """New session with a seeded per-session shuffle of the test's stimuli."""
        with self._lock:
            state = self._tests.get(test_id)
            if state is None:
                raise NotFoundError(test_id)
            if not state.definition.stimuli:
                raise ValidationError(f"test {test_id} has no stimuli")
            counter = state.session_count + 1
            playlist = [s.stimulus_id for s in state.definition.stimuli]
            rng = random.Random(derived_seed(state.definition.seed, "session", counter))
            rng.shuffle(playlist)
            session = Session(
                session_id=f"{test_id}-s{counter:04d}",
                test_id=test_id,
                playlist=playlist,
            )
            self._append(
                {
                    "type": "session",
                    "session_id": session.session_id,
                    "test_id": test_id,
                    "playlist": playlist,
                }
            )
        return session

    def submit_response(self, response: RaterResponse) -> None:
        with self._lock:
            session = self._sessions.get(response.session_id)
            if session is None:
                raise NotFoundError(response.session_id)
            if response.stimulus_id not in session.playlist:
                raise ValidationError(
                    f"stimulus {response.stimulus_id} is not in session "
                    f"{response.session_id}'s playlist"
                )
            stimulus = self._tests[session.test_id].definition.stimulus(
                response.stimulus_id
            )
            if response.kind != stimulus.kind:
                raise ValidationError(
                    f"response kind {response.kind!r} does not match stimulus kind "
                    f"{stimulus.kind!r}"
                )
            response.validate()
            if (response.session_id, response.stimulus_id) in self._answered:
                raise DuplicateResponseError(
                    f"session {response.session_id} already answered "
                    f"{response.stimulus_id}"
                )
            if response.timestamp == 0.0:
                response.timestamp = time.time()
            self._append(
                {
                    "type": "response",
                    "session_id": response.session_id,
                    "stimulus_id": response.stimulus_id,
                    "kind": response.kind,
                    "value": response.value,
                    "choice": response.choice,
                    "timestamp": response.timestamp,
                }
            )

    # -- queries ----------------------------------------------------------

    def get_test(self, test_id: str) -> TestDefinition:
        state = self._tests.get(test_id)
        if state is None:
            raise NotFoundError(test_id)
        return state.definition

    def get_session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise NotFoundError(session_id)
        return session

    def find_stimulus(self, stimulus_id: str) -> Stimulus:
        for state in self._tests.values():
            for stimulus in state.definition.stimuli:
                if stimulus.stimulus_id == stimulus_id:
                    return stimulus
        raise NotFoundError(stimulus_id)

    def response_count(self, test_id: str) -> int:
        return len(self._tests[test_id].responses) if test_id in self._tests else 0

    def aggregate_results(self, test_id: str) -> TestResults:
        """MOS and S-MOS bootstrap summaries plus the intelligibility score.

        Intelligibility is the proportion of minimal-pair responses whose
        chosen word equals the stimulus's correct word; "neither" counts as
        incorrect.
        """
        state = self._tests.get(test_id)
        if state is None:
            raise NotFoundError(test_id)
        definition = state.definition
        mos_values: list[float] = []
        smos_values: list[float] = []
        pair_total = 0
        pair_correct = 0
        for response in state.responses:
            if response.kind == "mos":
                mos_values.append(float(response.value))
            elif response.kind == "smos":
                smos_values.append(float(response.value))
            else:
                pair_total += 1
                stimulus = definition.stimulus(response.stimulus_id)
                chosen = (
                    None
                    if response.choice == "neither"
                    else stimulus.pair[CHOICES.index(response.choice)]
                )
                if chosen is not None and chosen == stimulus.correct_word:
                    pair_correct += 1
        seed = derived_seed(definition.seed, "aggregate")
        mos = bootstrap_summary(mos_values, seed=seed) if mos_values else None
        smos = bootstrap_summary(smos_values, seed=seed) if smos_values else None
        intelligibility = pair_correct / pair_total if pair_total else None
        if intelligibility is not None and not math.isfinite(intelligibility):
            intelligibility = None
        return TestResults(
            mos=mos,
            smos=smos,
            intelligibility=intelligibility,
            intelligibility_n=pair_total,
        )


def load_test_definition_file(path: str | Path) -> list[Stimulus]:
    """Read a test definition: one stimulus object per line."""
    stimuli = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(split_lines(text), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path} line {line_no}: invalid JSON: {exc}") from exc
        stimuli.append(Stimulus.from_obj(obj))
    return stimuli


def ensure_test_from_file(
    store: ListeningStore, path: str | Path, test_id: str | None = None, seed: int = 0
) -> str:
    """Create the test defined by a stimulus file unless it already exists.

    The test id defaults to the file's stem, so reloading the same file on a
    service restart is a no-op.
    """
    path = Path(path)
    if test_id is None:
        test_id = path.stem
    try:
        store.get_test(test_id)
        return test_id
    except NotFoundError:
        pass
    return store.create_test(load_test_definition_file(path), test_id=test_id, seed=seed)

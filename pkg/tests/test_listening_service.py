"""Listening-test store and HTTP service: protocol, durability, aggregation."""

from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from voxcurate import dsp, metrics
from voxcurate.listening.service import create_app
from voxcurate.listening.store import (
    DuplicateResponseError,
    ListeningStore,
    RaterResponse,
    Stimulus,
)
from voxcurate.errors import ValidationError


def wav_fixture(path, seconds=0.2):
    t = np.arange(round(seconds * 16_000)) / 16_000
    dsp.write_wav(path, dsp.Signal(0.5 * np.sin(2 * np.pi * 440 * t), 16_000))


def mos_stimuli(n, prefix="m"):
    return [
        Stimulus(stimulus_id=f"{prefix}{i}", kind="mos", audio_path=f"{prefix}{i}.wav")
        for i in range(n)
    ]


def pair_stimuli(n, prefix="p"):
    return [
        Stimulus(
            stimulus_id=f"{prefix}{i}",
            kind="minimal_pair",
            audio_path=f"{prefix}{i}.wav",
            pair=("sea", "she"),
            correct_word="sea",
        )
        for i in range(n)
    ]


class TestStore:
    def test_session_playlist_is_permutation(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(5), seed=3)
        session = store.create_session(test_id)
        assert sorted(session.playlist) == [f"m{i}" for i in range(5)]

    def test_sessions_get_distinct_orders(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(8), seed=3)
        playlists = {tuple(store.create_session(test_id).playlist) for _ in range(4)}
        assert len(playlists) > 1

    def test_playlists_deterministic_across_restores(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(6), seed=5)
        first = store.create_session(test_id).playlist
        reopened = ListeningStore(tmp_path)
        assert reopened.get_session(f"{test_id}-s0001").playlist == first
        second = reopened.create_session(test_id).playlist
        fresh = ListeningStore(tmp_path)
        third_counter_session = fresh.create_session(test_id)
        assert third_counter_session.playlist != second or len(second) == 1

    def test_empty_test_session_rejected(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test([], seed=0)
        with pytest.raises(ValidationError, match="no stimuli"):
            store.create_session(test_id)

    def test_duplicate_submission_rejected(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(2), seed=0)
        session = store.create_session(test_id)
        response = RaterResponse(
            session_id=session.session_id, stimulus_id="m0", kind="mos", value=4
        )
        store.submit_response(response)
        with pytest.raises(DuplicateResponseError):
            store.submit_response(
                RaterResponse(
                    session_id=session.session_id, stimulus_id="m0", kind="mos", value=5
                )
            )

    def test_value_domain(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(1), seed=0)
        session = store.create_session(test_id)
        for bad in (0, 6, None):
            with pytest.raises(ValidationError):
                store.submit_response(
                    RaterResponse(
                        session_id=session.session_id,
                        stimulus_id="m0",
                        kind="mos",
                        value=bad,
                    )
                )

    def test_intelligibility_18_of_25(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(pair_stimuli(25), seed=1)
        session = store.create_session(test_id)
        for i in range(25):
            choice = "word" if i < 18 else ("confusable" if i % 2 else "neither")
            store.submit_response(
                RaterResponse(
                    session_id=session.session_id,
                    stimulus_id=f"p{i}",
                    kind="minimal_pair",
                    choice=choice,
                )
            )
        results = store.aggregate_results(test_id)
        assert results.intelligibility == pytest.approx(0.72)
        assert results.intelligibility_n == 25

    def test_all_correct_is_one(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(pair_stimuli(5), seed=1)
        session = store.create_session(test_id)
        for i in range(5):
            store.submit_response(
                RaterResponse(
                    session_id=session.session_id,
                    stimulus_id=f"p{i}",
                    kind="minimal_pair",
                    choice="word",
                )
            )
        assert store.aggregate_results(test_id).intelligibility == 1.0

    def test_mos_aggregation_matches_bootstrap(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(3), seed=2)
        session = store.create_session(test_id)
        for stimulus_id, value in zip(("m0", "m1", "m2"), (3, 4, 5)):
            store.submit_response(
                RaterResponse(
                    session_id=session.session_id,
                    stimulus_id=stimulus_id,
                    kind="mos",
                    value=value,
                )
            )
        results = store.aggregate_results(test_id)
        from voxcurate.seeding import derived_seed

        oracle = metrics.bootstrap_summary(
            [3.0, 4.0, 5.0], seed=derived_seed(2, "aggregate")
        )
        assert results.mos == oracle
        assert results.mos.mean == pytest.approx(4.0)
        assert results.smos is None

    def test_every_response_counted_once(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(10), seed=2)
        sessions = [store.create_session(test_id) for _ in range(3)]
        submitted = 0
        for session in sessions:
            for stimulus_id in session.playlist:
                store.submit_response(
                    RaterResponse(
                        session_id=session.session_id,
                        stimulus_id=stimulus_id,
                        kind="mos",
                        value=3,
                    )
                )
                submitted += 1
        assert store.aggregate_results(test_id).mos.n == submitted

    def test_durability_across_restart(self, tmp_path):
        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(100), seed=6)
        session = store.create_session(test_id)
        for i, stimulus_id in enumerate(session.playlist):
            store.submit_response(
                RaterResponse(
                    session_id=session.session_id,
                    stimulus_id=stimulus_id,
                    kind="mos",
                    value=(i % 5) + 1,
                )
            )
        before = store.aggregate_results(test_id)
        reopened = ListeningStore(tmp_path)
        after = reopened.aggregate_results(test_id)
        assert after == before
        assert after.mos.n == 100
        with pytest.raises(DuplicateResponseError):
            reopened.submit_response(
                RaterResponse(
                    session_id=session.session_id,
                    stimulus_id=session.playlist[0],
                    kind="mos",
                    value=1,
                )
            )


class TestHttpService:
    @pytest.fixture
    def client(self, tmp_path):
        wav_fixture(tmp_path / "gen.wav")
        wav_fixture(tmp_path / "ref.wav")
        app = create_app(tmp_path)
        return TestClient(app)

    def make_test(self, client, stimuli, seed=0):
        response = client.post(
            "/api/tests",
            json={"seed": seed, "stimuli": stimuli},
        )
        assert response.status_code == 201, response.text
        return response.json()["test_id"]

    def test_full_protocol(self, client):
        stimuli = [
            {"stimulus_id": "s-mos", "kind": "mos", "audio_path": "gen.wav"},
            {
                "stimulus_id": "s-smos",
                "kind": "smos",
                "audio_path": "gen.wav",
                "reference_audio_path": "ref.wav",
            },
            {
                "stimulus_id": "s-pair",
                "kind": "minimal_pair",
                "audio_path": "gen.wav",
                "pair": {"word": "sea", "confusable": "she"},
                "correct_word": "sea",
            },
        ]
        test_id = self.make_test(client, stimuli, seed=4)

        created = client.post("/api/sessions", json={"test_id": test_id})
        assert created.status_code == 201
        session = created.json()
        assert sorted(session["playlist"]) == ["s-mos", "s-pair", "s-smos"]

        audio = client.get("/api/stimuli/s-mos/audio")
        assert audio.status_code == 200
        assert audio.content[:4] == b"RIFF"
        reference = client.get("/api/stimuli/s-smos/reference")
        assert reference.status_code == 200
        assert client.get("/api/stimuli/s-mos/reference").status_code == 404

        submit = lambda payload: client.post("/api/responses", json=payload)
        assert submit(
            {"session_id": session["session_id"], "stimulus_id": "s-mos", "value": 4}
        ).status_code == 201
        assert submit(
            {"session_id": session["session_id"], "stimulus_id": "s-mos", "value": 4}
        ).status_code == 409
        assert submit(
            {"session_id": session["session_id"], "stimulus_id": "s-smos", "value": 0}
        ).status_code == 422
        assert submit(
            {"session_id": session["session_id"], "stimulus_id": "s-smos", "value": 3}
        ).status_code == 201
        assert submit(
            {"session_id": session["session_id"], "stimulus_id": "s-pair", "choice": "word"}
        ).status_code == 201

        results = client.get(f"/api/tests/{test_id}/results")
        assert results.status_code == 200
        payload = results.json()
        assert payload["mos"]["mean"] == 4.0
        assert payload["mos"]["n"] == 1
        assert payload["smos"]["mean"] == 3.0
        assert payload["intelligibility"] == 1.0
        assert payload["intelligibility_n"] == 1

    def test_unknown_ids_404(self, client):
        assert client.post("/api/sessions", json={"test_id": "missing"}).status_code == 404
        assert client.get("/api/stimuli/missing/audio").status_code == 404
        assert client.get("/api/tests/missing/results").status_code == 404
        assert (
            client.post(
                "/api/responses",
                json={"session_id": "nope", "stimulus_id": "m0", "value": 3},
            ).status_code
            == 404
        )

    def test_admin_token_enforced(self, tmp_path):
        wav_fixture(tmp_path / "gen.wav")
        app = create_app(tmp_path, admin_token="sesame")
        client = TestClient(app)
        body = {
            "stimuli": [{"stimulus_id": "x", "kind": "mos", "audio_path": "gen.wav"}]
        }
        assert client.post("/api/tests", json=body).status_code == 403
        ok = client.post("/api/tests", json=body, headers={"X-Admin-Token": "sesame"})
        assert ok.status_code == 201

    def test_duplicate_stimulus_ids_across_tests_rejected(self, client):
        stimuli = [{"stimulus_id": "shared", "kind": "mos", "audio_path": "gen.wav"}]
        self.make_test(client, stimuli)
        response = client.post("/api/tests", json={"stimuli": stimuli})
        assert response.status_code == 422

    def test_concurrent_sessions_and_submissions(self, tmp_path):
        from concurrent.futures import ThreadPoolExecutor

        store = ListeningStore(tmp_path)
        test_id = store.create_test(mos_stimuli(8), seed=4)
        with ThreadPoolExecutor(max_workers=8) as pool:
            sessions = list(pool.map(lambda _: store.create_session(test_id), range(8)))
        ids = [s.session_id for s in sessions]
        assert len(set(ids)) == len(ids)

        session = sessions[0]

        def blast(stimulus_id):
            try:
                store.submit_response(
                    RaterResponse(
                        session_id=session.session_id,
                        stimulus_id=stimulus_id,
                        kind="mos",
                        value=3,
                    )
                )
                return 1
            except DuplicateResponseError:
                return 0

        with ThreadPoolExecutor(max_workers=8) as pool:
            outcomes = list(pool.map(blast, session.playlist * 4))
        assert sum(outcomes) == len(session.playlist)
        assert store.aggregate_results(test_id).mos.n == len(session.playlist)

    def test_definition_file_loaded_once(self, tmp_path):
        from voxcurate.listening.store import ensure_test_from_file

        definition = tmp_path / "vowel-test.jsonl"
        definition.write_text(
            '{"stimulus_id": "v0", "kind": "mos", "audio_path": "gen.wav"}\n'
            '{"stimulus_id": "v1", "kind": "minimal_pair", "audio_path": "gen.wav",'
            ' "pair": {"word": "sea", "confusable": "she"}, "correct_word": "sea"}\n',
            encoding="utf-8",
        )
        store = ListeningStore(tmp_path / "data")
        assert ensure_test_from_file(store, definition) == "vowel-test"
        assert ensure_test_from_file(store, definition) == "vowel-test"  # idempotent
        definition_loaded = store.get_test("vowel-test")
        assert [s.stimulus_id for s in definition_loaded.stimuli] == ["v0", "v1"]
        assert definition_loaded.stimuli[1].pair == ("sea", "she")

    def test_results_survive_service_restart(self, tmp_path):
        wav_fixture(tmp_path / "gen.wav")
        client = TestClient(create_app(tmp_path))
        stimuli = [
            {"stimulus_id": f"r{i}", "kind": "mos", "audio_path": "gen.wav"}
            for i in range(5)
        ]
        test_id = client.post("/api/tests", json={"stimuli": stimuli}).json()["test_id"]
        session = client.post("/api/sessions", json={"test_id": test_id}).json()
        for stimulus_id in session["playlist"]:
            client.post(
                "/api/responses",
                json={
                    "session_id": session["session_id"],
                    "stimulus_id": stimulus_id,
                    "value": 5,
                },
            )
        before = client.get(f"/api/tests/{test_id}/results").json()
        restarted = TestClient(create_app(tmp_path))
        after = restarted.get(f"/api/tests/{test_id}/results").json()
        assert after == before
        assert after["mos"]["n"] == 5

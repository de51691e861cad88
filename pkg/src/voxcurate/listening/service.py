"""HTTP surface for the listening-test protocol.

Payloads are plain JSON-shaped dicts validated by the store, so domain
errors surface as 422, duplicates as 409 and unknown ids as 404. Audio is
served straight from disk below the data directory.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import Body, FastAPI, Header, HTTPException
from fastapi.responses import FileResponse, JSONResponse

from ..errors import ValidationError
from .store import (
    DuplicateResponseError,
    ListeningStore,
    NotFoundError,
    RaterResponse,
    Stimulus,
)

ADMIN_TOKEN_ENV = "VOXCURATE_ADMIN_TOKEN"


def create_app(
    data_dir: str | Path,
    audio_root: str | Path | None = None,
    admin_token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service around a data directory (event log + audio files)."""
    store = ListeningStore(data_dir)
    audio_base = Path(audio_root) if audio_root is not None else Path(data_dir)
    token = admin_token if admin_token is not None else os.environ.get(ADMIN_TOKEN_ENV)
    app = FastAPI(title="voxcurate listening tests")
    app.state.store = store

    def check_admin(header_token: str | None) -> None:
        if token and header_token != token:
            raise HTTPException(status_code=403, detail="admin token required")

    def resolve_audio(path_text: str) -> Path:
        path = Path(path_text)
        if not path.is_absolute():
            path = audio_base / path
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"audio file not found: {path_text}")
        return path

    @app.post("/api/tests", status_code=201)
    def create_test(
        payload: dict = Body(...),
        x_admin_token: str | None = Header(default=None),
    ):
        check_admin(x_admin_token)
        raw_stimuli = payload.get("stimuli")
        if not isinstance(raw_stimuli, list):
            raise HTTPException(status_code=422, detail="payload needs a 'stimuli' list")
        try:
            stimuli = [Stimulus.from_obj(o) for o in raw_stimuli]
            test_id = store.create_test(
                stimuli,
                test_id=payload.get("test_id"),
                seed=int(payload.get("seed", 0)),
            )
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"test_id": test_id}

    @app.post("/api/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        test_id = payload.get("test_id")
        if not test_id:
            raise HTTPException(status_code=422, detail="payload needs a 'test_id'")
        try:
            session = store.create_session(str(test_id))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unknown test: {test_id}") from exc
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"session_id": session.session_id, "playlist": session.playlist}

    @app.get("/api/stimuli/{stimulus_id}")
    def get_stimulus(stimulus_id: str):
        try:
            stimulus = store.find_stimulus(stimulus_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unknown stimulus: {stimulus_id}") from exc
        return stimulus.to_obj()

    @app.get("/api/stimuli/{stimulus_id}/audio")
    def get_audio(stimulus_id: str):
        try:
            stimulus = store.find_stimulus(stimulus_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unknown stimulus: {stimulus_id}") from exc
        return FileResponse(resolve_audio(stimulus.audio_path), media_type="audio/wav")

    @app.get("/api/stimuli/{stimulus_id}/reference")
    def get_reference(stimulus_id: str):
        try:
            stimulus = store.find_stimulus(stimulus_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unknown stimulus: {stimulus_id}") from exc
        if stimulus.reference_audio_path is None:
            raise HTTPException(
                status_code=404, detail=f"stimulus {stimulus_id} has no reference audio"
            )
        return FileResponse(
            resolve_audio(stimulus.reference_audio_path), media_type="audio/wav"
        )

    @app.post("/api/responses")
    def submit_response(payload: dict = Body(...)):
        session_id = payload.get("session_id")
        stimulus_id = payload.get("stimulus_id")
        if not session_id or not stimulus_id:
            raise HTTPException(
                status_code=422, detail="payload needs session_id and stimulus_id"
            )
        try:
            session = store.get_session(str(session_id))
            stimulus = store.get_test(session.test_id).stimulus(str(stimulus_id))
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unknown id: {exc}") from exc
        response = RaterResponse(
            session_id=str(session_id),
            stimulus_id=str(stimulus_id),
            kind=stimulus.kind,
            value=payload.get("value"),
            choice=payload.get("choice"),
        )
        try:
            store.submit_response(response)
        except DuplicateResponseError as exc:
            return JSONResponse(status_code=409, content={"detail": str(exc)})
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return JSONResponse(status_code=201, content={"status": "accepted"})

    @app.get("/api/tests/{test_id}/results")
    def get_results(test_id: str):
        try:
            results = store.aggregate_results(test_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unknown test: {test_id}") from exc
        return results.to_obj()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app

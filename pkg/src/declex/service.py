"""HTTP layer exposing sessions for the dialogue UI.

Stateless JSON protocol over stateful in-memory sessions; one logical
session per id, requests to a session serialized by a per-session lock.
The solve payload and the structured transcript reuse the CLI's record
format, so both surfaces stay byte-identical for the same command sequence.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, ConfigDict, Field

from .constraints import rat
from .model import FeatureSchema, ModelError, tree_from_json
from .parser import ParseError
from .session import Session, SessionError, structured_record


class CreateSession(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_def: dict = Field(alias="schema")
    eps: Optional[str] = None


class UploadModel(BaseModel):
    tree: dict
    tree_id: Optional[str] = None


class DeclareInstance(BaseModel):
    name: str
    label: str
    tree: Optional[str] = None
    minconf: str = "0"
    features: Optional[dict | list] = None


class AssertConstraint(BaseModel):
    text: str


class RetractRequest(BaseModel):
    text: Optional[str] = None
    last: bool = False


class SolveRequest(BaseModel):
    minimize: Optional[str] = None
    project: Optional[list[str]] = None
    eps: Optional[str] = None
    global_opt: bool = False


class ResetRequest(BaseModel):
    keep_model: bool = True


@dataclass
class SessionHandle:
    id: str
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    transcript: list[str] = field(default_factory=list)


def create_app() -> FastAPI:
    app = FastAPI(title="declex service")
    # the dialogue client runs in a browser on another origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    handles: dict[str, SessionHandle] = {}
    registry_lock = threading.Lock()

    def handle_of(session_id: str) -> SessionHandle:
        handle = handles.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        return handle

    @app.post("/sessions")
    def create_session(body: CreateSession):
        try:
            schema = FeatureSchema.from_json(
                json.loads(json.dumps(body.schema_def), parse_float=rat))
        except (ModelError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        session = Session(schema)
        if body.eps is not None:
            session.eps = rat(body.eps)
        sid = uuid.uuid4().hex
        with registry_lock:
            handles[sid] = SessionHandle(sid, session)
        return {"id": sid}

    @app.post("/sessions/{session_id}/models")
    def upload_model(session_id: str, body: UploadModel):
        handle = handle_of(session_id)
        with handle.lock:
            try:
                tree = tree_from_json(
                    json.loads(json.dumps(body.tree), parse_float=rat))
                tid = handle.session.add_model(tree, body.tree_id)
            except (ModelError, SessionError, KeyError) as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return {"tree_id": tid}

    @app.post("/sessions/{session_id}/instances")
    def declare_instance(session_id: str, body: DeclareInstance):
        handle = handle_of(session_id)
        with handle.lock:
            if body.name in handle.session.instances:
                raise HTTPException(status_code=409,
                                    detail=f"instance {body.name!r} already declared")
            try:
                handle.session.declare_instance(
                    body.name, body.label, tree_id=body.tree,
                    minconf=Fraction(body.minconf), features=body.features)
            except SessionError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True}

    @app.post("/sessions/{session_id}/constraints")
    def assert_constraint(session_id: str, body: AssertConstraint):
        handle = handle_of(session_id)
        with handle.lock:
            try:
                handle.session.constraint(body.text)
            except ParseError as exc:
                raise HTTPException(status_code=400,
                                    detail={"message": str(exc), "pos": exc.pos})
            except SessionError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True}

    @app.post("/sessions/{session_id}/constraints/retract")
    def retract(session_id: str, body: RetractRequest):
        handle = handle_of(session_id)
        with handle.lock:
            try:
                handle.session.retract(text=body.text, last=body.last)
            except SessionError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True}

    @app.get("/sessions/{session_id}/constraints")
    def list_constraints(session_id: str):
        handle = handle_of(session_id)
        with handle.lock:
            return {"constraints": [e.text for e in handle.session.constraints]}

    @app.post("/sessions/{session_id}/solve")
    def solve(session_id: str, body: SolveRequest):
        handle = handle_of(session_id)
        with handle.lock:
            try:
                bundle = handle.session.solveopt(
                    minimize=body.minimize, project=body.project,
                    eps=body.eps, global_opt=body.global_opt)
            except (ParseError, SessionError) as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            record = structured_record(bundle)
            metrics = None
            if handle.session.instances:
                raw = handle.session.metrics(bundle)
                metrics = {
                    "n_answers": raw["n_answers"],
                    "l_F": _num(raw["l_F"]),
                    "l_C": _num(raw["l_C"]),
                    "N_C": raw["N_C"],
                    "N_CE": raw["N_CE"],
                    "d_CE": [_num(d) for d in raw["d_CE"]],
                    "dim_CE": raw["dim_CE"],
                }
            handle.transcript.append(json.dumps(record, separators=(",", ":")))
            return {"record": record, "metrics": metrics}

    @app.get("/sessions/{session_id}/transcript", response_class=PlainTextResponse)
    def transcript(session_id: str):
        handle = handle_of(session_id)
        with handle.lock:
            body = "".join(line + "\n" for line in handle.transcript)
        return PlainTextResponse(body)

    @app.post("/sessions/{session_id}/reset")
    def reset(session_id: str, body: ResetRequest):
        handle = handle_of(session_id)
        with handle.lock:
            handle.session.reset(keep_model=body.keep_model)
            handle.transcript.clear()
        return {"ok": True}

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        with registry_lock:
            if session_id not in handles:
                raise HTTPException(status_code=404,
                                    detail=f"unknown session {session_id!r}")
            del handles[session_id]
        return {"ok": True}

    return app


def _num(value):
    if value is None:
        return None
    if isinstance(value, Fraction):
        from .constraints import format_rat
        return format_rat(value)
    return value


app = create_app()


def main() -> None:  # pragma: no cover - manual entry point
    import uvicorn

    uvicorn.run(app, host="127.0.0.1", port=8787)


if __name__ == "__main__":  # pragma: no cover
    main()

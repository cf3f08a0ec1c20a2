"""HTTP gateway for operator consoles.

Sessions are created over JSON POSTs and observed over a server-sent-event
stream. Event publication is serialized per session, every subscriber
receives the full event history from seq 1 before live events, and the
stream closes after the terminal event. State lives in process memory.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .backends import Backend, RemoteBackend, RulePolicyBackend, ScriptedBackend
from .corpus import build_default_index, default_registry
from .engine import EngineConfig, RetrievalPlan, Session, start_session
from .errors import InvalidInput, SessionClosed, SonopilotError
from .knowledge import api_spec_to_dict
from .robot import PHASE_ORDER, SCAN_TARGETS, FaultSpec, UltrasoundRobot, state_snapshot

BACKENDS = ("rule", "scripted", "remote")
ABLATIONS = ("none", "uar", "uar+rhr")


class CreateSessionRequest(BaseModel):
    instruction: str
    backend: str = "rule"
    turns: list[str] | None = None  # scripted backend only
    ablation: str = "uar+rhr"
    seed: int = 0
    mode: str = "auto"
    max_steps: int = Field(default=20, ge=1)
    error_threshold: int = Field(default=3, ge=1)


class FaultBody(BaseModel):
    kind: str
    after_invocations: int | None = None
    on_api: str | None = None


class ControlRequest(BaseModel):
    command: str  # step | abort | inject_fault
    fault: FaultBody | None = None


@dataclass
class ManagedSession:
    session_id: str
    created_at: str
    mode: str
    config: dict[str, Any]
    engine: Session
    robot: UltrasoundRobot
    events: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    changed: threading.Condition = field(default_factory=threading.Condition)
    terminal_published: bool = False

    def publish(self, event: dict) -> None:
        with self.changed:
            event["seq"] = len(self.events) + 1
            self.events.append(event)
            self.changed.notify_all()

    def publish_step(self, step) -> None:
        self.publish(
            {
                "type": "step",
                "session_id": self.session_id,
                "step": step.to_dict(),
                "robot_state": state_snapshot(self.robot.state),
            }
        )

    def publish_terminal(self) -> None:
        if self.terminal_published:
            return
        self.terminal_published = True
        self.publish(
            {
                "type": "terminal",
                "session_id": self.session_id,
                "terminal": self.engine.transcript.terminal,
                "robot_state": state_snapshot(self.robot.state),
            }
        )

    def advance(self) -> None:
        """Run one engine step and publish it; publish terminal when closed."""
        with self.lock:
            if self.engine.closed:
                raise SessionClosed("session already ended")
            step = self.engine.step()
            self.publish_step(step)
            if self.engine.closed:
                self.publish_terminal()


def _make_backend(req: CreateSessionRequest) -> Backend:
    if req.backend == "rule":
        return RulePolicyBackend()
    if req.backend == "scripted":
        if not req.turns:
            raise InvalidInput("scripted backend needs a turns array")
        return ScriptedBackend(req.turns)
    if req.backend == "remote":
        return RemoteBackend()
    raise InvalidInput(f"unknown backend {req.backend!r}")


class SessionService:
    def __init__(self, transcripts_dir: str | Path | None = None):
        self.registry = default_registry()
        self.index = build_default_index()
        self.sessions: dict[str, ManagedSession] = {}
        self.transcripts_dir = Path(transcripts_dir) if transcripts_dir else None

    def create(self, req: CreateSessionRequest) -> ManagedSession:
        if req.backend not in BACKENDS:
            raise InvalidInput(f"unknown backend {req.backend!r}")
        if req.ablation not in ABLATIONS:
            raise InvalidInput(f"unknown ablation {req.ablation!r}")
        if req.mode not in ("auto", "manual"):
            raise InvalidInput(f"unknown mode {req.mode!r}")
        backend = _make_backend(req)
        robot = UltrasoundRobot(seed=req.seed)
        engine = start_session(
            req.instruction,
            self.index,
            self.registry,
            backend,
            robot,
            config=EngineConfig(max_steps=req.max_steps, error_threshold=req.error_threshold),
            retrieval=RetrievalPlan.from_ablation(req.ablation),
        )
        managed = ManagedSession(
            session_id=uuid.uuid4().hex,
            created_at=datetime.now(timezone.utc).isoformat(),
            mode=req.mode,
            config={
                "backend": req.backend,
                "ablation": req.ablation,
                "seed": req.seed,
                "mode": req.mode,
                "max_steps": req.max_steps,
                "error_threshold": req.error_threshold,
            },
            engine=engine,
            robot=robot,
        )
        self.sessions[managed.session_id] = managed
        if req.mode == "auto":
            thread = threading.Thread(target=self._run_auto, args=(managed,), daemon=True)
            thread.start()
        return managed

    def _run_auto(self, managed: ManagedSession) -> None:
        try:
            while not managed.engine.closed:
                managed.advance()
        except SessionClosed:
            pass
        finally:
            with managed.lock:
                if managed.engine.closed:
                    managed.publish_terminal()
            self._maybe_write_transcript(managed)

    def _maybe_write_transcript(self, managed: ManagedSession) -> None:
        if self.transcripts_dir is None:
            return
        self.transcripts_dir.mkdir(parents=True, exist_ok=True)
        path = self.transcripts_dir / f"{managed.session_id}.json"
        path.write_text(managed.engine.transcript.to_json(), encoding="utf-8")

    def get(self, session_id: str) -> ManagedSession:
        managed = self.sessions.get(session_id)
        if managed is None:
            raise KeyError(session_id)
        return managed


def create_app(service: SessionService | None = None) -> FastAPI:
    service = service or SessionService()
    app = FastAPI(title="sonopilot session service")
    app.state.service = service

    @app.exception_handler(SonopilotError)
    def _domain_error(_, exc: SonopilotError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(service.sessions)}

    @app.get("/api/registry")
    def registry():
        return {
            "apis": [api_spec_to_dict(s) for s in service.registry],
            "phases": [p.value for p in PHASE_ORDER],
            "targets": list(SCAN_TARGETS),
        }

    @app.post("/api/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        if not req.instruction.strip():
            raise HTTPException(status_code=400, detail="instruction must be non-empty")
        try:
            managed = service.create(req)
        except InvalidInput as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "session_id": managed.session_id,
            "created_at": managed.created_at,
            "config": managed.config,
        }

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            managed = service.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        with managed.lock:
            return {
                "session_id": managed.session_id,
                "created_at": managed.created_at,
                "config": managed.config,
                "terminal": managed.engine.transcript.terminal,
                "steps": len(managed.engine.transcript.steps),
                "robot_state": state_snapshot(managed.robot.state),
                "transcript": managed.engine.transcript.to_dict(),
            }

    @app.get("/api/sessions/{session_id}/events")
    def stream_events(session_id: str):
        try:
            managed = service.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        return StreamingResponse(_sse_stream(managed), media_type="text/event-stream")

    @app.post("/api/sessions/{session_id}/control")
    def control(session_id: str, req: ControlRequest):
        try:
            managed = service.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        if req.command == "step":
            if managed.mode != "manual":
                raise HTTPException(status_code=409, detail="session is in auto mode")
            try:
                managed.advance()
            except SessionClosed:
                raise HTTPException(status_code=409, detail="session already ended")
            if managed.engine.closed:
                service._maybe_write_transcript(managed)
            return {"status": "stepped", "terminal": managed.engine.transcript.terminal}
        if req.command == "abort":
            with managed.lock:
                try:
                    managed.engine.abort()
                except SessionClosed:
                    raise HTTPException(status_code=409, detail="session already ended")
                managed.publish_terminal()
            service._maybe_write_transcript(managed)
            return {"status": "aborted"}
        if req.command == "inject_fault":
            if req.fault is None:
                raise HTTPException(status_code=400, detail="inject_fault needs a fault body")
            with managed.lock:
                if managed.engine.closed:
                    raise HTTPException(status_code=409, detail="session already ended")
                try:
                    fault = FaultSpec(
                        kind=req.fault.kind,
                        after_invocations=req.fault.after_invocations,
                        on_api=req.fault.on_api,
                    )
                except InvalidInput as exc:
                    raise HTTPException(status_code=400, detail=str(exc))
                managed.engine.inject_fault(fault)
            return {"status": "fault_queued", "fault": fault.to_dict()}
        raise HTTPException(status_code=400, detail=f"unknown command {req.command!r}")

    return app


def _sse_stream(managed: ManagedSession) -> Iterator[str]:
    """Replay all events from seq 1, then follow live until the terminal event."""
    import json as _json

    cursor = 0
    while True:
        with managed.changed:
            while cursor >= len(managed.events):
                managed.changed.wait(timeout=30.0)
            batch = managed.events[cursor:]
            cursor = len(managed.events)
        for event in batch:
            yield f"event: {event['type']}\nid: {event['seq']}\ndata: {_json.dumps(event)}\n\n"
            if event["type"] == "terminal":
                return

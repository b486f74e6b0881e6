"""HTTP surface: learner-facing endpoints plus the /v1/admin API.

Streaming endpoints speak server-sent events with the stream position as the
event id, so clients resume with ?from_seq / ?from_index / ?from_revision or
the Last-Event-ID header after a drop. Test clients can bound a stream with
?limit=N&timeout_s=S.
"""

from __future__ import annotations

import json
from typing import Iterator

from fastapi import FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse, Response, StreamingResponse

from . import admin as admin_mod
from . import store as store_mod
from .academic import LexiconMissing
from .admin import ExperimentConfig, Plan, ToolDisabled
from .agents import AgentConfig, AgentUnknown, ChatUnknown, DuplicateAgentId, EmptyAgentList, GatewayError
from .analyzer import IntervalNotElapsed, LengthMismatch, NoEvents
from .collab import DocOp, DocUnknown, OutOfBounds, RevisionUnknown, StaleBase, UnknownAuthor
from .engine import Engine
from .model import ValidationError, canonical_serialize
from .writing_llm import GatewayUnavailable, RubricUnknown, UnparseableReply

SSE_HEADERS = {"Cache-Control": "no-cache", "Connection": "keep-alive"}


def _sse(event_id, doc: dict) -> str:
    return f"id: {event_id}\ndata: {json.dumps(doc, sort_keys=True, separators=(',', ':'))}\n\n"


def _http_error(exc: Exception) -> HTTPException:
    mapping = [
        (ToolDisabled, 403, "ToolDisabled"),
        (admin_mod.SessionUnknown, 404, "SessionUnknown"),
        (store_mod.SessionUnknown, 404, "SessionUnknown"),
        (admin_mod.SessionClosed, 409, "SessionClosed"),
        (admin_mod.ExperimentUnknown, 404, "ExperimentUnknown"),
        (admin_mod.ExperimentStarted, 409, "ExperimentStarted"),
        (admin_mod.UnknownTool, 422, "UnknownTool"),
        (admin_mod.InvalidStrategy, 422, "InvalidStrategy"),
        (ChatUnknown, 404, "ChatUnknown"),
        (AgentUnknown, 404, "AgentUnknown"),
        (DuplicateAgentId, 422, "DuplicateAgentId"),
        (EmptyAgentList, 422, "EmptyAgentList"),
        (DocUnknown, 404, "DocUnknown"),
        (UnknownAuthor, 404, "UnknownAuthor"),
        (StaleBase, 409, "StaleBase"),
        (OutOfBounds, 422, "OutOfBounds"),
        (RevisionUnknown, 404, "RevisionUnknown"),
        (IntervalNotElapsed, 409, "IntervalNotElapsed"),
        (NoEvents, 404, "NoEvents"),
        (LengthMismatch, 422, "LengthMismatch"),
        (RubricUnknown, 404, "RubricUnknown"),
        (LexiconMissing, 404, "LexiconMissing"),
        (UnparseableReply, 502, "UnparseableReply"),
        (GatewayUnavailable, 502, "GatewayUnavailable"),
        (GatewayError, 502, type(exc).__name__),
        (ValidationError, 422, type(exc).__name__),
    ]
    for klass, status, code in mapping:
        if isinstance(exc, klass):
            detail = {"error": code, "message": str(exc)}
            if isinstance(exc, ToolDisabled):
                detail["tool"] = exc.tool
            if isinstance(exc, ValidationError):
                detail["field"] = exc.field
            return HTTPException(status_code=status, detail=detail)
    if isinstance(exc, KeyError):
        return HTTPException(status_code=404, detail={"error": "NotFound", "message": str(exc)})
    if isinstance(exc, ValueError):
        return HTTPException(status_code=422, detail={"error": "Invalid", "message": str(exc)})
    raise exc


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="srlengine", version="0.1.0")
    app.state.engine = engine

    def guard(fn):
        try:
            return fn()
        except HTTPException:
            raise
        except Exception as exc:  # translated to typed HTTP errors above
            raise _http_error(exc)

    def require_admin(authorization: str | None) -> None:
        expected = f"Bearer {engine.config.admin_token}"
        if authorization != expected:
            raise HTTPException(status_code=401, detail={"error": "Unauthorized"})

    # -- health / events -----------------------------------------------------

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/events")
    async def post_events(request: Request):
        body = await request.json()
        docs = body if isinstance(body, list) else [body]

        def run():
            acks = [engine.ingest_raw(doc).to_doc() for doc in docs]
            return acks if isinstance(body, list) else acks[0]

        return guard(run)

    @app.get("/v1/sessions/{session_id}/stream")
    def stream_events(
        session_id: str,
        from_seq: int = Query(0, ge=0),
        limit: int | None = None,
        timeout_s: float = 10.0,
        last_event_id: str | None = Header(None, alias="Last-Event-ID"),
    ):
        if last_event_id is not None:
            from_seq = int(last_event_id) + 1
        sub = guard(lambda: engine.store.subscribe(session_id, from_seq))

        def gen() -> Iterator[str]:
            sent = 0
            try:
                while limit is None or sent < limit:
                    event = sub.get(timeout=timeout_s)
                    if event is None:
                        break
                    yield _sse(event.server_seq, json.loads(canonical_serialize(event)))
                    sent += 1
            finally:
                engine.store.unsubscribe(session_id, sub)

        return StreamingResponse(gen(), media_type="text/event-stream", headers=SSE_HEADERS)

    @app.get("/v1/experiments/{experiment_id}/export")
    def export_experiment(experiment_id: str):
        data = guard(lambda: engine.export(experiment_id))
        return PlainTextResponse(content=data, media_type="application/x-ndjson")

    # -- analyzer ------------------------------------------------------------

    @app.get("/v1/sessions/{session_id}/labels")
    def get_labels(session_id: str):
        labels = guard(lambda: engine.labels(session_id))
        return {"session_id": session_id, "labels": [l.to_doc() for l in labels]}

    @app.get("/v1/sessions/{session_id}/conditions")
    def get_conditions(session_id: str):
        def run():
            engine.admin.session(session_id)
            return engine.analyzer.conditions(session_id).to_doc()

        return guard(run)

    @app.get("/v1/sessions/{session_id}/intervals/{k}")
    def get_interval(session_id: str, k: int):
        return guard(lambda: engine.aggregate_interval(session_id, k).to_doc())

    @app.post("/v1/sessions/{session_id}/instruments")
    async def post_instrument(session_id: str, request: Request):
        body = await request.json()
        return guard(
            lambda: {
                "session_id": session_id,
                "kind": body["kind"],
                "score": engine.submit_instrument(session_id, body["kind"], body["responses"], body["key"]),
            }
        )

    # -- scaffolds -------------------------------------------------------------

    @app.get("/v1/sessions/{session_id}/scaffolds")
    def stream_scaffolds(
        session_id: str,
        from_index: int = Query(0, ge=0),
        limit: int | None = None,
        timeout_s: float = 10.0,
        last_event_id: str | None = Header(None, alias="Last-Event-ID"),
    ):
        if last_event_id is not None:
            from_index = int(last_event_id) + 1
        sub = guard(lambda: engine.scaffold_stream(session_id, from_index))

        def gen() -> Iterator[str]:
            import queue as queue_mod

            sent = 0
            index = from_index
            try:
                while limit is None or sent < limit:
                    try:
                        message = sub.get(timeout=timeout_s)
                    except queue_mod.Empty:
                        break
                    yield _sse(index, message.to_doc())
                    index += 1
                    sent += 1
            finally:
                engine.scaffolds.unsubscribe(session_id, sub)

        return StreamingResponse(gen(), media_type="text/event-stream", headers=SSE_HEADERS)

    @app.post("/v1/scaffolds/{message_id}/ack")
    async def ack_scaffold(message_id: str, request: Request):
        body = await request.json() if await request.body() else {}
        kind = body.get("kind", "shown") if isinstance(body, dict) else "shown"
        return guard(lambda: engine.ack_scaffold(message_id, kind).to_doc())

    # -- writing ------------------------------------------------------------------

    @app.post("/v1/analyze")
    async def analyze(request: Request):
        body = await request.json()

        def run():
            result = engine.analyze(
                body.get("session_id"),
                body["text"],
                body.get("kinds", ["basic", "academic", "originality", "cognition"]),
                source_set_id=body.get("source_set_id", ""),
                lexicon_id=body.get("lexicon_id", "default"),
            )
            return result.to_doc()

        return guard(run)

    @app.post("/v1/submissions")
    async def submit(request: Request):
        body = await request.json()

        def run():
            grade = engine.grade(body.get("session_id"), body["text"], body["rubric_id"])
            return grade.to_doc()

        return guard(run)

    # -- chats ------------------------------------------------------------------------

    @app.post("/v1/chats")
    async def create_chat(request: Request):
        body = await request.json()

        def run():
            agents = [
                AgentConfig(
                    agent_id=a["agent_id"],
                    display_name=a.get("display_name", a["agent_id"]),
                    pre_prompt=a["pre_prompt"],
                    avatar_ref=a.get("avatar_ref", ""),
                    model_ref=a.get("model_ref", "scripted"),
                )
                for a in body["agents"]
            ]
            chat = engine.configure_chat(body["session_id"], body["mode"], agents, body.get("chat_id"))
            return {"chat_id": chat.chat_id, "mode": chat.mode, "agents": sorted(chat.agents)}

        return guard(run)

    @app.post("/v1/chats/{chat_id}/turns")
    async def send_turn(chat_id: str, request: Request):
        body = await request.json()

        def run():
            learner_turn, reply_turn = engine.send_chat_turn(chat_id, body["text"], body["addressee"])
            return {"learner_turn": learner_turn.to_doc(), "reply_turn": reply_turn.to_doc()}

        return guard(run)

    @app.get("/v1/chats/{chat_id}/transcripts")
    def transcripts(chat_id: str):
        def run():
            chat = engine.chats.chat(chat_id)
            return {
                "chat_id": chat_id,
                "mode": chat.mode,
                "transcripts": {
                    key: [t.to_doc() for t in turns] for key, turns in chat.transcripts.items()
                },
            }

        return guard(run)

    # -- docs ----------------------------------------------------------------------------

    @app.post("/v1/docs")
    async def create_doc(request: Request):
        body = await request.json()

        def run():
            doc_id = engine.create_doc(body["session_id"], body.get("participants", {}), body.get("doc_id"))
            return {"doc_id": doc_id, "revision": 0}

        return guard(run)

    @app.post("/v1/docs/{doc_id}/ops")
    async def post_op(doc_id: str, request: Request):
        body = await request.json()

        def run():
            op = DocOp(
                op_id=body.get("op_id") or f"op-{body['author']}-{body['base_revision']}-{body['kind']}",
                doc_id=doc_id,
                author=body["author"],
                base_revision=int(body["base_revision"]),
                kind=body["kind"],
                position=int(body["position"]),
                text=body.get("text", ""),
                length=int(body.get("length", 0)),
            )
            committed, revision = engine.submit_doc_op(op)
            return {"committed_op": committed.to_doc(), "new_revision": revision}

        return guard(run)

    @app.get("/v1/docs/{doc_id}/stream")
    def stream_doc(
        doc_id: str,
        from_revision: int = Query(0, ge=0),
        limit: int | None = None,
        timeout_s: float = 10.0,
        last_event_id: str | None = Header(None, alias="Last-Event-ID"),
    ):
        if last_event_id is not None:
            from_revision = int(last_event_id)
        sub = guard(lambda: engine.collab.subscribe(doc_id, from_revision))

        def gen() -> Iterator[str]:
            import queue as queue_mod

            sent = 0
            try:
                while limit is None or sent < limit:
                    try:
                        op, revision = sub.get(timeout=timeout_s)
                    except queue_mod.Empty:
                        break
                    doc = op.to_doc()
                    doc["revision"] = revision
                    yield _sse(revision, doc)
                    sent += 1
            finally:
                engine.collab.unsubscribe(doc_id, sub)

        return StreamingResponse(gen(), media_type="text/event-stream", headers=SSE_HEADERS)

    @app.get("/v1/docs/{doc_id}/replay")
    def replay_doc(doc_id: str, revision: int = Query(..., ge=0)):
        return guard(lambda: {"doc_id": doc_id, "revision": revision, "content": engine.collab.replay(doc_id, revision)})

    # -- plans -------------------------------------------------------------------------------

    @app.post("/v1/plans")
    async def save_plan(request: Request):
        body = await request.json()

        def run():
            plan = Plan.from_doc(body)
            ack = engine.save_plan(plan)
            return {"status": "saved", "event": ack.to_doc()}

        return guard(run)

    # -- admin --------------------------------------------------------------------------------

    @app.post("/v1/admin/experiments")
    async def configure_experiment(request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        body = await request.json()

        def run():
            config = ExperimentConfig.from_doc(body)
            engine.admin.configure_experiment(config)
            return {"status": "configured", "experiment_id": config.experiment_id}

        return guard(run)

    @app.get("/v1/admin/experiments/{experiment_id}")
    def get_experiment(experiment_id: str, authorization: str | None = Header(None)):
        require_admin(authorization)
        return guard(lambda: engine.admin.experiment(experiment_id).to_doc())

    @app.get("/v1/admin/search")
    def search(q: str = "", authorization: str | None = Header(None)):
        require_admin(authorization)
        return {"results": [e.to_doc() for e in engine.admin.search_experiments(q)]}

    @app.get("/v1/admin/experiments/{experiment_id}/stats")
    def stats(experiment_id: str, authorization: str | None = Header(None)):
        require_admin(authorization)
        return guard(lambda: engine.admin.compute_stats(experiment_id, engine.store).to_doc())

    @app.get("/v1/admin/sessions/{session_id}/proportions")
    def proportions(session_id: str, authorization: str | None = Header(None)):
        require_admin(authorization)
        return guard(lambda: {"session_id": session_id, "proportions": engine.proportions(session_id)})

    @app.get("/v1/admin/plans/{session_id}")
    def get_plan(session_id: str, authorization: str | None = Header(None)):
        require_admin(authorization)

        def run():
            engine.admin.session(session_id)
            plan = engine.admin.plan(session_id)
            return {"session_id": session_id, "plan": plan.to_doc() if plan else None}

        return guard(run)

    @app.post("/v1/admin/sessions")
    async def create_session(request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        body = await request.json()

        def run():
            session = engine.admin.create_session(
                body["session_id"], body["learner_id"], body["experiment_id"], body["group"]
            )
            return {"status": "created", "session_id": session.session_id}

        return guard(run)

    @app.post("/v1/admin/sessions/{session_id}/phase")
    async def set_phase(session_id: str, request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        body = await request.json()

        def run():
            engine.set_phase(session_id, body["phase"])
            return {"status": "ok", "phase": body["phase"]}

        return guard(run)

    @app.post("/v1/admin/sessions/{session_id}/status")
    async def set_status(session_id: str, request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        body = await request.json()
        return guard(lambda: {"status": engine.admin.set_status(session_id, body["status"]).status})

    @app.post("/v1/admin/import")
    async def import_events(request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        data = await request.body()
        return guard(lambda: {"imported": engine.import_export(data)})

    @app.post("/v1/admin/sources")
    async def register_sources(request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        body = await request.json()

        def run():
            engine.register_source_set(
                body["source_set_id"], [(s["source_id"], s["text"]) for s in body["sources"]]
            )
            return {"status": "registered", "source_set_id": body["source_set_id"]}

        return guard(run)

    @app.post("/v1/admin/lexicons")
    async def register_lexicon(request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        body = await request.json()

        def run():
            engine.register_lexicon(body.get("lexicon_id", "default"), body)
            return {"status": "registered", "lexicon_id": body.get("lexicon_id", "default")}

        return guard(run)

    @app.post("/v1/admin/rubrics")
    async def register_rubric(request: Request, authorization: str | None = Header(None)):
        require_admin(authorization)
        body = await request.json()

        def run():
            engine.register_rubric(body)
            return {"status": "registered", "rubric_id": body["rubric_id"]}

        return guard(run)

    return app

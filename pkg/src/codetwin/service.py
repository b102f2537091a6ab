"""HTTP face of the twin. Every payload is produced by the same serializers
the CLI uses, so the two surfaces agree byte for byte.

All responses carry the revision they were answered at. Errors come back as
a structured body, never a bare status.
"""

from __future__ import annotations

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .compiler import BudgetTooSmallError, compile_package
from .config import TwinConfig
from .curation import (
    BadEventError,
    CurationDesk,
    ProposalStateError,
    UnknownProposalError,
)
from .model import signature_table
from .query import (
    EmptyQueryError,
    QuerySpec,
    UnknownNodeError,
    impact_of_change,
    run_query,
)
from .store import TwinStore, UnknownRevisionError


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code,
                                           "message": message}})


def _json(text: str) -> Response:
    # pre-serialized payloads keep HTTP output byte-equal to CLI output
    return Response(content=text, media_type="application/json")


def create_app(store: TwinStore, config: TwinConfig | None = None,
               desk: CurationDesk | None = None) -> FastAPI:
    config = config or TwinConfig()
    desk = desk or CurationDesk(store)
    app = FastAPI(title="code twin", docs_url=None, redoc_url=None)

    @app.exception_handler(UnknownRevisionError)
    async def _unknown_revision(request: Request, exc: UnknownRevisionError):
        return _error(404, "unknown-revision", str(exc.args[0]))

    @app.exception_handler(UnknownNodeError)
    async def _unknown_node(request: Request, exc: UnknownNodeError):
        return _error(404, "unknown-node", str(exc.args[0]))

    @app.exception_handler(UnknownProposalError)
    async def _unknown_proposal(request: Request,
                                exc: UnknownProposalError):
        return _error(404, "unknown-proposal", str(exc.args[0]))

    @app.exception_handler(EmptyQueryError)
    async def _empty_query(request: Request, exc: EmptyQueryError):
        return _error(422, "empty-query", str(exc))

    @app.exception_handler(BudgetTooSmallError)
    async def _budget(request: Request, exc: BudgetTooSmallError):
        return _error(422, "budget-too-small", str(exc))

    @app.exception_handler(ProposalStateError)
    async def _proposal_state(request: Request, exc: ProposalStateError):
        return _error(409, "proposal-state", str(exc))

    @app.exception_handler(BadEventError)
    async def _bad_event(request: Request, exc: BadEventError):
        return _error(422, "bad-event", str(exc))

    def _spec(body: dict) -> QuerySpec:
        allowed = {"text", "revision", "hop_bound", "node_budget",
                   "seed_limit", "relations"}
        unknown = set(body) - allowed - {"token_budget"}
        if unknown:
            raise EmptyQueryError(
                f"unknown query fields: {sorted(unknown)}")
        if not body.get("text"):
            raise EmptyQueryError("query text is required")
        defaults = {"hop_bound": config.hop_bound,
                    "node_budget": config.node_budget,
                    "seed_limit": config.seed_limit}
        merged = {**defaults, **{k: v for k, v in body.items()
                                 if k in allowed and v is not None}}
        return QuerySpec.from_record(merged)

    @app.get("/revisions")
    def revisions():
        return {"revision": store.head, "revisions": store.revisions,
                "head": store.head}

    @app.get("/relations")
    def relations():
        return {"revision": store.head, "relations": signature_table()}

    @app.get("/validation")
    def validation(revision: str | None = None):
        report = store.validate(revision)
        snap = store.snapshot(revision)
        return {"revision": snap.revision, "ok": report.ok,
                "findings": [{"subject": f.subject, "rule": f.rule,
                              "message": f.message}
                             for f in report.findings]}

    @app.get("/nodes/{node_id:path}")
    def node(node_id: str, revision: str | None = None):
        snap = store.snapshot(revision)
        found = snap.nodes.get(node_id)
        if found is None:
            raise UnknownNodeError(node_id)
        edges = sorted((e for e in snap.edges
                        if node_id in (e.source, e.target)),
                       key=lambda e: e.key)
        payload = {"revision": snap.revision, "node": found.to_record(),
                   "edges": [e.to_record() for e in edges],
                   "anchors": [a.to_record() for a in snap.anchors
                               if a.subject == node_id]}
        card = snap.cards.get(node_id)
        if card is not None:
            payload["card"] = card.to_record()
        return payload

    @app.get("/cards/{subject:path}")
    def card(subject: str, revision: str | None = None):
        snap = store.snapshot(revision)
        found = snap.cards.get(subject)
        if found is None:
            raise UnknownNodeError(subject)
        return {"revision": snap.revision, "card": found.to_record(),
                "rendered": found.render()}

    @app.post("/query")
    async def query(request: Request):
        body = await request.json()
        spec = _spec(body)
        snap = store.snapshot(spec.revision)
        return _json(run_query(snap, spec).serialize())

    @app.post("/impact")
    async def impact(request: Request):
        body = await request.json()
        changed = body.get("changed") or []
        if not changed:
            raise EmptyQueryError("impact needs changed node ids")
        snap = store.snapshot(body.get("revision"))
        result = impact_of_change(snap, changed,
                                  int(body.get("hop_bound", 3)))
        return _json(result.serialize())

    @app.post("/context")
    async def context(request: Request):
        body = await request.json()
        spec = _spec(body)
        snap = store.snapshot(spec.revision)
        result = run_query(snap, spec)
        budget = int(body.get("token_budget") or config.token_budget)
        package = compile_package(snap, result, budget)
        return _json(package.serialize())

    @app.get("/proposals")
    def proposals(status: str | None = None):
        chosen = [desk.proposals[pid] for pid in sorted(desk.proposals)
                  if status is None or desk.proposals[pid].status == status]
        return {"revision": store.head,
                "proposals": [p.to_record() for p in chosen]}

    @app.post("/proposals")
    async def submit_proposal(request: Request):
        body = await request.json()
        for name in ("subject", "author", "ops"):
            if not body.get(name):
                raise BadEventError(f"proposal needs {name}")
        prop = desk.submit(body["subject"], body["author"],
                           body.get("note", ""), body["ops"])
        delta = desk.preview(prop.id)
        return {"revision": store.head, "proposal": prop.to_record(),
                "delta": delta.to_record()}

    @app.post("/proposals/{proposal_id}/review")
    async def review(proposal_id: str, request: Request):
        body = await request.json()
        prop = desk.review(proposal_id, body.get("verdict", ""),
                           body.get("note", ""))
        return {"revision": store.head, "proposal": prop.to_record()}

    @app.post("/feedback")
    async def feedback(request: Request):
        body = await request.json()
        event = desk.record_event(body.get("kind", ""),
                                  body.get("subject", ""),
                                  body.get("note", ""),
                                  body.get("proposal", ""))
        return {"revision": store.head, "event": event.to_record()}

    @app.get("/conflicts")
    def conflicts(revision: str | None = None):
        snap = store.snapshot(revision)
        found = desk.conflicts(revision)
        return {"revision": snap.revision,
                "conflicts": [c.to_record() for c in found]}

    return app


def serve(store_path: str, host: str = "127.0.0.1", port: int = 8123,
          config: TwinConfig | None = None) -> None:
    import uvicorn

    store = TwinStore.open(store_path)
    app = create_app(store, config)
    uvicorn.run(app, host=host, port=port, log_level="warning")


__all__ = ["create_app", "serve"]

"""HTTP service exposing the kernel to CLI tooling, mechanical agents and the
web console.

Wire mapping: kernel NotFound -> 404, InvalidRequest -> 422, Conflict -> 409,
Unauthenticated -> 401. Authentication is a static bearer-token file
(tokens.json in the store root) mapping tokens to agent Item ids.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from fastapi import Depends, FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .errors import (
    Conflict,
    InvalidRequest,
    ItemForgeError,
    NotFound,
    Unauthenticated,
)
from .model import Property, Transition
from .registry import (
    AgentRef,
    DescriptionDefs,
    agent_ref,
    diff_description_versions,
    instantiate_item,
    register_schema,
    rerun_item,
)
from . import registry
from .store import Store

_INT_RE = re.compile(r"^-?\d+$")
_OPS = {"ne": "!=", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}

MAX_WAIT_SECONDS = 30.0


def parse_scalar(raw: str):
    """Query/CLI value typing: booleans, integers, else strings; double
    quotes force a string."""
    if len(raw) >= 2 and raw[0] == '"' and raw[-1] == '"':
        return raw[1:-1]
    if raw == "true":
        return True
    if raw == "false":
        return False
    if _INT_RE.match(raw):
        return int(raw)
    return raw


def parse_filter_value(raw: str) -> tuple[str, object]:
    """'gt:3' -> ('>', 3); a bare value means equality."""
    head, sep, rest = raw.partition(":")
    if sep and head in _OPS:
        return _OPS[head], parse_scalar(rest)
    return "==", parse_scalar(raw)


def load_tokens(path: Path) -> dict[str, str]:
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text("utf-8"))
    except ValueError:
        return {}


def save_token(path: Path, token: str, agent_item_id: str) -> None:
    tokens = load_tokens(path)
    tokens[token] = agent_item_id
    path.write_text(json.dumps(tokens, indent=2, sort_keys=True), "utf-8")


def create_app(store: Store, tokens_path: str | Path | None = None,
               console_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="itemforge", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    tokens_file = Path(tokens_path) if tokens_path else store.files.root / "tokens.json"

    def resolve_agent(request: Request) -> AgentRef:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise Unauthenticated("missing bearer token")
        token = header[7:].strip()
        agent_item_id = load_tokens(tokens_file).get(token)
        if agent_item_id is None:
            raise Unauthenticated("unknown token")
        return agent_ref(store, agent_item_id)

    @app.exception_handler(ItemForgeError)
    async def kernel_error(request: Request, exc: ItemForgeError):
        if isinstance(exc, Unauthenticated):
            status = 401
        elif isinstance(exc, NotFound):
            status = 404
        elif isinstance(exc, Conflict):
            status = 409
        elif isinstance(exc, InvalidRequest):
            status = 422
        else:
            status = 500
        body = {"error": exc.code, "message": exc.message}
        violations = getattr(exc, "violations", None)
        if violations:
            body["violations"] = [
                v.to_doc() if hasattr(v, "to_doc") else v for v in violations
            ]
        return JSONResponse(status_code=status, content=body)

    # -- reads ---------------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok", "storeVersion": store.version}

    @app.get("/agents/me")
    def whoami(agent: AgentRef = Depends(resolve_agent)):
        return agent.to_doc()

    @app.get("/items")
    def query_items(request: Request, agent: AgentRef = Depends(resolve_agent)):
        constraints = []
        for name, raw in request.query_params.multi_items():
            op, value = parse_filter_value(raw)
            constraints.append((name, op, value))
        return {"items": sorted(store.query_items(constraints))}

    @app.get("/items/{item_id}")
    def get_item(item_id: str, agent: AgentRef = Depends(resolve_agent)):
        return store.item(item_id).to_doc()

    @app.get("/items/{item_id}/history")
    def get_history(
        item_id: str,
        agent_id: str | None = Query(default=None, alias="agent"),
        role: str | None = None,
        kind: str | None = None,
        time_from: int | None = Query(default=None, alias="from"),
        time_to: int | None = Query(default=None, alias="to"),
        step_prefix: str | None = Query(default=None, alias="stepPrefix"),
        agent_ref_: AgentRef = Depends(resolve_agent),
    ):
        events = store.query_history(
            item_id, agent_id=agent_id, role=role, kind=kind,
            time_from=time_from, time_to=time_to, step_prefix=step_prefix,
        )
        return {"events": [e.to_doc() for e in events]}

    @app.get("/items/{item_id}/lineage")
    def get_lineage(item_id: str, agent: AgentRef = Depends(resolve_agent)):
        return {"chain": store.lineage(item_id)}

    @app.get("/agents/{agent_id}/jobs")
    def get_jobs(
        agent_id: str,
        wait: float | None = None,
        cursor: int | None = None,
        agent: AgentRef = Depends(resolve_agent),
    ):
        target = agent_ref(store, agent_id)
        if wait is not None and cursor is not None and cursor == store.version:
            store.wait_for_change(cursor, min(float(wait), MAX_WAIT_SECONDS))
        jobs = []
        for job in store.enabled_jobs(roles=target.roles):
            doc = job.to_doc()
            doc["itemName"] = store.item(job.item_id).name
            if job.schema_ref is not None:
                doc["schemaDef"] = store.schema(*job.schema_ref).to_doc()
            jobs.append(doc)
        return {"jobs": jobs, "cursor": store.version}

    @app.get("/descriptions/{desc_id}/diff")
    def get_diff(desc_id: str, v1: int, v2: int, agent: AgentRef = Depends(resolve_agent)):
        return diff_description_versions(store, desc_id, v1, v2)

    # -- writes --------------------------------------------------------------

    @app.post("/items/{item_id}/jobs/execute")
    def execute_job(item_id: str, body: dict, agent: AgentRef = Depends(resolve_agent)):
        try:
            transition = Transition(body["transition"])
        except (KeyError, ValueError) as e:
            raise InvalidRequest(f"unknown transition {body.get('transition')!r}") from e
        snapshot, events = store.apply_transition(
            item_id, body.get("stepPath", ""), transition,
            body.get("outcome"), agent, body.get("purpose", ""),
        )
        return {"events": [e.to_doc() for e in events], "item": snapshot.to_doc()}

    @app.post("/items/{item_id}/workflow/edit")
    def edit_workflow(item_id: str, body: dict, agent: AgentRef = Depends(resolve_agent)):
        snapshot, event = store.edit_live_workflow(
            item_id, body.get("patch", {}), agent, body.get("purpose", "")
        )
        return {"event": event.to_doc(), "item": snapshot.to_doc()}

    @app.post("/descriptions")
    def post_description(body: dict, agent: AgentRef = Depends(resolve_agent)):
        defs = DescriptionDefs.from_request(body.get("defs", {}))
        desc_id, version = registry.register_description(
            store, body.get("name", ""), defs, agent, body.get("purpose", "")
        )
        return {"id": desc_id, "version": version}

    @app.post("/descriptions/{desc_id}/versions")
    def post_description_version(desc_id: str, body: dict,
                                 agent: AgentRef = Depends(resolve_agent)):
        defs = DescriptionDefs.from_request(body.get("defs", {}))
        version = registry.add_description_version(
            store, desc_id, defs, agent, body.get("purpose", "")
        )
        return {"version": version}

    @app.post("/descriptions/{desc_id}/instantiate")
    def post_instantiate(desc_id: str, body: dict, agent: AgentRef = Depends(resolve_agent)):
        selector_doc = body.get("versionSelector", {"viewpoint": "last"})
        if "pinned" in selector_doc:
            selector = ("pinned", int(selector_doc["pinned"]))
        else:
            selector = ("viewpoint", selector_doc.get("viewpoint", "last"))
        snapshot = instantiate_item(
            store, desc_id, selector, body.get("name", ""), agent, body.get("purpose", "")
        )
        return {"id": snapshot.id, "item": snapshot.to_doc()}

    @app.post("/items/{item_id}/rerun")
    def post_rerun(item_id: str, body: dict, agent: AgentRef = Depends(resolve_agent)):
        overrides = [
            Property(o["name"], o["value"]) for o in body.get("overrides", [])
        ]
        snapshot = rerun_item(
            store, item_id, overrides, body.get("name", ""), agent, body.get("purpose", "")
        )
        return {"id": snapshot.id, "item": snapshot.to_doc()}

    @app.post("/schemas")
    def post_schema(body: dict, agent: AgentRef = Depends(resolve_agent)):
        schema_id, version = register_schema(
            store, body.get("name", ""), body.get("definition", {}),
            agent, body.get("purpose", ""),
        )
        return {"id": schema_id, "version": version}

    if console_dir and Path(console_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    return app

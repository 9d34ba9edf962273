"""Command-line client.

    itemforge --store PATH [--agent TOKEN] [--json] SUBCOMMAND ...

Store path comes from --store or ITEMFORGE_STORE; the agent token from
--agent or ITEMFORGE_AGENT, resolved through tokens.json in the store root.
Exit codes: 0 success, 1 kernel error (code and message on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

from . import api as api_mod
from . import demos, registry
from .canonical import canonical_json
from .errors import ItemForgeError, Unauthenticated
from .model import Property, Transition
from .registry import AgentRef, DescriptionDefs
from .store import Store, open_store

_CONSTRAINT_RE = re.compile(r"^([^=!<>]+)(==|!=|<=|>=|<|>)(.*)$")
SYSTEM_TOKEN = "system-token"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="itemforge", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--store", default=os.environ.get("ITEMFORGE_STORE"),
                   help="store directory (or ITEMFORGE_STORE)")
    p.add_argument("--agent", default=os.environ.get("ITEMFORGE_AGENT"),
                   help="agent token (or ITEMFORGE_AGENT)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="create and bootstrap a store")

    agent = sub.add_parser("agent", help="manage agents").add_subparsers(
        dest="agent_cmd", required=True)
    agent_new = agent.add_parser("new", help="register an agent and a token")
    agent_new.add_argument("name")
    agent_new.add_argument("--roles", required=True, help="comma-separated roles")
    agent_new.add_argument("--kind", choices=["Human", "Mechanical"], default="Human")
    agent_new.add_argument("--token", help="token to map (defaults to the agent name)")

    schema = sub.add_parser("schema", help="manage outcome schemas").add_subparsers(
        dest="schema_cmd", required=True)
    for cmd in ("register", "version"):
        sp = schema.add_parser(cmd)
        sp.add_argument("name")
        sp.add_argument("--definition", required=True, help="JSON schema document file")

    desc = sub.add_parser("desc", help="manage descriptions").add_subparsers(
        dest="desc_cmd", required=True)
    d_register = desc.add_parser("register")
    d_register.add_argument("name")
    d_register.add_argument("--defs", required=True, help="JSON defs file")
    d_version = desc.add_parser("version")
    d_version.add_argument("desc")
    d_version.add_argument("--defs", required=True)
    d_diff = desc.add_parser("diff")
    d_diff.add_argument("desc")
    d_diff.add_argument("v1", type=int)
    d_diff.add_argument("v2", type=int)
    d_show = desc.add_parser("show")
    d_show.add_argument("desc")
    d_show.add_argument("--version", type=int, default=None)
    d_export = desc.add_parser("export")
    d_export.add_argument("desc")
    d_export.add_argument("file")
    d_import = desc.add_parser("import")
    d_import.add_argument("file")

    item = sub.add_parser("item", help="inspect and create items").add_subparsers(
        dest="item_cmd", required=True)
    i_new = item.add_parser("new")
    i_new.add_argument("desc")
    i_new.add_argument("name")
    group = i_new.add_mutually_exclusive_group()
    group.add_argument("--pin", type=int, help="pin a description version")
    group.add_argument("--viewpoint", default="last")
    i_show = item.add_parser("show")
    i_show.add_argument("id")
    i_history = item.add_parser("history")
    i_history.add_argument("id")
    i_history.add_argument("--agent-id")
    i_history.add_argument("--role")
    i_history.add_argument("--kind")
    i_history.add_argument("--from", dest="time_from", type=int)
    i_history.add_argument("--to", dest="time_to", type=int)
    i_history.add_argument("--step-prefix")
    i_lineage = item.add_parser("lineage")
    i_lineage.add_argument("id")

    jobs = sub.add_parser("jobs", help="list jobs for the acting agent")
    jobs.add_argument("--item", help="restrict to one item")

    ex = sub.add_parser("exec", help="apply a workflow transition")
    ex.add_argument("item")
    ex.add_argument("step")
    ex.add_argument("transition",
                    choices=["start", "complete", "suspend", "resume"])
    ex.add_argument("--outcome", help="outcome JSON file (for complete)")
    ex.add_argument("--purpose", default="")

    edit = sub.add_parser("edit", help="patch a live workflow")
    edit.add_argument("item")
    edit.add_argument("--patch", required=True, help="patch JSON file")
    edit.add_argument("--purpose", default="")

    query = sub.add_parser("query", help="find items by property constraints")
    query.add_argument("constraints", nargs="+",
                       help="e.g. Type==SparkPlugType count>=2")

    rerun = sub.add_parser("rerun", help="re-run an item with overrides")
    rerun.add_argument("item")
    rerun.add_argument("--name", required=True)
    rerun.add_argument("--set", dest="overrides", action="append", default=[],
                       help="property override name=value")
    rerun.add_argument("--purpose", default="")

    sub.add_parser("verify", help="check store integrity")

    export = sub.add_parser("export", help="dump all events as NDJSON")
    export.add_argument("--out", help="output file (default stdout)")

    serve = sub.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8484)
    serve.add_argument("--console", help="directory of console static files")

    demo = sub.add_parser("demo", help="run a built-in scenario")
    demo.add_argument("name")
    return p


def _open(args, create: bool = False) -> Store:
    if not args.store:
        raise SystemExit(2)
    return open_store(args.store, create=create)


def _acting_agent(store: Store, args) -> AgentRef:
    token = args.agent or SYSTEM_TOKEN
    tokens = api_mod.load_tokens(store.files.root / "tokens.json")
    agent_item_id = tokens.get(token)
    if agent_item_id is None:
        raise Unauthenticated(f"unknown agent token {token!r}")
    return registry.agent_ref(store, agent_item_id)


def _emit(args, doc, human: str | None = None) -> None:
    if args.json:
        print(canonical_json(doc))
    else:
        print(human if human is not None else canonical_json(doc))


def _read_json(path: str):
    return json.loads(Path(path).read_text("utf-8"))


def _parse_constraint(text: str):
    m = _CONSTRAINT_RE.match(text)
    if m is None:
        raise SystemExit(2)
    name, op, raw = m.groups()
    return name, op, api_mod.parse_scalar(raw)


def _run(args) -> int:
    if args.command == "init":
        if not args.store:
            print("init requires --store", file=sys.stderr)
            return 2
        store = open_store(args.store, create=True)
        api_mod.save_token(store.files.root / "tokens.json", SYSTEM_TOKEN,
                           registry.SYSTEM_AGENT_ID)
        store.close()
        _emit(args, {"store": str(args.store), "systemToken": SYSTEM_TOKEN},
              f"initialized {args.store} (system token: {SYSTEM_TOKEN})")
        return 0

    if args.command == "demo":
        if args.name not in demos.DEMOS:
            print(f"unknown demo {args.name!r}; choose from {', '.join(demos.DEMOS)}",
                  file=sys.stderr)
            return 2
        if not args.store:
            return 2
        demos.run_demo(args.name, args.store)
        _emit(args, {"demo": args.name, "result": "ok"}, f"demo {args.name}: ok")
        return 0

    store = _open(args)
    try:
        if args.command == "agent":
            agent = _acting_agent(store, args)
            ref = registry.create_agent(store, args.name, args.roles.split(","),
                                        args.kind, agent)
            token = args.token or args.name
            api_mod.save_token(store.files.root / "tokens.json", token, ref.agent_item_id)
            _emit(args, {"id": ref.agent_item_id, "token": token},
                  f"agent {args.name} -> {ref.agent_item_id} (token: {token})")
            return 0

        if args.command == "schema":
            agent = _acting_agent(store, args)
            definition = _read_json(args.definition)
            if args.schema_cmd == "register":
                schema_id, version = registry.register_schema(store, args.name,
                                                              definition, agent)
            else:
                schema_id, version = "", registry.add_schema_version(
                    store, args.name, definition, agent)
            _emit(args, {"id": schema_id, "version": version},
                  f"schema {args.name} v{version}")
            return 0

        if args.command == "desc":
            if args.desc_cmd == "register":
                agent = _acting_agent(store, args)
                defs = DescriptionDefs.from_request(_read_json(args.defs))
                desc_id, version = registry.register_description(store, args.name,
                                                                 defs, agent)
                _emit(args, {"id": desc_id, "version": version},
                      f"description {args.name} -> {desc_id} v{version}")
            elif args.desc_cmd == "version":
                agent = _acting_agent(store, args)
                defs = DescriptionDefs.from_request(_read_json(args.defs))
                version = registry.add_description_version(store, args.desc, defs, agent)
                _emit(args, {"version": version}, f"version {version}")
            elif args.desc_cmd == "diff":
                change_set = registry.diff_description_versions(store, args.desc,
                                                                args.v1, args.v2)
                _emit(args, change_set)
            elif args.desc_cmd == "show":
                snapshot = registry.find_description(store, args.desc)
                total = registry.description_versions(store, snapshot.id)
                version = args.version if args.version is not None else total - 1
                defs = registry.describe(store, snapshot.id, version)
                _emit(args, {
                    "id": snapshot.id, "name": snapshot.name, "versions": total,
                    "version": version, "workflow": defs.workflow_doc,
                    "properties": [p.to_doc() for p in defs.property_defs],
                    "collections": list(defs.collection_defs),
                })
            elif args.desc_cmd == "export":
                registry.export_description(store, args.desc, args.file)
                _emit(args, {"file": args.file}, f"exported to {args.file}")
            else:
                agent = _acting_agent(store, args)
                desc_id, latest = registry.import_description(store, args.file, agent)
                _emit(args, {"id": desc_id, "versions": latest + 1},
                      f"imported {desc_id} ({latest + 1} versions)")
            return 0

        if args.command == "item":
            if args.item_cmd == "new":
                agent = _acting_agent(store, args)
                selector = ("pinned", args.pin) if args.pin is not None else (
                    "viewpoint", args.viewpoint)
                snapshot = registry.instantiate_item(store, args.desc, selector,
                                                     args.name, agent)
                _emit(args, {"id": snapshot.id}, snapshot.id)
            elif args.item_cmd == "show":
                _emit(args, store.item(args.id).to_doc())
            elif args.item_cmd == "history":
                events = store.query_history(
                    args.id, agent_id=args.agent_id, role=args.role, kind=args.kind,
                    time_from=args.time_from, time_to=args.time_to,
                    step_prefix=args.step_prefix,
                )
                docs = [e.to_doc() for e in events]
                _emit(args, {"events": docs}, "\n".join(
                    f"{d['seq']:>4}  {d['kind']:<16} {d.get('stepPath', '')}"
                    f"  {d['agentId'][:8]}  {d.get('transition', '')}"
                    for d in docs
                ))
            else:
                _emit(args, {"chain": store.lineage(args.id)})
            return 0

        if args.command == "jobs":
            agent = _acting_agent(store, args)
            jobs = store.enabled_jobs(item_id=args.item, roles=agent.roles)
            docs = [j.to_doc() for j in jobs]
            _emit(args, {"jobs": docs}, "\n".join(
                f"{d['itemId']}  {d['stepPath']}  {d['transition']}" for d in docs
            ))
            return 0

        if args.command == "exec":
            agent = _acting_agent(store, args)
            outcome = _read_json(args.outcome) if args.outcome else None
            snapshot, events = store.apply_transition(
                args.item, args.step, Transition(args.transition.capitalize()),
                outcome, agent, args.purpose,
            )
            _emit(args, {"events": [e.to_doc() for e in events]},
                  f"{args.transition} {args.step}: seq {events[0].seq}")
            return 0

        if args.command == "edit":
            agent = _acting_agent(store, args)
            snapshot, event = store.edit_live_workflow(args.item,
                                                       _read_json(args.patch),
                                                       agent, args.purpose)
            _emit(args, {"event": event.to_doc()}, f"edited: seq {event.seq}")
            return 0

        if args.command == "query":
            constraints = [_parse_constraint(c) for c in args.constraints]
            ids = sorted(store.query_items(constraints))
            _emit(args, {"items": ids}, "\n".join(ids))
            return 0

        if args.command == "rerun":
            agent = _acting_agent(store, args)
            overrides = []
            for text in args.overrides:
                name, _, raw = text.partition("=")
                overrides.append(Property(name, api_mod.parse_scalar(raw)))
            snapshot = registry.rerun_item(store, args.item, overrides, args.name,
                                           agent, args.purpose)
            _emit(args, {"id": snapshot.id}, snapshot.id)
            return 0

        if args.command == "verify":
            defects = store.verify_integrity()
            _emit(args, {"ok": not defects, "defects": defects},
                  "ok" if not defects else "\n".join(
                      f"{d['itemId']} seq={d['seq']}: {d['defect']} ({d['detail']})"
                      for d in defects
                  ))
            return 0 if not defects else 1

        if args.command == "export":
            lines = store.export_events()
            if args.out:
                with open(args.out, "w", encoding="utf-8") as f:
                    for line in lines:
                        f.write(line + "\n")
                _emit(args, {"file": args.out}, f"exported to {args.out}")
            else:
                for line in lines:
                    print(line)
            return 0

        if args.command == "serve":
            import uvicorn

            app = api_mod.create_app(store, console_dir=args.console)
            uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
            return 0
    finally:
        store.close()
    return 2


def run_command(argv: list[str]) -> int:
    """Parse and execute; returns the process exit code."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _run(args)
    except SystemExit as e:
        return int(e.code or 0)
    except ItemForgeError as e:
        print(f"{e.code}: {e.message}", file=sys.stderr)
        return 1
    except demos.DemoAssertion as e:
        print(f"demo assertion failed: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()

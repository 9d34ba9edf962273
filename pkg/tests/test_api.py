"""HTTP service: wire mapping, authentication, long-polling, racing writes,
and a randomized differential test proving every endpoint leaves the store in
exactly the state the direct kernel call would."""

import random
import threading

import pytest
from fastapi.testclient import TestClient

from itemforge import create_agent, open_store, register_schema, system_agent
from itemforge import workflow as wf
from itemforge.api import create_app, save_token
from itemforge.model import Property, Transition
from itemforge.registry import DescriptionDefs
from itemforge import registry
from conftest import make_clock, make_id_factory
from scenario_gen import SCHEMAS, make_outcome, random_graph, TEMPLATE_PROPS
from test_workflow_exec import act


@pytest.fixture
def service(tmp_path):
    store = open_store(tmp_path / "store", create=True,
                       clock=make_clock(), id_factory=make_id_factory(2))
    sysagent = system_agent(store)
    op = create_agent(store, "operator-7", ["op", "qa", "modeler"], "Human", sysagent)
    tokens = store.files.root / "tokens.json"
    save_token(tokens, "tok-op", op.agent_item_id)
    save_token(tokens, "tok-sys", sysagent.agent_item_id)
    app = create_app(store)
    client = TestClient(app, raise_server_exceptions=False)
    client.headers["Authorization"] = "Bearer tok-op"
    return store, client, op


def _setup_widget(store, agent):
    register_schema(store, "R", {"v": {"type": "integer", "required": True}}, agent)
    graph = wf.chain(("A", act("op", ("R", 0))), ("B", act("op")))
    desc_id, _ = registry.register_description(
        store, "Widget", DescriptionDefs(wf.graph_to_doc(graph)), agent)
    item = registry.instantiate_item(store, desc_id, ("viewpoint", "last"), "w-1", agent)
    return desc_id, item.id


def test_health_needs_no_auth(service):
    _, client, _ = service
    response = client.get("/health", headers={"Authorization": ""})
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_unknown_token_401(service):
    _, client, _ = service
    assert client.get("/items", headers={"Authorization": "Bearer nope"}).status_code == 401
    assert client.get("/items", headers={"Authorization": ""}).status_code == 401


def test_whoami_tracks_role_properties(service):
    store, client, op = service
    assert set(client.get("/agents/me").json()["roles"]) == set(op.roles)
    store.set_property(op.agent_item_id, "Roles", "qa", system_agent(store),
                       role="admin")
    assert client.get("/agents/me").json()["roles"] == ["qa"]


def test_item_reads_and_404(service):
    store, client, op = service
    _, item_id = _setup_widget(store, op)
    assert client.get(f"/items/{item_id}").json() == store.item(item_id).to_doc()
    assert client.get("/items/no-such-id").status_code == 404
    found = client.get("/items", params={"Type": "Widget"}).json()["items"]
    assert found == [item_id]


def test_jobs_endpoint_matches_kernel(service):
    store, client, op = service
    _, item_id = _setup_widget(store, op)
    wire = client.get(f"/agents/{op.agent_item_id}/jobs").json()
    kernel = store.enabled_jobs(roles=op.roles)
    assert [(j["itemId"], j["stepPath"], j["transition"]) for j in wire["jobs"]] == [
        (j.item_id, j.step_path, j.transition.value) for j in kernel
    ]
    widget_job = next(j for j in wire["jobs"] if j["itemId"] == item_id)
    assert widget_job["itemName"] == "w-1"
    assert widget_job["schemaDef"] == store.schema("R", 0).to_doc()


def test_execute_and_error_mapping(service):
    store, client, op = service
    _, item_id = _setup_widget(store, op)
    url = f"/items/{item_id}/jobs/execute"
    # disabled transition: 409 and zero new events
    seq = store.item(item_id).last_event_seq
    response = client.post(url, json={"stepPath": "A", "transition": "Complete",
                                      "outcome": {"v": 1}})
    assert response.status_code == 409
    assert store.item(item_id).last_event_seq == seq

    assert client.post(url, json={"stepPath": "A", "transition": "Start"}).status_code == 200
    # invalid outcome: 422 with field-level violations, store untouched
    seq = store.item(item_id).last_event_seq
    response = client.post(url, json={"stepPath": "A", "transition": "Complete",
                                      "outcome": {"v": "nope"}})
    assert response.status_code == 422
    assert response.json()["violations"][0]["field"] == "v"
    assert store.item(item_id).last_event_seq == seq

    response = client.post(url, json={"stepPath": "A", "transition": "Complete",
                                      "outcome": {"v": 3}, "purpose": "done"})
    assert response.status_code == 200
    assert store.item(item_id).outcomes["R"][0].content == {"v": 3}
    # every 2xx mutating response corresponds to >= 1 new event
    assert len(response.json()["events"]) >= 1


def test_workflow_edit_endpoint(service):
    store, client, op = service
    _, item_id = _setup_widget(store, op)
    patch = {"op": "insertActivity", "parentPath": "", "name": "Pre", "before": "A",
             "definition": wf.node_to_doc(act("op"))}
    response = client.post(f"/items/{item_id}/workflow/edit", json={"patch": patch})
    assert response.status_code == 200
    assert "Pre" in store.item(item_id).workflow.graph.nodes
    # edit touching an executed step maps to 409
    client.post(f"/items/{item_id}/jobs/execute",
                json={"stepPath": "Pre", "transition": "Start"})
    response = client.post(f"/items/{item_id}/workflow/edit", json={
        "patch": {"op": "removeActivity", "path": "Pre"}})
    assert response.status_code == 409


def test_description_and_schema_endpoints(service):
    store, client, op = service
    response = client.post("/schemas", json={
        "name": "S1", "definition": {"x": {"type": "integer", "required": True}}})
    assert response.status_code == 200
    graph_doc = wf.graph_to_doc(wf.chain(("A", act("op", ("S1", 0)))))
    response = client.post("/descriptions", json={"name": "Thing",
                                                  "defs": {"workflow": graph_doc}})
    assert response.status_code == 200
    desc_id = response.json()["id"]
    assert response.json()["version"] == 0
    # duplicate -> 409; invalid graph -> 422
    assert client.post("/descriptions", json={
        "name": "Thing", "defs": {"workflow": graph_doc}}).status_code == 409
    bad = {"nodes": {"A": wf.node_to_doc(act())}, "edges": [], "start": "A", "ends": []}
    assert client.post("/descriptions", json={
        "name": "Bad", "defs": {"workflow": bad}}).status_code == 422

    graph_doc2 = wf.graph_to_doc(wf.chain(("A", act("op", ("S1", 0))), ("B", act("op"))))
    response = client.post(f"/descriptions/{desc_id}/versions",
                           json={"defs": {"workflow": graph_doc2}})
    assert response.json()["version"] == 1
    diff = client.get(f"/descriptions/{desc_id}/diff", params={"v1": 0, "v2": 1}).json()
    assert diff["addedNodes"] == ["B"]

    response = client.post(f"/descriptions/{desc_id}/instantiate",
                           json={"versionSelector": {"pinned": 0}, "name": "t-0"})
    assert response.status_code == 200
    item_id = response.json()["id"]
    assert store.item(item_id).origin.version == 0

    response = client.post(f"/items/{item_id}/rerun",
                           json={"overrides": [{"name": "k", "value": 2}],
                                 "name": "t-0-again"})
    assert response.status_code == 200
    clone = store.item(response.json()["id"])
    assert clone.origin.source_item_id == item_id
    assert clone.properties["k"].value == 2


def test_racing_executions_one_wins(service):
    store, client, op = service
    _, item_id = _setup_widget(store, op)
    url = f"/items/{item_id}/jobs/execute"
    body = {"stepPath": "A", "transition": "Start"}
    barrier = threading.Barrier(2)
    results = []

    def fire():
        local = TestClient(create_app(store), raise_server_exceptions=False)
        local.headers["Authorization"] = "Bearer tok-op"
        barrier.wait()
        results.append(local.post(url, json=body).status_code)

    threads = [threading.Thread(target=fire) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(results) == [200, 409]


def test_long_poll_returns_on_change(service):
    store, client, op = service
    _, item_id = _setup_widget(store, op)
    cursor = client.get(f"/agents/{op.agent_item_id}/jobs").json()["cursor"]
    results = {}

    def poll():
        results["response"] = client.get(
            f"/agents/{op.agent_item_id}/jobs",
            params={"wait": 10, "cursor": cursor},
        ).json()

    thread = threading.Thread(target=poll)
    thread.start()
    store.apply_transition(item_id, "A", Transition.START, None, op)
    thread.join(timeout=8)
    assert not thread.is_alive(), "long poll must return within one cycle of a change"
    jobs = results["response"]["jobs"]
    assert {j["transition"] for j in jobs if j["stepPath"] == "A"} == {
        "Complete", "Suspend"}
    assert results["response"]["cursor"] > cursor


# -- randomized differential: API == kernel -------------------------------------

class KernelDriver:
    def __init__(self, store, agents):
        self.store = store
        self.agents = agents

    def register_schema(self, name, definition):
        register_schema(self.store, name, definition, self.agents[0])

    def register_description(self, name, defs_doc):
        defs = DescriptionDefs.from_request(defs_doc)
        return registry.register_description(self.store, name, defs, self.agents[0])[0]

    def add_version(self, desc_id, defs_doc):
        registry.add_description_version(
            self.store, desc_id, DescriptionDefs.from_request(defs_doc), self.agents[0])

    def instantiate(self, desc_id, version, name):
        return registry.instantiate_item(self.store, desc_id, ("pinned", version),
                                         name, self.agents[0]).id

    def jobs(self, agent_index):
        return [(j.item_id, j.step_path, j.transition.value,
                 j.schema_ref[0] if j.schema_ref else None)
                for j in self.store.enabled_jobs(roles=self.agents[agent_index].roles)]

    def execute(self, agent_index, item_id, step, transition, outcome):
        try:
            self.store.apply_transition(item_id, step, Transition(transition),
                                        outcome, self.agents[agent_index], "diff")
            return "ok"
        except Exception:
            return "error"

    def edit(self, item_id, patch):
        try:
            self.store.edit_live_workflow(item_id, patch, self.agents[0], "diff")
            return "ok"
        except Exception:
            return "error"

    def rerun(self, item_id, overrides, name):
        return registry.rerun_item(
            self.store, item_id, [Property(n, v) for n, v in overrides],
            name, self.agents[0]).id


class ApiDriver:
    def __init__(self, store, agents):
        self.store = store
        tokens = store.files.root / "tokens.json"
        for i, agent in enumerate(agents):
            save_token(tokens, f"tok{i}", agent.agent_item_id)
        self.agents = agents
        self.client = TestClient(create_app(store), raise_server_exceptions=False)

    def _headers(self, i=0):
        return {"Authorization": f"Bearer tok{i}"}

    def register_schema(self, name, definition):
        self.client.post("/schemas", json={"name": name, "definition": definition},
                         headers=self._headers())

    def register_description(self, name, defs_doc):
        response = self.client.post("/descriptions", json={"name": name,
                                                           "defs": defs_doc},
                                    headers=self._headers())
        return response.json()["id"]

    def add_version(self, desc_id, defs_doc):
        self.client.post(f"/descriptions/{desc_id}/versions", json={"defs": defs_doc},
                         headers=self._headers())

    def instantiate(self, desc_id, version, name):
        response = self.client.post(
            f"/descriptions/{desc_id}/instantiate",
            json={"versionSelector": {"pinned": version}, "name": name},
            headers=self._headers())
        return response.json()["id"]

    def jobs(self, agent_index):
        agent_id = self.agents[agent_index].agent_item_id
        docs = self.client.get(f"/agents/{agent_id}/jobs",
                               headers=self._headers(agent_index)).json()["jobs"]
        return [(d["itemId"], d["stepPath"], d["transition"],
                 d["schema"]["name"] if d["schema"] else None) for d in docs]

    def execute(self, agent_index, item_id, step, transition, outcome):
        response = self.client.post(
            f"/items/{item_id}/jobs/execute",
            json={"stepPath": step, "transition": transition, "outcome": outcome,
                  "purpose": "diff"},
            headers=self._headers(agent_index))
        return "ok" if response.status_code == 200 else "error"

    def edit(self, item_id, patch):
        response = self.client.post(f"/items/{item_id}/workflow/edit",
                                    json={"patch": patch, "purpose": "diff"},
                                    headers=self._headers())
        return "ok" if response.status_code == 200 else "error"

    def rerun(self, item_id, overrides, name):
        response = self.client.post(
            f"/items/{item_id}/rerun",
            json={"overrides": [{"name": n, "value": v} for n, v in overrides],
                  "name": name},
            headers=self._headers())
        return response.json()["id"]


def drive(driver, seed: int, n_ops: int):
    rng = random.Random(seed)
    for name, definition in SCHEMAS.items():
        driver.register_schema(name, definition)
    defs_doc = {
        "workflow": wf.graph_to_doc(random_graph(rng)),
        "properties": [p.to_doc() for p in TEMPLATE_PROPS],
        "collections": [{"name": "Parts"}],
    }
    desc_id = driver.register_description(f"Thing-{seed}", defs_doc)
    versions = 1
    items = [driver.instantiate(desc_id, 0, f"t-{i}") for i in range(2)]
    for step_no in range(n_ops):
        roll = rng.random()
        agent_index = rng.randrange(2)
        if roll < 0.70:
            jobs = [j for j in driver.jobs(agent_index) if j[0] in items]
            if not jobs:
                continue
            item_id, step, transition, schema = rng.choice(jobs)
            outcome = None
            if transition == "Complete":
                outcome = make_outcome(rng, (schema, 0) if schema else None)
                if schema and rng.random() < 0.1:
                    outcome = {"wrong": True}
            driver.execute(agent_index, item_id, step, transition, outcome)
        elif roll < 0.80:
            patch = {"op": "insertActivity", "parentPath": "",
                     "name": f"ins{step_no}", "before": "a1",
                     "definition": wf.node_to_doc(act(rng.choice(["op", "qa"])))}
            driver.edit(rng.choice(items), patch)
        elif roll < 0.90:
            if len(items) < 6:
                items.append(driver.rerun(rng.choice(items), [("count", rng.randint(0, 5))],
                                          f"r-{step_no}"))
        else:
            driver.add_version(desc_id, {
                "workflow": wf.graph_to_doc(random_graph(rng)),
                "properties": [p.to_doc() for p in TEMPLATE_PROPS],
                "collections": [{"name": "Parts"}],
            })
            versions += 1


def store_state(store):
    return {
        item_id: store.files.read_event_docs(item_id)
        for item_id in store.files.item_ids()
    }


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_api_transparency_differential(tmp_path, seed):
    agents_spec = [("a0", ["op", "modeler"]), ("a1", ["qa", "op"])]
    stores = []
    for flavor in ("kernel", "api"):
        store = open_store(tmp_path / flavor, create=True,
                           clock=make_clock(), id_factory=make_id_factory(seed))
        sysagent = system_agent(store)
        agents = [create_agent(store, n, r, "Mechanical", sysagent)
                  for n, r in agents_spec]
        stores.append((store, agents))
    kernel_store, kernel_agents = stores[0]
    api_store, api_agents = stores[1]
    drive(KernelDriver(kernel_store, kernel_agents), seed, 60)
    drive(ApiDriver(api_store, api_agents), seed, 60)
    assert store_state(kernel_store) == store_state(api_store)

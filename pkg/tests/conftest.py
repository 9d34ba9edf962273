import random
import uuid

import pytest

from itemforge import create_agent, open_store, system_agent


def make_clock(start: int = 1_700_000_000_000, step: int = 7):
    """Deterministic millisecond clock."""
    state = {"now": start}

    def clock() -> int:
        state["now"] += step
        return state["now"]

    return clock


def make_id_factory(seed: int):
    rng = random.Random(seed)

    def factory() -> str:
        return str(uuid.UUID(int=rng.getrandbits(128), version=4))

    return factory


@pytest.fixture
def store(tmp_path):
    s = open_store(tmp_path / "store", create=True,
                   clock=make_clock(), id_factory=make_id_factory(1))
    yield s
    s.close()


@pytest.fixture
def sysagent(store):
    return system_agent(store)


@pytest.fixture
def operator(store, sysagent):
    return create_agent(store, "operator-7",
                        ["tester", "fitter", "operator", "modeler", "op", "qa"],
                        "Human", sysagent)

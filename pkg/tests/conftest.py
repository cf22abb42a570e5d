import random

import pytest

from groundcypher import synthetic
from groundcypher.lpg import load_graph

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary prints them all."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, passed, detail))
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}  {detail}")


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def synth_records():
    return synthetic.make_graph_records(100, seed=0)


@pytest.fixture(scope="session")
def synth_graph(synth_records):
    return load_graph(*synth_records)


@pytest.fixture(scope="session")
def synth_qas(synth_graph):
    return synthetic.make_qas(synth_graph, 50, seed=0)


def node(i, labels, name, **props):
    return {"id": i, "labels": labels, "name": name, "properties": props}


def edge(i, src, dst, type_):
    return {"id": i, "src": src, "dst": dst, "type": type_, "properties": {}}


@pytest.fixture
def triangle():
    """a-b-c triangle, all label A, edges of type R."""
    return load_graph(
        [node(0, ["A"], "a"), node(1, ["A"], "b"), node(2, ["A"], "c")],
        [edge(0, 0, 1, "R"), edge(1, 1, 2, "R"), edge(2, 2, 0, "R")],
    )


@pytest.fixture
def drug_graph():
    """Small graph shaped like the CYP3A4 / strongyloidiasis example."""
    nodes = [
        node(0, ["GeneOrProtein"], "CYP3A4"),
        node(1, ["Drug"], "Ivermectin", description="Ivermectin is a broad-spectrum anti-parasite medication."),
        node(2, ["Disease"], "strongyloidiasis"),
        node(3, ["Drug"], "Thiabendazole", description="2-Substituted benzimidazole first introduced in 1962."),
        node(4, ["Drug"], "Midazolam", description="A benzodiazepine."),
        node(5, ["Disease"], "insomnia"),
    ]
    edges = [
        edge(0, 0, 1, "ENZYME"),
        edge(1, 1, 2, "INDICATION"),
        edge(2, 3, 2, "INDICATION"),
        edge(3, 0, 4, "ENZYME"),
        edge(4, 4, 5, "INDICATION"),
    ]
    return load_graph(nodes, edges)

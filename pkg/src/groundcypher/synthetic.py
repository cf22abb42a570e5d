"""Synthetic typed knowledge graphs and template-answerable QA sets for tests and demos."""

from __future__ import annotations

import random
from pathlib import Path

from .candidates import CONNECTING, ONE_HOP, TWO_HOP, enumerate_candidates
from .cypher import execute
from .lpg import HashingEmbedder, PropertyGraph, extract_schema, load_graph, write_jsonl

LABELS = ("Drug", "Disease", "GeneOrProtein")
# rel type -> allowed (label, label) endpoints
REL_ENDPOINTS = {
    "INDICATION": [("Drug", "Disease")],
    "TARGET": [("Drug", "GeneOrProtein")],
    "ASSOCIATED_WITH": [("GeneOrProtein", "Disease")],
    "INTERACTS_WITH": [("GeneOrProtein", "GeneOrProtein"), ("Drug", "Drug")],
}
_SYLLABLES = ("ka", "lo", "mi", "ne", "tra", "vo", "zen", "phi", "dor", "cy", "sul", "ter", "xi", "bro", "qua")


def _names(rng: random.Random, n: int) -> list[str]:
    out: list[str] = []
    seen = set()
    while len(out) < n:
        name = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


def make_graph_records(
    n_nodes: int = 100, avg_degree: float = 4.0, seed: int = 0, embed_dim: int = 64
) -> tuple[list[dict], list[dict]]:
    rng = random.Random(seed)
    embedder = HashingEmbedder(embed_dim)
    names = _names(rng, n_nodes)
    nodes = []
    by_label: dict[str, list[int]] = {lab: [] for lab in LABELS}
    for i, name in enumerate(names):
        label = LABELS[i % len(LABELS)]
        by_label[label].append(i)
        nodes.append(
            {
                "id": i,
                "labels": [label],
                "name": name,
                "properties": {"description": f"{name} is a {label} entity in the synthetic graph."},
                "embedding": [round(float(x), 6) for x in embedder.embed(name)],
            }
        )
    edges = []
    seen = set()
    target = int(n_nodes * avg_degree / 2)
    rels = sorted(REL_ENDPOINTS)
    while len(edges) < target:
        rel = rng.choice(rels)
        a_lab, b_lab = rng.choice(REL_ENDPOINTS[rel])
        a, b = rng.choice(by_label[a_lab]), rng.choice(by_label[b_lab])
        key = (min(a, b), max(a, b), rel)
        if a == b or key in seen:
            continue
        seen.add(key)
        edges.append({"id": len(edges), "src": a, "dst": b, "type": rel, "properties": {}})
    return nodes, edges


def make_graph(n_nodes: int = 100, avg_degree: float = 4.0, seed: int = 0) -> PropertyGraph:
    nodes, edges = make_graph_records(n_nodes, avg_degree, seed)
    return load_graph(nodes, edges)


def _question(template: str, query, names: list[str]) -> str:
    npats = query.node_patterns
    tgt = next(p for p in npats if p.var == "tgt")
    kind = tgt.label or "entities"
    rels = [e.rel_type for e in query.edge_patterns if e.rel_type]
    via = f" via {' and '.join(rels)}" if rels else ""
    if template == ONE_HOP:
        return f"Which {kind} are directly related to {names[0]}{via}?"
    if template == TWO_HOP:
        return f"Which {kind} are two steps away from {names[0]}{via}?"
    return f"Which {kind} link {names[0]} and {names[1]}{via}?"


def make_qas(
    graph: PropertyGraph, n: int = 50, seed: int = 0, max_answers: int = 20
) -> list[dict]:
    """QAs whose answer set is exactly the result of one enumerated typed query.

    Templates cycle 1-hop, 2-hop, connecting, so every QA is answerable with
    recall 1 by construction.
    """
    rng = random.Random(seed)
    schema = extract_schema(graph)
    ids = sorted(graph.nodes)
    out: list[dict] = []
    seen_queries = set()
    templates = (ONE_HOP, TWO_HOP, CONNECTING)
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n:
            raise RuntimeError("could not generate enough answerable QAs on this graph")
        template = templates[len(out) % 3]
        if template == CONNECTING:
            mid = rng.choice(ids)
            nbrs = sorted({nb for _, nb in graph.adjacency[mid]} - {mid})
            if len(nbrs) < 2:
                continue
            entities = rng.sample(nbrs, 2)
        else:
            entities = [rng.choice(ids)]
        cands = enumerate_candidates(schema, graph, entities, templates=[template])
        typed = [q for q in cands.candidates if q.specificity > 0]
        if not typed:
            continue
        query = rng.choice(typed)
        text = str(query)
        if text in seen_queries:
            continue
        answers = sorted({row[query.target_var] for row in execute(graph, query)})
        if not 1 <= len(answers) <= max_answers:
            continue
        seen_queries.add(text)
        names = [graph.nodes[e].name for e in entities]
        out.append(
            {
                "id": f"q{len(out):03d}",
                "question": _question(template, query, names),
                "entities": names,
                "answer_ids": answers,
                "template": template,
                "source_query": text,
            }
        )
    return out


def write_fixture(directory: str | Path, n_nodes: int = 100, n_qas: int = 50, seed: int = 0) -> dict:
    """Write nodes.jsonl, edges.jsonl and qa.jsonl; return their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nodes, edges = make_graph_records(n_nodes, seed=seed)
    graph = load_graph(nodes, edges)
    qas = make_qas(graph, n_qas, seed=seed)
    paths = {
        "nodes": directory / "nodes.jsonl",
        "edges": directory / "edges.jsonl",
        "qa": directory / "qa.jsonl",
    }
    write_jsonl(paths["nodes"], nodes)
    write_jsonl(paths["edges"], edges)
    write_jsonl(paths["qa"], qas)
    return paths

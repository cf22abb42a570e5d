"""In-memory labeled property graph with label/name indexes and exact cosine kNN."""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Protocol, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class GraphLoadError(ValueError):
    """Raised when node/edge records violate the graph invariants."""


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class NodeRecord:
    id: int
    labels: frozenset[str]
    name: str
    properties: Mapping[str, Any] = field(default_factory=dict)
    embedding: tuple[float, ...] | None = None


@dataclass(frozen=True)
class EdgeRecord:
    id: int
    src: int
    dst: int
    type: str
    properties: Mapping[str, Any] = field(default_factory=dict)

    def other(self, node_id: int) -> int:
        return self.dst if node_id == self.src else self.src


@dataclass(frozen=True)
class SchemaSummary:
    node_labels: tuple[str, ...]
    rel_types: tuple[str, ...]
    # (label_a, rel_type, label_b) with label_a <= label_b; the label pair is unordered
    triples: tuple[tuple[str, str, str], ...]
    property_keys: Mapping[str, frozenset[str]]

    def neighbours(self, label: str) -> list[tuple[str, str]]:
        """(rel_type, neighbour_label) pairs reachable from ``label`` in one hop."""
        out = set()
        for a, rel, b in self.triples:
            if a == label:
                out.add((rel, b))
            if b == label:
                out.add((rel, a))
        return sorted(out)

    def to_dict(self) -> dict:
        return {
            "node_labels": list(self.node_labels),
            "rel_types": list(self.rel_types),
            "triples": [list(t) for t in self.triples],
            "property_keys": {k: sorted(v) for k, v in sorted(self.property_keys.items())},
        }


class PropertyGraph:
    """Immutable after construction; build one with :func:`load_graph`."""

    def __init__(self, nodes: dict[int, NodeRecord], edges: list[EdgeRecord]):
        self.nodes = nodes
        self.edges = edges
        self.edge_by_id = {e.id: e for e in edges}
        self.label_index: dict[str, set[int]] = defaultdict(set)
        self.name_index: dict[str, set[int]] = defaultdict(set)
        self.adjacency: dict[int, list[tuple[int, int]]] = {nid: [] for nid in nodes}
        for node in nodes.values():
            for label in node.labels:
                self.label_index[label].add(node.id)
            self.name_index[node.name].add(node.id)
        for edge in edges:
            self.adjacency[edge.src].append((edge.id, edge.dst))
            if edge.dst != edge.src:
                self.adjacency[edge.dst].append((edge.id, edge.src))
        self.label_index = dict(self.label_index)
        self.name_index = dict(self.name_index)

        embedded = sorted(nid for nid, n in nodes.items() if n.embedding is not None)
        self._emb_ids = np.asarray(embedded, dtype=np.int64)
        if embedded:
            self._emb = np.asarray([nodes[i].embedding for i in embedded], dtype=np.float64)
            self._emb_norms = np.linalg.norm(self._emb, axis=1)
            self.dim: int | None = self._emb.shape[1]
        else:
            self._emb = np.zeros((0, 0))
            self._emb_norms = np.zeros(0)
            self.dim = None

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n_embedded(self) -> int:
        return len(self._emb_ids)

    def nodes_by_name(self, name: str) -> list[int]:
        return sorted(self.name_index.get(name, ()))

    def knn_nodes(self, query_vector: Sequence[float], k: int) -> list[tuple[int, float]]:
        """Exact top-``k`` nodes by cosine similarity.

        Ties are broken by ascending node id. A zero-norm query or stored
        vector scores -1 so it sorts last instead of producing NaN.
        """
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        if self.dim is None:
            raise ValueError("graph has no node embeddings")
        q = np.asarray(query_vector, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query dimension {q.shape} does not match graph dimension {self.dim}")
        q_norm = float(np.linalg.norm(q))
        scores = np.full(len(self._emb_ids), -1.0)
        if q_norm > 0:
            ok = self._emb_norms > 0
            scores[ok] = (self._emb[ok] @ q) / (self._emb_norms[ok] * q_norm)
        order = np.lexsort((self._emb_ids, -scores))[:k]
        return [(int(self._emb_ids[i]), float(scores[i])) for i in order]


def _node_from_record(rec: Mapping[str, Any]) -> NodeRecord:
    try:
        nid = rec["id"]
        labels = rec["labels"]
        name = rec["name"]
    except KeyError as exc:
        raise GraphLoadError(f"node record missing field {exc.args[0]!r}: {rec!r}") from None
    if not isinstance(nid, int) or isinstance(nid, bool):
        raise GraphLoadError(f"node id must be an integer, got {nid!r}")
    if not labels or not all(isinstance(lab, str) and lab for lab in labels):
        raise GraphLoadError(f"node {nid} needs at least one nonempty label")
    if not isinstance(name, str) or not name:
        raise GraphLoadError(f"node {nid} has an empty or non-string name")
    emb = rec.get("embedding")
    return NodeRecord(
        id=nid,
        labels=frozenset(labels),
        name=name,
        properties=dict(rec.get("properties") or {}),
        embedding=None if emb is None else tuple(float(x) for x in emb),
    )


def _edge_from_record(rec: Mapping[str, Any]) -> EdgeRecord:
    try:
        return EdgeRecord(
            id=rec["id"],
            src=rec["src"],
            dst=rec["dst"],
            type=rec["type"],
            properties=dict(rec.get("properties") or {}),
        )
    except KeyError as exc:
        raise GraphLoadError(f"edge record missing field {exc.args[0]!r}: {rec!r}") from None


def load_graph(
    nodes_source: Iterable[Mapping[str, Any]],
    edges_source: Iterable[Mapping[str, Any]],
) -> PropertyGraph:
    nodes: dict[int, NodeRecord] = {}
    dim = None
    for rec in nodes_source:
        node = _node_from_record(rec)
        if node.id in nodes:
            raise GraphLoadError(f"duplicate node id {node.id}")
        if node.embedding is not None:
            if dim is None:
                dim = len(node.embedding)
            elif len(node.embedding) != dim:
                raise GraphLoadError(
                    f"node {node.id} embedding has dimension {len(node.embedding)}, expected {dim}"
                )
        nodes[node.id] = node

    edges: list[EdgeRecord] = []
    seen_edges: set[int] = set()
    for rec in edges_source:
        edge = _edge_from_record(rec)
        if edge.id in seen_edges:
            raise GraphLoadError(f"duplicate edge id {edge.id}")
        if not isinstance(edge.type, str) or not edge.type:
            raise GraphLoadError(f"edge {edge.id} has an empty relationship type")
        for endpoint in (edge.src, edge.dst):
            if endpoint not in nodes:
                raise GraphLoadError(f"edge {edge.id} references missing node id {endpoint}")
        seen_edges.add(edge.id)
        edges.append(edge)
    return PropertyGraph(nodes, edges)


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    """Yield one object per nonblank line; malformed lines raise with the line number."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphLoadError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise GraphLoadError(f"{path}:{lineno}: expected a JSON object")
            yield obj


def read_embedding_matrix(path: str | Path) -> np.ndarray:
    """Read ``<u64 rows><u64 dim>`` followed by little-endian float32 rows."""
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise GraphLoadError(f"{path}: truncated embedding header")
    rows, dim = struct.unpack("<QQ", data[:16])
    expected = 16 + rows * dim * 4
    if len(data) != expected:
        raise GraphLoadError(f"{path}: expected {expected} bytes for {rows}x{dim}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(rows, dim)


def write_embedding_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    rows, dim = matrix.shape
    Path(path).write_bytes(struct.pack("<QQ", rows, dim) + matrix.tobytes())


def load_graph_files(
    nodes_path: str | Path,
    edges_path: str | Path,
    embeddings_path: str | Path | None = None,
) -> PropertyGraph:
    node_recs = list(iter_jsonl(nodes_path))
    if embeddings_path is not None:
        matrix = read_embedding_matrix(embeddings_path)
        if matrix.shape[0] != len(node_recs):
            raise GraphLoadError(
                f"{embeddings_path}: {matrix.shape[0]} rows but {len(node_recs)} nodes"
            )
        ordered = sorted(range(len(node_recs)), key=lambda i: node_recs[i].get("id", 0))
        for row, idx in enumerate(ordered):
            node_recs[idx] = {**node_recs[idx], "embedding": matrix[row].tolist()}
    return load_graph(node_recs, iter_jsonl(edges_path))


def dump_graph(graph: PropertyGraph) -> tuple[list[dict], list[dict]]:
    """Inverse of :func:`load_graph`: JSON-ready node and edge records."""
    nodes = []
    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        rec = {"id": n.id, "labels": sorted(n.labels), "name": n.name, "properties": dict(n.properties)}
        if n.embedding is not None:
            rec["embedding"] = list(n.embedding)
        nodes.append(rec)
    edges = [
        {"id": e.id, "src": e.src, "dst": e.dst, "type": e.type, "properties": dict(e.properties)}
        for e in graph.edges
    ]
    return nodes, edges


def write_jsonl(path: str | Path, records: Iterable[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def resolve_entity(graph: PropertyGraph, name: str, k: int, embedder: Embedder | None) -> list[int]:
    """Ground a mention string to node ids.

    Exact name matches win outright (all of them, ascending id) and the
    embedder is not called. Otherwise the mention is embedded and the
    top-``k`` cosine neighbours are returned. With no embeddings there is
    nothing to fall back on and the result is empty.
    """
    if not name:
        raise ValueError("entity name must be nonempty")
    exact = graph.nodes_by_name(name)
    if exact:
        return exact
    if graph.dim is None or embedder is None:
        return []
    return [nid for nid, _ in graph.knn_nodes(embedder.embed(name), k)]


def extract_schema(graph: PropertyGraph) -> SchemaSummary:
    triples = set()
    for e in graph.edges:
        for a in graph.nodes[e.src].labels:
            for b in graph.nodes[e.dst].labels:
                lo, hi = sorted((a, b))
                triples.add((lo, e.type, hi))
    keys: dict[str, set[str]] = defaultdict(set)
    for n in graph.nodes.values():
        for label in n.labels:
            keys[label].update(n.properties)
    return SchemaSummary(
        node_labels=tuple(sorted(graph.label_index)),
        rel_types=tuple(sorted({e.type for e in graph.edges})),
        triples=tuple(sorted(triples)),
        property_keys={k: frozenset(v) for k, v in sorted(keys.items())},
    )


class HashingEmbedder:
    """Deterministic character n-gram hashing embedder.

    Stands in for a hosted text embedder: similar spellings share n-grams,
    so a misspelled mention lands near the intended node.
    """

    def __init__(self, dim: int = 64, n: int = 3):
        self.dim = dim
        self.n = n

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        padded = f"#{text.lower()}#"
        for i in range(max(1, len(padded) - self.n + 1)):
            gram = padded[i : i + self.n].encode("utf-8")
            h = int.from_bytes(hashlib.blake2b(gram, digest_size=8).digest(), "little")
            vec[h % self.dim] += 1.0 if (h >> 32) & 1 else -1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

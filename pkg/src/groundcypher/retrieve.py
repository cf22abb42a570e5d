"""Budgeted subgraph retrieval, prompt textualization, answer ranking, and metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .cypher import EdgePattern, NodePattern, PathQuery, execute, serialize_pattern
from .lpg import PropertyGraph

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 20
DETAIL_VALUE_CHARS = 500
PROMPT_HEADER = (
    "Given the information below, return the correct nodes for the following question: {question}"
)


@dataclass
class RetrievedNode:
    node_id: int
    patterns: list[str] = field(default_factory=list)
    source_rank: int = 0


@dataclass
class RetrievedSubgraph:
    candidates: list[RetrievedNode]
    budget: int

    def ids(self) -> list[int]:
        return [c.node_id for c in self.candidates]


@dataclass(frozen=True)
class RankedAnswers:
    question_id: str
    ranked: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError(f"duplicate ids in ranking for question {self.question_id!r}")


@dataclass(frozen=True)
class MetricsReport:
    hit1: Fraction
    hit5: Fraction
    recall20: Fraction
    mrr: Fraction
    n: int

    def to_dict(self) -> dict:
        return {
            "hit1": float(self.hit1),
            "hit5": float(self.hit5),
            "recall20": float(self.recall20),
            "mrr": float(self.mrr),
            "n": self.n,
        }


def instantiate_pattern(graph: PropertyGraph, query: PathQuery, row: Mapping[str, int]) -> str:
    """Render one binding row as a concrete, fully annotated path pattern.

    Variables become ``x1, r1, x2, ...``; every node carries a label and its
    name, every edge its actual type.
    """
    els = []
    for i, el in enumerate(query.elements):
        k = i // 2 + 1
        if isinstance(el, NodePattern):
            node = graph.nodes[row[el.var]]
            label = el.label if el.label is not None else min(node.labels)
            els.append(NodePattern(f"x{k}", label, node.name))
        else:
            els.append(EdgePattern(f"r{k}", graph.edge_by_id[row[el.var]].type))
    return serialize_pattern(els)


def retrieve_subgraph(
    graph: PropertyGraph,
    ranked_queries: Sequence[tuple[PathQuery, float]],
    budget: int = DEFAULT_BUDGET,
) -> RetrievedSubgraph:
    """Execute queries in rank order, collecting distinct target nodes up to ``budget``.

    A query that reaches an already-collected node adds its patterns to that
    node. New nodes within one query are taken in ascending id order; once the
    budget is full no later query is run.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    found: dict[int, RetrievedNode] = {}
    order: list[int] = []
    for rank, (query, _logprob) in enumerate(ranked_queries):
        if len(order) >= budget:
            break
        by_target: dict[int, list[str]] = {}
        for row in execute(graph, query):
            pats = by_target.setdefault(row[query.target_var], [])
            text = instantiate_pattern(graph, query, row)
            if text not in pats:
                pats.append(text)
        for nid in sorted(by_target):
            entry = found.get(nid)
            if entry is None:
                if len(order) >= budget:
                    continue
                entry = found[nid] = RetrievedNode(nid, [], rank)
                order.append(nid)
            for text in by_target[nid]:
                if text not in entry.patterns:
                    entry.patterns.append(text)
    return RetrievedSubgraph([found[nid] for nid in order], budget)


def _details(graph: PropertyGraph, nid: int, detail_keys: Sequence[str] | None) -> dict:
    props = graph.nodes[nid].properties
    keys = sorted(props) if detail_keys is None else [k for k in detail_keys if k in props]
    out = {}
    for key in sorted(keys):
        value = props[key]
        if isinstance(value, str) and len(value) > DETAIL_VALUE_CHARS:
            value = value[:DETAIL_VALUE_CHARS] + " ..."
        out[key] = value
    return out


def textualize(
    subgraph: RetrievedSubgraph,
    graph: PropertyGraph,
    question: str,
    detail_keys: Sequence[str] | None = None,
    max_chars: int | None = None,
) -> str:
    text = PROMPT_HEADER.format(question=question) + "\n\nRetrieved information:\n"
    for cand in subgraph.candidates:
        block = (
            f"\npattern: {cand.patterns!r}\n"
            f"name: {graph.nodes[cand.node_id].name}\n"
            f"details: {_details(graph, cand.node_id, detail_keys)!r}\n"
        )
        if max_chars is not None and len(text) + len(block) > max_chars:
            break
        text += block
    return text


AnswerSelector = Callable[[RetrievedSubgraph], Sequence[int]]


def reference_selector(subgraph: RetrievedSubgraph) -> list[int]:
    """Most distinct patterns first, then earliest source query, then node id."""
    ranked = sorted(
        subgraph.candidates, key=lambda c: (-len(set(c.patterns)), c.source_rank, c.node_id)
    )
    return [c.node_id for c in ranked]


def rank_answers(
    subgraph: RetrievedSubgraph,
    selector: AnswerSelector = reference_selector,
    question_id: str = "",
) -> RankedAnswers:
    ranked = list(selector(subgraph))
    allowed = set(subgraph.ids())
    stray = [nid for nid in ranked if nid not in allowed]
    if stray:
        raise ValueError(f"selector returned ids outside the retrieved candidates: {stray}")
    return RankedAnswers(question_id, tuple(ranked))


def compute_metrics(
    predictions: Iterable[RankedAnswers],
    gold: Iterable[tuple[str, Iterable[int]]] | Mapping[str, Iterable[int]],
) -> MetricsReport:
    """Hit@1, Hit@5, Recall@20 and MRR averaged over questions with nonempty gold."""
    gold_map = dict(gold.items() if isinstance(gold, Mapping) else gold)
    hit1 = hit5 = rec20 = mrr = Fraction(0)
    n = 0
    for pred in predictions:
        if pred.question_id not in gold_map:
            raise KeyError(f"no gold answers for question {pred.question_id!r}")
        answers = set(gold_map[pred.question_id])
        if not answers:
            logger.warning("question %s has an empty gold set; skipped", pred.question_id)
            continue
        n += 1
        first = next((i for i, nid in enumerate(pred.ranked, 1) if nid in answers), None)
        if first is not None:
            hit1 += first <= 1
            hit5 += first <= 5
            mrr += Fraction(1, first)
        rec20 += Fraction(len(answers & set(pred.ranked[:20])), len(answers))
    if n == 0:
        return MetricsReport(Fraction(0), Fraction(0), Fraction(0), Fraction(0), 0)
    return MetricsReport(hit1 / n, hit5 / n, rec20 / n, mrr / n, n)

"""Schema-driven candidate query enumeration, execution scoring, and training-pair synthesis."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

from .cypher import EdgePattern, NodePattern, PathQuery, aggregate_counts, serialize
from .lpg import PropertyGraph, SchemaSummary

logger = logging.getLogger(__name__)

ONE_HOP = "ONE_HOP"
TWO_HOP = "TWO_HOP"
CONNECTING = "CONNECTING"
TEMPLATES = (ONE_HOP, TWO_HOP, CONNECTING)


@dataclass
class CandidateSet:
    question_id: str
    entities: list[int]
    candidates: list[PathQuery] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)

    def texts(self) -> list[str]:
        return [serialize(q) for q in self.candidates]


@dataclass(frozen=True)
class ScoredCandidate:
    query: PathQuery
    correct: int
    total: int
    recall: Fraction
    precision: Fraction
    template: str = ""

    @property
    def text(self) -> str:
        return serialize(self.query)

    def rank_key(self) -> tuple:
        return (-self.recall, self.total, -self.query.specificity, self.text)


@dataclass(frozen=True)
class TrainingPair:
    id: str
    question: str
    cypher: str
    recall: float
    precision: float
    total: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "cypher": self.cypher,
            "recall": self.recall,
            "precision": self.precision,
            "total": self.total,
        }


def one_hop(name: str, rel: str | None = None, label: str | None = None) -> PathQuery:
    return PathQuery(
        (NodePattern("src", name=name), EdgePattern("r", rel), NodePattern("tgt", label)),
        target="tgt",
    )


def two_hop(
    name: str,
    rel1: str | None = None,
    mid: str | None = None,
    rel2: str | None = None,
    label: str | None = None,
) -> PathQuery:
    return PathQuery(
        (
            NodePattern("src", name=name),
            EdgePattern("r1", rel1),
            NodePattern("var", mid),
            EdgePattern("r2", rel2),
            NodePattern("tgt", label),
        ),
        where=(("src", "tgt"),),
        target="tgt",
    )


def connecting(
    name1: str, name2: str, rel1: str | None = None, mid: str | None = None, rel2: str | None = None
) -> PathQuery:
    return PathQuery(
        (
            NodePattern("src1", name=name1),
            EdgePattern("r1", rel1),
            NodePattern("tgt", mid),
            EdgePattern("r2", rel2),
            NodePattern("src2", name=name2),
        ),
        where=(("src1", "src2"),),
        target="tgt",
    )


def _labels_of(graph: PropertyGraph, nid: int) -> list[str]:
    return sorted(graph.nodes[nid].labels)


def enumerate_candidates(
    schema: SchemaSummary,
    graph: PropertyGraph,
    entity_ids: Sequence[int],
    question_id: str = "",
    templates: Iterable[str] = TEMPLATES,
) -> CandidateSet:
    """All schema-valid 1-hop, 2-hop and connecting queries around ``entity_ids``.

    Typed variants follow the schema's connection triples from the entity's
    labels; the fully untyped variant of each template is always included.
    """
    templates = set(templates)
    unknown = templates - set(TEMPLATES)
    if unknown:
        raise ValueError(f"unknown templates {sorted(unknown)}")
    if not entity_ids:
        raise ValueError("at least one entity is required")
    for nid in entity_ids:
        if nid not in graph.nodes or not graph.nodes[nid].name:
            raise ValueError(f"entity {nid} has no name in the graph")

    seen: set[str] = set()
    out = CandidateSet(question_id, list(entity_ids))

    def add(q: PathQuery, tag: str) -> None:
        text = serialize(q)
        if text not in seen:
            seen.add(text)
            out.candidates.append(q)
            out.provenance.append(tag)

    for nid in entity_ids:
        name = graph.nodes[nid].name
        hop1 = sorted({pair for lab in _labels_of(graph, nid) for pair in schema.neighbours(lab)})
        if ONE_HOP in templates:
            for rel, label in hop1:
                add(one_hop(name, rel, label), ONE_HOP)
            add(one_hop(name), ONE_HOP)
        if TWO_HOP in templates:
            for rel1, mid in hop1:
                for rel2, label in schema.neighbours(mid):
                    add(two_hop(name, rel1, mid, rel2, label), TWO_HOP)
            add(two_hop(name), TWO_HOP)

    if CONNECTING in templates:
        for i in range(len(entity_ids)):
            for j in range(i + 1, len(entity_ids)):
                a, b = entity_ids[i], entity_ids[j]
                name_a, name_b = graph.nodes[a].name, graph.nodes[b].name
                end_labels = set(_labels_of(graph, b))
                for lab in _labels_of(graph, a):
                    for rel1, mid in schema.neighbours(lab):
                        for rel2, far in schema.neighbours(mid):
                            if far in end_labels:
                                add(connecting(name_a, name_b, rel1, mid, rel2), CONNECTING)
                add(connecting(name_a, name_b), CONNECTING)
    return out


def score_candidates(
    graph: PropertyGraph, candidates: CandidateSet, answers: Iterable[int]
) -> list[ScoredCandidate]:
    answers = set(answers)
    scored = []
    for q, tag in zip(candidates.candidates, candidates.provenance):
        correct, total = aggregate_counts(graph, q, answers, q.target_var)
        recall = Fraction(correct, len(answers)) if answers else Fraction(0)
        precision = Fraction(correct, total) if total else Fraction(0)
        scored.append(ScoredCandidate(q, correct, total, recall, precision, tag))
    return scored


def select_best(scored: Sequence[ScoredCandidate]) -> ScoredCandidate:
    """Best candidate by recall, then fewest results, then specificity, then text."""
    if not scored:
        raise ValueError("no candidates to select from")
    return min(scored, key=ScoredCandidate.rank_key)


@dataclass
class SynthesisReport:
    emitted: int = 0
    filtered: int = 0
    skipped: int = 0
    rows: list[dict] = field(default_factory=list)


Resolver = Callable[[str], list[int]]


def resolve_all(names: Sequence[str], resolver: Resolver) -> list[int]:
    """Resolve each mention, keeping first-seen order and dropping repeats."""
    ids: list[int] = []
    for name in names:
        found = resolver(name)
        if not found:
            raise LookupError(f"could not resolve entity {name!r}")
        for nid in found:
            if nid not in ids:
                ids.append(nid)
    return ids


def synthesize_training_pairs(
    graph: PropertyGraph,
    schema: SchemaSummary,
    qa_stream: Iterable[dict],
    resolver: Resolver,
    min_recall: Fraction | float = Fraction(999, 1000),
    templates: Iterable[str] = TEMPLATES,
    report: SynthesisReport | None = None,
) -> Iterator[TrainingPair]:
    """Yield the best-scoring query per QA record, in input order.

    QA records whose entities cannot be resolved are skipped (logged and
    counted in ``report``); pairs under ``min_recall`` are filtered out.
    """
    templates = tuple(templates)
    report = report if report is not None else SynthesisReport()
    for qa in qa_stream:
        qid = str(qa["id"])
        names = qa.get("entities") or []
        if not names:
            logger.warning("QA %s skipped: no entity mentions", qid)
            report.skipped += 1
            report.rows.append({"id": qid, "status": "skipped", "reason": "no entities"})
            continue
        try:
            entity_ids = resolve_all(names, resolver)
        except LookupError as exc:
            logger.warning("QA %s skipped: %s", qid, exc)
            report.skipped += 1
            report.rows.append({"id": qid, "status": "skipped", "reason": str(exc)})
            continue
        cands = enumerate_candidates(schema, graph, entity_ids, qid, templates)
        best = select_best(score_candidates(graph, cands, qa.get("answer_ids", [])))
        row = {
            "id": qid,
            "best_recall": float(best.recall),
            "best_precision": float(best.precision),
            "total": best.total,
            "n_candidates": len(cands.candidates),
        }
        if best.recall < min_recall:
            report.filtered += 1
            report.rows.append({**row, "status": "filtered"})
            continue
        report.emitted += 1
        report.rows.append({**row, "status": "emitted"})
        yield TrainingPair(
            id=qid,
            question=qa.get("question", ""),
            cypher=best.text,
            recall=float(best.recall),
            precision=float(best.precision),
            total=best.total,
        )

import random
from fractions import Fraction

import pytest

from groundcypher.candidates import (
    CONNECTING,
    ONE_HOP,
    TWO_HOP,
    ScoredCandidate,
    SynthesisReport,
    enumerate_candidates,
    score_candidates,
    select_best,
    synthesize_training_pairs,
)
from groundcypher.cypher import execute, parse, serialize
from groundcypher.lpg import extract_schema, load_graph, resolve_entity

from conftest import edge, node


@pytest.fixture
def three_triple_graph():
    # schema triples: (A,R,B), (B,S,C), (A,T,C)
    return load_graph(
        [node(0, ["A"], "e1"), node(1, ["B"], "b1"), node(2, ["C"], "c1"), node(3, ["C"], "e2")],
        [edge(0, 0, 1, "R"), edge(1, 1, 2, "S"), edge(2, 0, 3, "T")],
    )


def test_single_entity_typed_and_untyped():
    g = load_graph([node(0, ["A"], "X"), node(1, ["B"], "Y")], [edge(0, 0, 1, "R")])
    texts = enumerate_candidates(extract_schema(g), g, [0]).texts()
    assert 'MATCH (src {name: "X"})-[r:R]-(tgt:B) RETURN nodes(tgt)' in texts
    assert 'MATCH (src {name: "X"})-[r]-(tgt) RETURN nodes(tgt)' in texts


def test_no_triples_only_untyped():
    g = load_graph([node(0, ["A"], "X"), node(1, ["B"], "Y")], [])
    cs = enumerate_candidates(extract_schema(g), g, [0, 1])
    assert all(q.specificity == 0 for q in cs.candidates)
    assert cs.texts() == [
        'MATCH (src {name: "X"})-[r]-(tgt) RETURN nodes(tgt)',
        'MATCH (src {name: "X"})-[r1]-(var)-[r2]-(tgt) WHERE src <> tgt RETURN nodes(tgt)',
        'MATCH (src {name: "Y"})-[r]-(tgt) RETURN nodes(tgt)',
        'MATCH (src {name: "Y"})-[r1]-(var)-[r2]-(tgt) WHERE src <> tgt RETURN nodes(tgt)',
        'MATCH (src1 {name: "X"})-[r1]-(tgt)-[r2]-(src2 {name: "Y"}) WHERE src1 <> src2 RETURN nodes(tgt)',
    ]


def test_three_triple_schema_hand_enumeration(three_triple_graph):
    g = three_triple_graph
    cs = enumerate_candidates(extract_schema(g), g, [0, 3])
    counts = {t: cs.provenance.count(t) for t in (ONE_HOP, TWO_HOP, CONNECTING)}
    # e1:A -> 1-hop {R:B, T:C, untyped}; 2-hop via B {R:A, S:C}, via C {S:B, T:A}, untyped
    # e2:C -> symmetric 3 + 5; connecting A-R-B-S-C plus untyped
    assert counts == {ONE_HOP: 6, TWO_HOP: 10, CONNECTING: 2}
    assert len(cs.candidates) == 18
    assert (
        'MATCH (src1 {name: "e1"})-[r1:R]-(tgt:B)-[r2:S]-(src2 {name: "e2"}) WHERE src1 <> src2 RETURN nodes(tgt)'
        in cs.texts()
    )


def test_candidates_deduplicated_and_deterministic(three_triple_graph):
    g = three_triple_graph
    s = extract_schema(g)
    a = enumerate_candidates(s, g, [0, 3, 0]).texts()
    assert len(a) == len(set(a))
    assert a == enumerate_candidates(s, g, [0, 3, 0]).texts()


def test_template_selection(three_triple_graph):
    g = three_triple_graph
    cs = enumerate_candidates(extract_schema(g), g, [0], templates=[ONE_HOP])
    assert set(cs.provenance) == {ONE_HOP}
    with pytest.raises(ValueError):
        enumerate_candidates(extract_schema(g), g, [0], templates=["THREE_HOP"])


def test_missing_entity_rejected(three_triple_graph):
    with pytest.raises(ValueError):
        enumerate_candidates(extract_schema(three_triple_graph), three_triple_graph, [42])


def test_typed_candidates_are_schema_valid(synth_graph):
    schema = extract_schema(synth_graph)
    labels, types = set(schema.node_labels), set(schema.rel_types)
    rng = random.Random(0)
    for _ in range(20):
        ents = rng.sample(sorted(synth_graph.nodes), 2)
        cs = enumerate_candidates(schema, synth_graph, ents)
        for q in cs.candidates:
            assert all(n.label is None or n.label in labels for n in q.node_patterns)
            assert all(e.rel_type is None or e.rel_type in types for e in q.edge_patterns)
            assert any(n.name is not None for n in q.node_patterns)
            assert parse(serialize(q)) == q
            execute(synth_graph, q)


def test_score_empty_answers(drug_graph):
    cs = enumerate_candidates(extract_schema(drug_graph), drug_graph, [2])
    for sc in score_candidates(drug_graph, cs, set()):
        assert sc.recall == 0 and sc.precision == 0


def test_score_exact_match(drug_graph):
    cs = enumerate_candidates(extract_schema(drug_graph), drug_graph, [2])
    scored = score_candidates(drug_graph, cs, {1, 3})
    exact = [s for s in scored if s.text == 'MATCH (src {name: "strongyloidiasis"})-[r:INDICATION]-(tgt:Drug) RETURN nodes(tgt)']
    assert exact[0].recall == 1 and exact[0].precision == 1 and exact[0].total == 2


def test_score_matches_recount(synth_graph):
    rng = random.Random(4)
    schema = extract_schema(synth_graph)
    for _ in range(10):
        ents = rng.sample(sorted(synth_graph.nodes), 2)
        answers = set(rng.sample(sorted(synth_graph.nodes), 5))
        cs = enumerate_candidates(schema, synth_graph, ents)
        for sc in score_candidates(synth_graph, cs, answers):
            bound = {row["tgt"] for row in execute(synth_graph, sc.query)}
            assert sc.total == len(bound)
            assert sc.correct == len(bound & answers)
            assert sc.recall == Fraction(len(bound & answers), 5)
            assert 0 <= sc.precision <= 1


def _sc(text, recall, total):
    q = parse(text)
    return ScoredCandidate(q, 0, total, Fraction(recall), Fraction(0), "")


def test_select_best_prefers_fewer_results():
    a = _sc('MATCH (src {name: "x"})-[r]-(tgt) RETURN nodes(tgt)', 1, 17432)
    b = _sc('MATCH (src {name: "x"})-[r:R]-(tgt:B) RETURN nodes(tgt)', 1, 4)
    assert select_best([a, b]) is b


def test_select_best_all_zero_recall():
    a = _sc('MATCH (src {name: "x"})-[r]-(tgt) RETURN nodes(tgt)', 0, 9)
    b = _sc('MATCH (src {name: "y"})-[r]-(tgt) RETURN nodes(tgt)', 0, 3)
    assert select_best([a, b]) is b


def test_select_best_tie_goes_to_typed():
    untyped = _sc('MATCH (src {name: "x"})-[r]-(tgt) RETURN nodes(tgt)', 1, 4)
    typed = _sc('MATCH (src {name: "x"})-[r:R]-(tgt) RETURN nodes(tgt)', 1, 4)
    assert select_best([untyped, typed]) is typed


def test_select_best_empty():
    with pytest.raises(ValueError):
        select_best([])


def test_select_best_permutation_invariant(synth_graph):
    rng = random.Random(2)
    schema = extract_schema(synth_graph)
    for _ in range(10):
        ents = rng.sample(sorted(synth_graph.nodes), 2)
        scored = score_candidates(synth_graph, enumerate_candidates(schema, synth_graph, ents), set(rng.sample(sorted(synth_graph.nodes), 4)))
        best = select_best(scored).text
        for _ in range(5):
            rng.shuffle(scored)
            assert select_best(scored).text == best


def _resolver(graph):
    return lambda name: resolve_entity(graph, name, 1, None)


def test_synthesize_sole_neighbourhood(drug_graph):
    qa = [{"id": "1", "question": "Which drugs treat strongyloidiasis?", "entities": ["strongyloidiasis"], "answer_ids": [1, 3]}]
    pairs = list(synthesize_training_pairs(drug_graph, extract_schema(drug_graph), qa, _resolver(drug_graph)))
    assert len(pairs) == 1
    assert pairs[0].recall == 1.0
    assert parse(pairs[0].cypher)


def test_synthesize_min_recall_filter(drug_graph):
    # 2 is one hop from Ivermectin and 4 two hops away; no single template reaches both
    qa = [{"id": "1", "question": "?", "entities": ["Ivermectin"], "answer_ids": [2, 4]}]
    schema = extract_schema(drug_graph)
    strict = list(synthesize_training_pairs(drug_graph, schema, qa, _resolver(drug_graph), min_recall=1.0))
    loose = list(synthesize_training_pairs(drug_graph, schema, qa, _resolver(drug_graph), min_recall=0.5))
    assert strict == []
    assert len(loose) == 1 and loose[0].recall == 0.5


def test_synthesize_skips_unresolvable(drug_graph):
    qa = [
        {"id": "a", "question": "?", "entities": ["nope"], "answer_ids": [1]},
        {"id": "b", "question": "?", "answer_ids": [1]},
        {"id": "c", "question": "?", "entities": ["CYP3A4"], "answer_ids": [1, 4]},
    ]
    report = SynthesisReport()
    pairs = list(synthesize_training_pairs(drug_graph, extract_schema(drug_graph), qa, _resolver(drug_graph), report=report))
    assert [p.id for p in pairs] == ["c"]
    assert report.skipped == 2 and report.emitted == 1


def test_raising_min_recall_never_adds_pairs(synth_graph):
    rng = random.Random(6)
    qa = [
        {"id": str(i), "question": "?", "entities": [synth_graph.nodes[rng.randrange(100)].name],
         "answer_ids": rng.sample(range(100), rng.randint(1, 6))}
        for i in range(30)
    ]
    schema = extract_schema(synth_graph)
    counts = [
        len(list(synthesize_training_pairs(synth_graph, schema, qa, _resolver(synth_graph), min_recall=t)))
        for t in (0.0, 0.25, 0.5, 0.75, 1.0)
    ]
    assert counts == sorted(counts, reverse=True)


def test_synthesize_preserves_input_order(synth_graph, synth_qas):
    pairs = list(synthesize_training_pairs(synth_graph, extract_schema(synth_graph), synth_qas, _resolver(synth_graph)))
    assert [p.id for p in pairs] == [q["id"] for q in synth_qas]

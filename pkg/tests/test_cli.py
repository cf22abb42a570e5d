import json

import pytest

from groundcypher.cli import main
from groundcypher.lpg import iter_jsonl, write_jsonl

from conftest import edge, node


@pytest.fixture(scope="module")
def fx(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    assert main(["fixture", "--out-dir", str(d), "--n-nodes", "100", "--n-qas", "20", "--seed", "0"]) == 0
    return d


def _graph_args(d):
    return ["--nodes", str(d / "nodes.jsonl"), "--edges", str(d / "edges.jsonl")]


def _drug_files(d):
    write_jsonl(d / "nodes.jsonl", [node(0, ["Gene"], "CYP3A4"), node(1, ["Drug"], "Ivermectin"), node(2, ["Disease"], "s")])
    write_jsonl(d / "edges.jsonl", [edge(0, 0, 1, "ENZYME"), edge(1, 1, 2, "INDICATION")])


def test_ingest_summary(tmp_path, capsys):
    _drug_files(tmp_path)
    assert main(["ingest", *_graph_args(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["nodes"] == 3 and summary["edges"] == 2
    assert summary["labels"] == {"Disease": 1, "Drug": 1, "Gene": 1}
    assert summary["rel_types"] == {"ENZYME": 1, "INDICATION": 1}
    assert summary["embedding_dim"] is None


def test_ingest_malformed_line(tmp_path, capsys):
    _drug_files(tmp_path)
    with open(tmp_path / "edges.jsonl", "a") as fh:
        fh.write("{not json\n")
    assert main(["ingest", *_graph_args(tmp_path)]) == 2
    assert "edges.jsonl:3:" in capsys.readouterr().err


def test_ingest_missing_file(tmp_path):
    assert main(["ingest", "--nodes", str(tmp_path / "none"), "--edges", str(tmp_path / "none")]) == 2


def test_synthesize_empty_qa(tmp_path):
    _drug_files(tmp_path)
    (tmp_path / "qa.jsonl").write_text("")
    out = tmp_path / "out"
    assert main(["synthesize", *_graph_args(tmp_path), "--qa", str(tmp_path / "qa.jsonl"), "--out-dir", str(out)]) == 0
    assert (out / "training_pairs.jsonl").read_text() == ""
    assert json.loads((out / "synthesis_report.json").read_text())["emitted"] == 0


def test_synthesize_counts_unresolvable(tmp_path):
    _drug_files(tmp_path)
    write_jsonl(
        tmp_path / "qa.jsonl",
        [
            {"id": "a", "question": "?", "entities": ["CYP3A4"], "answer_ids": [1]},
            {"id": "b", "question": "?", "entities": ["unknown"], "answer_ids": [1]},
        ],
    )
    out = tmp_path / "out"
    assert main(["synthesize", *_graph_args(tmp_path), "--qa", str(tmp_path / "qa.jsonl"), "--out-dir", str(out)]) == 0
    report = json.loads((out / "synthesis_report.json").read_text())
    assert (report["emitted"], report["skipped"]) == (1, 1)
    pairs = list(iter_jsonl(out / "training_pairs.jsonl"))
    assert pairs[0]["cypher"] == 'MATCH (src {name: "CYP3A4"})-[r:ENZYME]-(tgt:Drug) RETURN nodes(tgt)'


def _decode(fx, out, *extra):
    return main(["decode", *_graph_args(fx), "--qa", str(fx / "qa.jsonl"), "--out-dir", str(out), *extra])


def test_decode_width_m_returns_all_candidates(fx, tmp_path):
    assert _decode(fx, tmp_path, "--width", "M") == 0
    sets = {s["id"]: s["queries"] for s in iter_jsonl(tmp_path / "candidates.jsonl")}
    for rec in iter_jsonl(tmp_path / "decoded.jsonl"):
        got = [r["cypher"] for r in rec["ranked"]]
        assert sorted(got) == sorted(sets[rec["id"]])
        lps = [r["logprob"] for r in rec["ranked"]]
        assert lps == sorted(lps, reverse=True)


def test_decode_width_one(fx, tmp_path):
    assert _decode(fx, tmp_path, "--width", "1", "--scorer", "uniform") == 0
    assert all(len(r["ranked"]) == 1 for r in iter_jsonl(tmp_path / "decoded.jsonl"))


def test_decode_bad_width(fx, tmp_path):
    assert _decode(fx, tmp_path, "--width", "0") == 2


def test_decode_oracle_requires_pairs(fx, tmp_path):
    assert _decode(fx, tmp_path, "--scorer", "oracle") == 2


def test_decode_empty_candidate_set_exit_2(tmp_path):
    write_jsonl(tmp_path / "c.jsonl", [{"id": "a", "queries": ["MATCH (a) RETURN *"]}, {"id": "b", "queries": []}])
    assert main(["decode", "--candidates", str(tmp_path / "c.jsonl"), "--out-dir", str(tmp_path)]) == 2
    assert [r["id"] for r in iter_jsonl(tmp_path / "decoded.jsonl")] == ["a"]


def test_evaluate_predictions_file(tmp_path, capsys):
    write_jsonl(tmp_path / "qa.jsonl", [
        {"id": "a", "question": "?", "answer_ids": [1]},
        {"id": "b", "question": "?", "answer_ids": [5, 6]},
        {"id": "c", "question": "?", "answer_ids": [9]},
    ])
    write_jsonl(tmp_path / "p.jsonl", [
        {"id": "a", "ranked": [1, 2, 3]},
        {"id": "b", "ranked": [4, 5]},
        {"id": "c", "ranked": [7, 8]},
    ])
    args = ["evaluate", "--qa", str(tmp_path / "qa.jsonl"), "--predictions", str(tmp_path / "p.jsonl"), "--out-dir", str(tmp_path)]
    assert main(args) == 0
    m = json.loads(capsys.readouterr().out)
    assert m["hit1"] == pytest.approx(1 / 3) and m["hit5"] == pytest.approx(2 / 3)
    assert m["recall20"] == 0.5 and m["mrr"] == 0.5 and m["n"] == 3


def test_evaluate_id_mismatch(tmp_path):
    write_jsonl(tmp_path / "qa.jsonl", [{"id": "a", "question": "?", "answer_ids": [1]}])
    write_jsonl(tmp_path / "p.jsonl", [{"id": "zzz", "ranked": [1]}])
    args = ["evaluate", "--qa", str(tmp_path / "qa.jsonl"), "--predictions", str(tmp_path / "p.jsonl"), "--out-dir", str(tmp_path)]
    assert main(args) == 2


def test_config_file_and_flag_override(fx, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nodes": str(fx / "nodes.jsonl"), "edges": str(fx / "edges.jsonl"),
                               "qa": str(fx / "qa.jsonl"), "width": 2, "out_dir": str(tmp_path / "a")}))
    assert main(["decode", "--config", str(cfg)]) == 0
    assert all(len(r["ranked"]) <= 2 for r in iter_jsonl(tmp_path / "a" / "decoded.jsonl"))
    assert main(["decode", "--config", str(cfg), "--width", "1", "--out-dir", str(tmp_path / "b")]) == 0
    assert all(len(r["ranked"]) == 1 for r in iter_jsonl(tmp_path / "b" / "decoded.jsonl"))


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["ingest", "--config", str(cfg)]) == 2


def test_full_pipeline_writes_prompts(fx, tmp_path):
    assert _decode(fx, tmp_path, "--width", "3") == 0
    args = ["evaluate", *_graph_args(fx), "--qa", str(fx / "qa.jsonl"), "--decoded", str(tmp_path / "decoded.jsonl"), "--out-dir", str(tmp_path)]
    assert main(args) == 0
    prompts = list(iter_jsonl(tmp_path / "prompts.jsonl"))
    assert len(prompts) == 20
    assert prompts[0]["prompt"].startswith("Given the information below")
    preds = list(iter_jsonl(tmp_path / "predictions.jsonl"))
    assert all(len(p["ranked"]) <= 20 for p in preds)

"""File-staged pipeline: ingest -> synthesize -> decode -> evaluate.

Exit codes: 0 success, 2 input/validation error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import candidates as cand
from .cypher import CypherSyntaxError, parse
from .decode import (
    HashScorer,
    OracleScorer,
    UniformScorer,
    beam_decode,
    build_trie,
    reference_tokenizer,
)
from .lpg import (
    GraphLoadError,
    HashingEmbedder,
    PropertyGraph,
    extract_schema,
    iter_jsonl,
    load_graph_files,
    resolve_entity,
    write_jsonl,
)
from .retrieve import (
    DEFAULT_BUDGET,
    RankedAnswers,
    compute_metrics,
    rank_answers,
    retrieve_subgraph,
    textualize,
)

logger = logging.getLogger("groundcypher")

EXIT_INPUT = 2
EXIT_INVARIANT = 3


class InputError(Exception):
    """Bad or missing input; maps to exit code 2."""


@dataclass
class PipelineConfig:
    nodes: str | None = None
    edges: str | None = None
    embeddings: str | None = None
    qa: str | None = None
    candidates: str | None = None
    pairs: str | None = None
    decoded: str | None = None
    predictions: str | None = None
    out_dir: str = "out"
    templates: list[str] = field(default_factory=lambda: list(cand.TEMPLATES))
    min_recall: float = 0.999
    width: int | str = 5
    budget: int = DEFAULT_BUDGET
    scorer: str = "hash:0"
    knn_k: int = 1

    def check(self, required: Sequence[str]) -> None:
        for name in required:
            if getattr(self, name) is None:
                raise InputError(f"--{name.replace('_', '-')} is required")
        for name in ("nodes", "edges", "embeddings", "qa", "candidates", "pairs", "decoded", "predictions"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise InputError(f"{name} file not found: {path}")
        if self.width != "M" and (not isinstance(self.width, int) or self.width < 1):
            raise InputError(f"width must be a positive integer or 'M', got {self.width!r}")
        if self.budget < 1:
            raise InputError(f"budget must be >= 1, got {self.budget}")
        unknown = set(self.templates) - set(cand.TEMPLATES)
        if unknown:
            raise InputError(f"unknown templates: {sorted(unknown)}")


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


def _read_records(path: str) -> list[dict]:
    try:
        return list(iter_jsonl(path))
    except (OSError, GraphLoadError) as exc:
        raise InputError(str(exc)) from None


def _load_graph(cfg: PipelineConfig) -> PropertyGraph:
    try:
        return load_graph_files(cfg.nodes, cfg.edges, cfg.embeddings)
    except (OSError, GraphLoadError) as exc:
        raise InputError(str(exc)) from None


def _resolver(graph: PropertyGraph, k: int):
    embedder = HashingEmbedder(graph.dim) if graph.dim else None
    return lambda name: resolve_entity(graph, name, k, embedder)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# Stages


def cmd_ingest(cfg: PipelineConfig) -> dict:
    cfg.check(["nodes", "edges"])
    graph = _load_graph(cfg)
    schema = extract_schema(graph)
    summary = {
        "nodes": len(graph.nodes),
        "edges": len(graph.edges),
        "embedded_nodes": graph.n_embedded,
        "embedding_dim": graph.dim,
        "labels": {lab: len(ids) for lab, ids in sorted(graph.label_index.items())},
        "rel_types": {},
        "triples": [list(t) for t in schema.triples],
    }
    for e in graph.edges:
        summary["rel_types"][e.type] = summary["rel_types"].get(e.type, 0) + 1
    summary["rel_types"] = dict(sorted(summary["rel_types"].items()))
    print(json.dumps(summary, indent=2))
    return summary


def cmd_synthesize(cfg: PipelineConfig) -> dict:
    cfg.check(["nodes", "edges", "qa"])
    graph = _load_graph(cfg)
    qas = _read_records(cfg.qa)
    report = cand.SynthesisReport()
    pairs = cand.synthesize_training_pairs(
        graph,
        extract_schema(graph),
        qas,
        _resolver(graph, cfg.knn_k),
        min_recall=Fraction(str(cfg.min_recall)),
        templates=cfg.templates,
        report=report,
    )
    out = _out(cfg)
    write_jsonl(out / "training_pairs.jsonl", (p.to_dict() for p in pairs))
    for p in iter_jsonl(out / "training_pairs.jsonl"):
        parse(p["cypher"])
    summary = {
        "qas": len(qas),
        "emitted": report.emitted,
        "filtered": report.filtered,
        "skipped": report.skipped,
        "questions": report.rows,
    }
    (out / "synthesis_report.json").write_text(json.dumps(summary, indent=2) + "\n")
    logger.info("synthesize: %d emitted, %d filtered, %d skipped", report.emitted, report.filtered, report.skipped)
    return summary


def _candidate_sets(cfg: PipelineConfig) -> list[dict]:
    if cfg.candidates is not None:
        return _read_records(cfg.candidates)
    cfg.check(["nodes", "edges", "qa"])
    graph = _load_graph(cfg)
    schema = extract_schema(graph)
    resolver = _resolver(graph, cfg.knn_k)
    sets = []
    for qa in _read_records(cfg.qa):
        qid = str(qa["id"])
        try:
            ids = cand.resolve_all(qa.get("entities") or [], resolver)
        except LookupError as exc:
            logger.warning("QA %s: %s", qid, exc)
            ids = []
        texts = cand.enumerate_candidates(schema, graph, ids, qid, cfg.templates).texts() if ids else []
        sets.append({"id": qid, "queries": texts})
    write_jsonl(_out(cfg) / "candidates.jsonl", sets)
    return sets


def _make_scorer(cfg: PipelineConfig, tokenizer, targets: dict, qid: str):
    kind, _, arg = cfg.scorer.partition(":")
    if kind == "hash":
        return HashScorer(tokenizer.vocab_size, int(arg or 0))
    if kind == "uniform":
        return UniformScorer(tokenizer.vocab_size)
    if kind == "oracle":
        if qid not in targets:
            logger.warning("no oracle target for %s; using the uniform scorer", qid)
            return UniformScorer(tokenizer.vocab_size)
        return OracleScorer(tokenizer, targets[qid])
    raise InputError(f"unknown scorer spec {cfg.scorer!r}")


def cmd_decode(cfg: PipelineConfig) -> int:
    cfg.check([])
    if cfg.scorer.startswith("oracle") and cfg.pairs is None:
        raise InputError("the oracle scorer needs --pairs (training pairs with target queries)")
    sets = _candidate_sets(cfg)
    targets = {str(p["id"]): p["cypher"] for p in _read_records(cfg.pairs)} if cfg.pairs else {}
    corpus = sorted({q for s in sets for q in s["queries"]})
    tokenizer = reference_tokenizer(corpus or ["MATCH"])
    decoded = []
    empty = 0
    for s in sets:
        qid = str(s["id"])
        queries = list(dict.fromkeys(s["queries"]))
        if not queries:
            logger.error("question %s has an empty candidate set; skipped", qid)
            empty += 1
            continue
        trie = build_trie(queries, tokenizer)
        width = trie.size if cfg.width == "M" else int(cfg.width)
        ranked = beam_decode(_make_scorer(cfg, tokenizer, targets, qid), trie, tokenizer, width)
        valid = set(queries)
        for text, _ in ranked:
            if text not in valid:
                raise AssertionError(f"decoded query outside the candidate set for {qid}: {text}")
        decoded.append({"id": qid, "ranked": [{"cypher": t, "logprob": lp} for t, lp in ranked]})
    write_jsonl(_out(cfg) / "decoded.jsonl", decoded)
    return EXIT_INPUT if empty else 0


def cmd_evaluate(cfg: PipelineConfig) -> dict:
    cfg.check(["qa"])
    gold = {str(q["id"]): q.get("answer_ids", []) for q in _read_records(cfg.qa)}
    out = _out(cfg)
    if cfg.predictions is not None:
        preds = [RankedAnswers(str(p["id"]), tuple(p["ranked"])) for p in _read_records(cfg.predictions)]
    else:
        cfg.check(["nodes", "edges", "decoded"])
        graph = _load_graph(cfg)
        questions = {str(q["id"]): q.get("question", "") for q in _read_records(cfg.qa)}
        preds, prompts = [], []
        for rec in _read_records(cfg.decoded):
            qid = str(rec["id"])
            try:
                ranked = [(parse(r["cypher"]), r["logprob"]) for r in rec["ranked"]]
            except CypherSyntaxError as exc:
                raise InputError(f"decoded query for {qid} does not parse: {exc}") from None
            sub = retrieve_subgraph(graph, ranked, cfg.budget)
            preds.append(rank_answers(sub, question_id=qid))
            prompts.append({"id": qid, "prompt": textualize(sub, graph, questions.get(qid, ""))})
        write_jsonl(out / "predictions.jsonl", ({"id": p.question_id, "ranked": list(p.ranked)} for p in preds))
        write_jsonl(out / "prompts.jsonl", prompts)
    missing = [p.question_id for p in preds if p.question_id not in gold]
    if missing:
        raise InputError(f"predictions without gold answers: {missing}")
    metrics = compute_metrics(preds, gold).to_dict()
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    print(json.dumps(metrics))
    return metrics


def cmd_fixture(cfg: PipelineConfig, n_nodes: int, n_qas: int, seed: int) -> None:
    from .synthetic import write_fixture

    paths = write_fixture(cfg.out_dir, n_nodes, n_qas, seed)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))


# --------------------------------------------------------------------------
# Argument handling


def _width(value: str) -> int | str:
    return "M" if value == "M" else int(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundcypher", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file with PipelineConfig fields")
        p.add_argument("--nodes")
        p.add_argument("--edges")
        p.add_argument("--embeddings", help="binary float32 matrix, rows in node-id order")
        p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("ingest", help="load and validate a graph, print a summary")
    common(p)

    p = sub.add_parser("synthesize", help="build question/query training pairs")
    common(p)
    p.add_argument("--qa")
    p.add_argument("--min-recall", dest="min_recall", type=float)
    p.add_argument("--templates", nargs="+", choices=cand.TEMPLATES)
    p.add_argument("--knn-k", dest="knn_k", type=int)

    p = sub.add_parser("decode", help="constrained beam decoding over candidate queries")
    common(p)
    p.add_argument("--qa")
    p.add_argument("--candidates", help="candidate-set JSONL; overrides enumeration from --qa")
    p.add_argument("--pairs", help="training pairs JSONL (oracle scorer targets)")
    p.add_argument("--templates", nargs="+", choices=cand.TEMPLATES)
    p.add_argument("--scorer", help="hash:<seed> | uniform | oracle")
    p.add_argument("--width", type=_width, help="beam width, or M for the full candidate count")
    p.add_argument("--knn-k", dest="knn_k", type=int)

    p = sub.add_parser("evaluate", help="retrieve, rank and score answers")
    common(p)
    p.add_argument("--qa")
    p.add_argument("--decoded")
    p.add_argument("--predictions", help="score an existing predictions JSONL instead of retrieving")
    p.add_argument("--budget", type=int)

    p = sub.add_parser("fixture", help="write a synthetic graph + QA fixture")
    p.add_argument("--out-dir", dest="out_dir", default="fixture")
    p.add_argument("--n-nodes", type=int, default=100)
    p.add_argument("--n-qas", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    return parser


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(PipelineConfig)}


def make_config(args: argparse.Namespace) -> PipelineConfig:
    values: dict = {}
    if getattr(args, "config", None):
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(values) - _CONFIG_FIELDS
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
    for name in _CONFIG_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return PipelineConfig(**values)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = make_config(args)
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "synthesize":
            cmd_synthesize(cfg)
        elif args.command == "decode":
            return cmd_decode(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "fixture":
            cmd_fixture(cfg, args.n_nodes, args.n_qas, args.seed)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


if __name__ == "__main__":
    sys.exit(main())

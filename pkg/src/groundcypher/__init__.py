"""Grounded Cypher query synthesis, constrained decoding, and budgeted subgraph retrieval."""

from .candidates import (
    CandidateSet,
    ScoredCandidate,
    TrainingPair,
    enumerate_candidates,
    score_candidates,
    select_best,
    synthesize_training_pairs,
)
from .cypher import PathQuery, aggregate_counts, execute, parse, parse_pattern, serialize
from .decode import (
    HashScorer,
    OracleScorer,
    TokenTrie,
    Tokenizer,
    UniformScorer,
    beam_decode,
    build_trie,
    greedy_decode,
    mask_logits,
    reference_tokenizer,
    valid_next_tokens,
)
from .lpg import PropertyGraph, SchemaSummary, extract_schema, load_graph, resolve_entity
from .retrieve import (
    MetricsReport,
    RankedAnswers,
    RetrievedSubgraph,
    compute_metrics,
    rank_answers,
    retrieve_subgraph,
    textualize,
)

__all__ = [
    "CandidateSet",
    "HashScorer",
    "MetricsReport",
    "OracleScorer",
    "PathQuery",
    "PropertyGraph",
    "RankedAnswers",
    "RetrievedSubgraph",
    "SchemaSummary",
    "ScoredCandidate",
    "TokenTrie",
    "Tokenizer",
    "TrainingPair",
    "UniformScorer",
    "aggregate_counts",
    "beam_decode",
    "build_trie",
    "compute_metrics",
    "enumerate_candidates",
    "execute",
    "extract_schema",
    "greedy_decode",
    "load_graph",
    "mask_logits",
    "parse",
    "parse_pattern",
    "rank_answers",
    "reference_tokenizer",
    "resolve_entity",
    "retrieve_subgraph",
    "score_candidates",
    "select_best",
    "serialize",
    "synthesize_training_pairs",
    "textualize",
    "valid_next_tokens",
]

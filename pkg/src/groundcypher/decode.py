"""Grounded constrained decoding over a token trie of valid queries.

At every step the scorer's raw logits are masked to the children of the
current trie node (everything else becomes ``-inf``), so no decoding mode
can emit a string outside the valid set.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

NEG_INF = float("-inf")


class InvalidPrefixError(ValueError):
    """A token prefix that does not lie on any path of the trie."""


# --------------------------------------------------------------------------
# Tokenizer


class Tokenizer:
    """Byte-level greedy longest-match tokenizer with a reserved eos id.

    Ids ``0..255`` are single bytes, so every string encodes; multi-byte
    pieces follow, and ``eos_id`` is the last id.
    """

    def __init__(self, pieces: Iterable[bytes]):
        multi = sorted({p for p in pieces if len(p) > 1})
        self.pieces: list[bytes] = [bytes([b]) for b in range(256)] + multi
        self.eos_id = len(self.pieces)
        self._ids = {p: i for i, p in enumerate(self.pieces)}
        self._max_len = max(len(p) for p in self.pieces)

    @property
    def vocab_size(self) -> int:
        return len(self.pieces) + 1

    @property
    def vocabulary(self) -> list[str]:
        return [p.decode("utf-8", "backslashreplace") for p in self.pieces] + ["<eos>"]

    def encode(self, text: str) -> list[int]:
        data = text.encode("utf-8")
        ids = []
        i = 0
        while i < len(data):
            for n in range(min(self._max_len, len(data) - i), 0, -1):
                tid = self._ids.get(data[i : i + n])
                if tid is not None:
                    ids.append(tid)
                    i += n
                    break
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        out = bytearray()
        for tid in ids:
            if tid == self.eos_id:
                break
            out += self.pieces[tid]
        return out.decode("utf-8")


STRUCTURAL_PIECES = (
    "MATCH (",
    "MATCH ",
    " WHERE ",
    " AND ",
    " <> ",
    " RETURN ",
    " RETURN *",
    "nodes(",
    ")-[",
    "]-(",
    " {name: \"",
    "{name: \"",
    "\"})",
    "\"}",
)

_QUOTED = re.compile(r'"(?:[^"\\]|\\.)*"')
_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def reference_tokenizer(corpus: Sequence[str]) -> Tokenizer:
    """Vocabulary = bytes + structural fragments + words harvested outside string literals.

    Entity names inside quotes are deliberately not harvested, so they
    tokenize into several byte pieces the way real subword tokenizers split
    rare names.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    pieces = {p.encode() for p in STRUCTURAL_PIECES}
    for text in corpus:
        bare = _QUOTED.sub('""', text)
        for word in _WORD.findall(bare):
            pieces.add(word.encode())
            pieces.add(b":" + word.encode())
    return Tokenizer(pieces)


# --------------------------------------------------------------------------
# Trie


class TokenTrie:
    def __init__(self, eos_id: int):
        self.eos_id = eos_id
        self.children: list[dict[int, int]] = [{}]
        self.terminal: list[bool] = [False]
        self.root = 0
        self.size = 0  # number of distinct queries M

    def insert(self, tokens: Sequence[int]) -> bool:
        node = self.root
        for t in list(tokens) + [self.eos_id]:
            nxt = self.children[node].get(t)
            if nxt is None:
                nxt = len(self.children)
                self.children.append({})
                self.terminal.append(False)
                self.children[node][t] = nxt
            node = nxt
        if self.terminal[node]:
            return False
        self.terminal[node] = True
        self.size += 1
        return True

    def walk(self, prefix: Sequence[int]) -> int:
        node = self.root
        for i, t in enumerate(prefix):
            nxt = self.children[node].get(t)
            if nxt is None:
                raise InvalidPrefixError(f"token {t} at position {i} leaves the trie")
            node = nxt
        return node

    def contains(self, tokens: Sequence[int]) -> bool:
        try:
            return self.terminal[self.walk(list(tokens) + [self.eos_id])]
        except InvalidPrefixError:
            return False

    def sequences(self) -> list[tuple[int, ...]]:
        """All accepted token sequences (eos excluded), in token-id order."""
        out = []
        stack = [(self.root, ())]
        while stack:
            node, path = stack.pop()
            if self.terminal[node]:
                out.append(path[:-1])
            for t in sorted(self.children[node], reverse=True):
                stack.append((self.children[node][t], path + (t,)))
        return out


def build_trie(queries: Sequence[str], tokenizer: Tokenizer) -> TokenTrie:
    if not queries:
        raise ValueError("cannot build a trie from an empty query list")
    trie = TokenTrie(tokenizer.eos_id)
    for q in queries:
        trie.insert(tokenizer.encode(q))
    return trie


def valid_next_tokens(trie: TokenTrie, prefix: Sequence[int]) -> frozenset[int]:
    return frozenset(trie.children[trie.walk(prefix)])


# --------------------------------------------------------------------------
# Masking


def mask_logits(logits: np.ndarray, valid: Iterable[int]) -> np.ndarray:
    idx = np.fromiter(valid, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("valid token set is empty")
    logits = np.asarray(logits, dtype=np.float64)
    out = np.full_like(logits, NEG_INF)
    out[idx] = logits[idx]
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Log-softmax where ``-inf`` entries stay ``-inf`` (probability exactly 0)."""
    finite = logits[np.isfinite(logits)]
    m = finite.max()
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum())


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


# --------------------------------------------------------------------------
# Scorers


class Scorer(Protocol):
    def __call__(self, prefix: Sequence[int]) -> np.ndarray: ...


class UniformScorer:
    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def __call__(self, prefix: Sequence[int]) -> np.ndarray:
        return np.zeros(self.vocab_size)


class HashScorer:
    """Pseudo-random Gaussian logits keyed on ``(seed, prefix)``; stable across runs."""

    def __init__(self, vocab_size: int, seed: int = 0):
        self.vocab_size = vocab_size
        self.seed = seed

    def __call__(self, prefix: Sequence[int]) -> np.ndarray:
        h = hashlib.blake2b(digest_size=8)
        h.update(self.seed.to_bytes(8, "little", signed=True))
        h.update(np.asarray(prefix, dtype="<i8").tobytes())
        rng = np.random.default_rng(int.from_bytes(h.digest(), "little"))
        return rng.standard_normal(self.vocab_size)


class OracleScorer:
    """+``boost`` on the target's next token while the prefix follows the target, else 0."""

    def __init__(self, tokenizer: Tokenizer, target: str, boost: float = 10.0):
        self.vocab_size = tokenizer.vocab_size
        self.target = tuple(tokenizer.encode(target)) + (tokenizer.eos_id,)
        self.boost = boost

    def __call__(self, prefix: Sequence[int]) -> np.ndarray:
        out = np.zeros(self.vocab_size)
        n = len(prefix)
        if n < len(self.target) and tuple(prefix) == self.target[:n]:
            out[self.target[n]] = self.boost
        return out


def reference_scorers(tokenizer: Tokenizer, seed: int = 0) -> dict:
    return {
        "hash_scorer": HashScorer(tokenizer.vocab_size, seed),
        "oracle_scorer": lambda target: OracleScorer(tokenizer, target),
        "uniform_scorer": UniformScorer(tokenizer.vocab_size),
    }


# --------------------------------------------------------------------------
# Decoding


@dataclass(frozen=True)
class Beam:
    tokens: tuple[int, ...]
    logprob: float
    finished: bool
    node: int = 0


def _step_logprobs(scorer: Scorer, trie: TokenTrie, beam_tokens: Sequence[int], node: int):
    valid = trie.children[node]
    logits = np.asarray(scorer(list(beam_tokens)), dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError("scorer must return a 1-d logit vector")
    masked = mask_logits(logits, valid)
    return valid, masked, log_softmax(masked)


def greedy_decode(scorer: Scorer, trie: TokenTrie, tokenizer: Tokenizer) -> tuple[str, float]:
    """Pick the valid token with the highest logit each step (ties: smallest id)."""
    tokens: list[int] = []
    node = trie.root
    total = 0.0
    while True:
        valid, masked, logp = _step_logprobs(scorer, trie, tokens, node)
        choice = max(valid, key=lambda t: (masked[t], -t))
        total += float(logp[choice])
        node = valid[choice]
        if choice == trie.eos_id:
            return tokenizer.decode(tokens), total
        tokens.append(choice)


def beam_decode(
    scorer: Scorer, trie: TokenTrie, tokenizer: Tokenizer, width: int
) -> list[tuple[str, float]]:
    """Beam search over masked log-probabilities.

    Finished beams stay in the pool and compete on total log-probability
    (no length normalization). Ties go to the lexicographically smaller
    token sequence; results are ordered by log-prob then query text.
    """
    if width < 1:
        raise ValueError(f"beam width must be >= 1, got {width}")
    beams = [Beam((), 0.0, False, trie.root)]
    while not all(b.finished for b in beams):
        pool = [b for b in beams if b.finished]
        for b in beams:
            if b.finished:
                continue
            valid, _, logp = _step_logprobs(scorer, trie, b.tokens, b.node)
            for t in sorted(valid):
                pool.append(
                    Beam(b.tokens + (t,), b.logprob + float(logp[t]), t == trie.eos_id, valid[t])
                )
        pool.sort(key=lambda b: (-b.logprob, b.tokens))
        beams = pool[:width]
    results = [(tokenizer.decode(b.tokens), b.logprob) for b in beams]
    results.sort(key=lambda r: (-r[1], r[0]))
    return results

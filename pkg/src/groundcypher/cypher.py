"""Restricted Cypher path-pattern subset: AST, parser, canonical serializer, executor.

Grammar (keywords case-insensitive, whitespace free between tokens)::

    query   := MATCH pattern [WHERE var <> var (AND var <> var)*] RETURN spec
    pattern := node (edge node)*
    node    := '(' var [':' label] ['{' 'name' ':' string '}'] ')'
    edge    := '-' '[' var [':' type] ']' '-'
    spec    := '*' | 'nodes' '(' var ')'

All edges are undirected. Strings are double-quoted with ``\\"`` and ``\\\\``
as the only escapes; labels and types that are not plain identifiers are
backtick-quoted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Union

from .lpg import PropertyGraph

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
KEYWORDS = frozenset({"MATCH", "WHERE", "AND", "RETURN", "NODES"})


class CypherSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class QueryValidationError(ValueError):
    """The AST breaks a structural invariant (arity, variable scoping)."""


@dataclass(frozen=True)
class NodePattern:
    var: str
    label: str | None = None
    name: str | None = None


@dataclass(frozen=True)
class EdgePattern:
    var: str
    rel_type: str | None = None


Element = Union[NodePattern, EdgePattern]


@dataclass(frozen=True)
class PathQuery:
    elements: tuple[Element, ...]
    where: tuple[tuple[str, str], ...] = ()
    # None means RETURN * (full bindings); otherwise RETURN nodes(<var>)
    target: str | None = None

    def __post_init__(self):
        els = self.elements
        if len(els) % 2 == 0:
            raise QueryValidationError("path must have an odd number of elements")
        for i, el in enumerate(els):
            want = NodePattern if i % 2 == 0 else EdgePattern
            if not isinstance(el, want):
                raise QueryValidationError(f"element {i} must be a {want.__name__}")
            if not _IDENT.fullmatch(el.var) or el.var.upper() in KEYWORDS:
                raise QueryValidationError(f"invalid variable name {el.var!r}")
        names = [el.var for el in els]
        if len(set(names)) != len(names):
            raise QueryValidationError("variable names must be unique")
        kinds = {el.var: type(el) for el in els}
        for a, b in self.where:
            for v in (a, b):
                if v not in kinds:
                    raise QueryValidationError(f"WHERE references undeclared variable {v!r}")
            if kinds[a] is not kinds[b]:
                raise QueryValidationError(f"cannot compare node and edge variables {a!r}, {b!r}")
        if self.target is not None and kinds.get(self.target) is not NodePattern:
            raise QueryValidationError(f"return target {self.target!r} is not a node variable")

    @property
    def node_patterns(self) -> tuple[NodePattern, ...]:
        return self.elements[0::2]

    @property
    def edge_patterns(self) -> tuple[EdgePattern, ...]:
        return self.elements[1::2]

    @property
    def hops(self) -> int:
        return len(self.elements) // 2

    @property
    def target_var(self) -> str:
        """Variable whose distinct bindings form the answer set."""
        return self.target if self.target is not None else self.elements[-1].var

    @property
    def specificity(self) -> int:
        """Number of label/type annotations; typed queries outrank untyped ones."""
        return sum(1 for n in self.node_patterns if n.label) + sum(
            1 for e in self.edge_patterns if e.rel_type
        )

    def __str__(self) -> str:
        return serialize(self)


# --------------------------------------------------------------------------
# Serialization


def _quote_symbol(sym: str) -> str:
    if _IDENT.fullmatch(sym):
        return sym
    return "`" + sym.replace("`", "``") + "`"


def quote_string(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_element(el: Element) -> str:
    if isinstance(el, NodePattern):
        out = el.var
        if el.label:
            out += ":" + _quote_symbol(el.label)
        if el.name is not None:
            out += " {name: " + quote_string(el.name) + "}"
        return "(" + out + ")"
    out = el.var
    if el.rel_type:
        out += ":" + _quote_symbol(el.rel_type)
    return "-[" + out + "]-"


def serialize_pattern(elements: Iterable[Element]) -> str:
    return "".join(serialize_element(el) for el in elements)


def serialize(query: PathQuery) -> str:
    out = "MATCH " + serialize_pattern(query.elements)
    if query.where:
        out += " WHERE " + " AND ".join(f"{a} <> {b}" for a, b in query.where)
    out += " RETURN " + ("*" if query.target is None else f"nodes({query.target})")
    return out


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<bquote>`(?:[^`]|``)*`)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<neq><>)
  | (?P<punct>[()\[\]{}:\-*])
    """,
    re.VERBOSE | re.DOTALL,
)


def _lex(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            # reported by the parser when reached, so errors surface in reading order
            tokens.append(("bad", text[pos], pos))
            pos += 1
            continue
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


def _unquote_string(raw: str, pos: int) -> str:
    out = []
    i = 1
    while i < len(raw) - 1:
        ch = raw[i]
        if ch == "\\":
            nxt = raw[i + 1]
            if nxt not in '"\\':
                raise CypherSyntaxError(f"unsupported escape \\{nxt}", pos + i)
            out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class _Parser:
    def __init__(self, text: str):
        self.tokens = _lex(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, val, pos = self.advance()
        if val != value:
            raise CypherSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def keyword(self, word: str) -> bool:
        kind, val, _ = self.peek()
        if kind == "ident" and val.upper() == word:
            self.i += 1
            return True
        return False

    def expect_keyword(self, word: str) -> None:
        if not self.keyword(word):
            _, val, pos = self.peek()
            raise CypherSyntaxError(f"expected {word}, found {val or 'end of input'!r}", pos)

    def variable(self) -> str:
        kind, val, pos = self.advance()
        if kind != "ident" or val.upper() in KEYWORDS:
            raise CypherSyntaxError(f"expected variable, found {val or 'end of input'!r}", pos)
        return val

    def symbol(self) -> str:
        kind, val, pos = self.advance()
        if kind == "ident":
            return val
        if kind == "bquote":
            return val[1:-1].replace("``", "`")
        raise CypherSyntaxError(f"expected label or type, found {val or 'end of input'!r}", pos)

    def node(self) -> NodePattern:
        self.expect("(")
        var = self.variable()
        label = name = None
        if self.peek()[1] == ":":
            self.advance()
            label = self.symbol()
        if self.peek()[1] == "{":
            self.advance()
            kind, key, pos = self.advance()
            if key != "name":
                raise CypherSyntaxError(f"only the name property is supported, found {key!r}", pos)
            self.expect(":")
            kind, raw, pos = self.advance()
            if kind != "string":
                raise CypherSyntaxError("expected a double-quoted string", pos)
            name = _unquote_string(raw, pos)
            self.expect("}")
        self.expect(")")
        return NodePattern(var, label, name)

    def edge(self) -> EdgePattern:
        self.expect("-")
        self.expect("[")
        var = self.variable()
        rel = None
        if self.peek()[1] == ":":
            self.advance()
            rel = self.symbol()
        self.expect("]")
        self.expect("-")
        return EdgePattern(var, rel)

    def pattern(self) -> list[Element]:
        els: list[Element] = [self.node()]
        while self.peek()[1] == "-":
            els.append(self.edge())
            els.append(self.node())
        return els

    def query(self) -> PathQuery:
        self.expect_keyword("MATCH")
        els = self.pattern()
        where = []
        if self.keyword("WHERE"):
            while True:
                a = self.variable()
                kind, val, pos = self.advance()
                if kind != "neq":
                    raise CypherSyntaxError(f"expected '<>', found {val!r}", pos)
                where.append((a, self.variable()))
                if not self.keyword("AND"):
                    break
        self.expect_keyword("RETURN")
        kind, val, pos = self.peek()
        if val == "*":
            self.advance()
            target = None
        elif kind == "ident" and val.upper() == "NODES":
            self.advance()
            self.expect("(")
            target = self.variable()
            self.expect(")")
        else:
            raise CypherSyntaxError(f"unknown return spec {val or 'end of input'!r}", pos)
        self.end()
        try:
            return PathQuery(tuple(els), tuple(where), target)
        except QueryValidationError as exc:
            raise CypherSyntaxError(str(exc), 0) from None

    def end(self) -> None:
        kind, val, pos = self.peek()
        if kind != "eof":
            raise CypherSyntaxError(f"unexpected trailing input {val!r}", pos)


def parse(text: str) -> PathQuery:
    return _Parser(text).query()


def parse_pattern(text: str) -> PathQuery:
    """Parse a bare path pattern (no MATCH/RETURN) into a bindings query."""
    p = _Parser(text)
    els = p.pattern()
    p.end()
    try:
        return PathQuery(tuple(els))
    except QueryValidationError as exc:
        raise CypherSyntaxError(str(exc), 0) from None


# --------------------------------------------------------------------------
# Execution


def _node_ok(graph: PropertyGraph, nid: int, pat: NodePattern) -> bool:
    node = graph.nodes[nid]
    if pat.label is not None and pat.label not in node.labels:
        return False
    return pat.name is None or node.name == pat.name


def execute(graph: PropertyGraph, query: PathQuery) -> list[dict[str, int]]:
    """All distinct variable assignments satisfying the pattern.

    Edges match in either orientation and edge variables within one row are
    pairwise distinct; node variables may repeat unless a WHERE forbids it.
    Expansion starts at the first name-anchored node and walks right, then left.
    """
    npats = query.node_patterns
    epats = query.edge_patterns
    anchor = next((i for i, p in enumerate(npats) if p.name is not None), 0)
    if npats[anchor].name is not None:
        starts = graph.nodes_by_name(npats[anchor].name)
    elif npats[anchor].label is not None:
        starts = sorted(graph.label_index.get(npats[anchor].label, ()))
    else:
        starts = sorted(graph.nodes)

    # (edge index, from node index, to node index) in expansion order
    steps = [(j, j, j + 1) for j in range(anchor, len(epats))]
    steps += [(j, j + 1, j) for j in range(anchor - 1, -1, -1)]

    var_pos = {}
    for i, p in enumerate(npats):
        var_pos[p.var] = ("n", i)
    for j, p in enumerate(epats):
        var_pos[p.var] = ("e", j)
    constraints = [(var_pos[a], var_pos[b]) for a, b in query.where]

    node_ids: list[int | None] = [None] * len(npats)
    edge_ids: list[int | None] = [None] * len(epats)
    results: set[tuple[tuple[int, ...], tuple[int, ...]]] = set()

    def where_ok() -> bool:
        for (ka, ia), (kb, ib) in constraints:
            arr_a = node_ids if ka == "n" else edge_ids
            arr_b = node_ids if kb == "n" else edge_ids
            if arr_a[ia] is not None and arr_a[ia] == arr_b[ib]:
                return False
        return True

    def extend(step: int) -> None:
        if step == len(steps):
            results.add((tuple(node_ids), tuple(edge_ids)))  # type: ignore[arg-type]
            return
        j, src, dst = steps[step]
        want_type = epats[j].rel_type
        for eid, nbr in graph.adjacency[node_ids[src]]:
            if eid in edge_ids:
                continue
            if want_type is not None and graph.edge_by_id[eid].type != want_type:
                continue
            if not _node_ok(graph, nbr, npats[dst]):
                continue
            edge_ids[j] = eid
            node_ids[dst] = nbr
            if where_ok():
                extend(step + 1)
            edge_ids[j] = None
            node_ids[dst] = None

    for start in starts:
        if not _node_ok(graph, start, npats[anchor]):
            continue
        node_ids[anchor] = start
        extend(0)
    node_ids[anchor] = None

    rows = []
    for n_ids, e_ids in sorted(results):
        row = {p.var: nid for p, nid in zip(npats, n_ids)}
        row.update({p.var: eid for p, eid in zip(epats, e_ids)})
        rows.append(row)
    return rows


def aggregate_counts(
    graph: PropertyGraph, query: PathQuery, target_ids: Iterable[int], target_var: str
) -> tuple[int, int]:
    """(correctCnt, totalCnt) over the distinct nodes bound to ``target_var``."""
    if target_var not in {p.var for p in query.node_patterns}:
        raise QueryValidationError(f"unknown target variable {target_var!r}")
    bound = {row[target_var] for row in execute(graph, query)}
    return len(bound & set(target_ids)), len(bound)

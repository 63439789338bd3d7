"""Walk enumeration around entity pairs, abstraction to clauses, and clause frequencies.

A walk is rooted at an anchor (the head or tail of a pair), follows train
edges in either direction, never repeats an edge and never passes through an
anchor. Abstraction maps anchors to the roles ``Head``/``Tail`` and every other
entity to its schema class; length-1 walks additionally keep the non-anchor
entity as a constant.
"""
from __future__ import annotations

import json
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

from .graph import KnowledgeGraph, SchemaMap, Triple

logger = logging.getLogger(__name__)

DEFAULT_WALK_BUDGET = 100_000

HEAD, TAIL = "Head", "Tail"


class WalkTruncatedWarning(UserWarning):
    pass


class Step(NamedTuple):
    """One traversed edge: ``src -> dst`` along ``relation``.

    ``forward`` is true when the graph edge is ``relation(src, dst)``.
    """

    relation: int
    src: int
    dst: int
    forward: bool

    @property
    def edge(self) -> tuple[int, int, int]:
        return (self.src, self.relation, self.dst) if self.forward else (self.dst, self.relation, self.src)


class Term(NamedTuple):
    kind: str  # "role" | "class" | "const"
    value: str

    def __str__(self):
        return self.value


class Literal(NamedTuple):
    """Relation literal in walk order.

    ``subject`` is where the step starts and ``object`` where it ends; the
    underlying fact is ``relation(subject, object)`` when ``forward`` and
    ``relation(object, subject)`` otherwise.
    """

    relation: str
    subject: Term
    object: Term
    forward: bool

    @property
    def fact_args(self) -> tuple[Term, Term]:
        return (self.subject, self.object) if self.forward else (self.object, self.subject)

    def reversed(self) -> "Literal":
        return Literal(self.relation, self.object, self.subject, not self.forward)

    def render(self, names=None) -> str:
        a, b = self.fact_args
        names = names or {}
        return f"{self.relation}({names.get(a, a.value)},{names.get(b, b.value)})"

    def key(self) -> list:
        return [self.relation, self.subject.kind, self.subject.value, self.object.kind, self.object.value,
                int(self.forward)]


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]
    key: str = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "literals", tuple(self.literals))
        object.__setattr__(self, "key", json.dumps([lit.key() for lit in self.literals], separators=(",", ":")))

    def __len__(self):
        return len(self.literals)

    def __hash__(self):
        return hash(self.key)

    def __eq__(self, other):
        return isinstance(other, Clause) and self.key == other.key

    def __str__(self):
        return " ∧ ".join(lit.render() for lit in self.literals)

    def reversed(self) -> "Clause":
        return Clause(tuple(lit.reversed() for lit in reversed(self.literals)))

    @property
    def has_constant(self) -> bool:
        return any(t.kind == "const" for lit in self.literals for t in (lit.subject, lit.object))

    @classmethod
    def from_key(cls, key: str) -> "Clause":
        lits = []
        for rel, sk, sv, ok, ov, fwd in json.loads(key):
            lits.append(Literal(rel, Term(sk, sv), Term(ok, ov), bool(fwd)))
        return cls(tuple(lits))


def enumerate_walks(graph: KnowledgeGraph, head: int, tail: int, x: int, exclude=frozenset(),
                    split: str = "train", budget: int | None = None) -> Iterator[tuple[Step, ...]]:
    """Yield every walk of length ``1..x`` rooted at ``head`` or ``tail`` (ids).

    Walks from ``head`` come first, then walks from ``tail`` (skipped when the
    two coincide); within a root the order follows the sorted adjacency.
    Edges in ``exclude`` (id triples) are never used. At most ``budget``
    walks are produced.
    """
    if x < 1:
        raise ValueError("maximal walk length must be >= 1")
    adj = graph.adjacency(split)
    anchors = {head, tail}
    produced = 0
    roots = (head,) if head == tail else (head, tail)
    for root in roots:
        # iterative DFS; stack holds (node, path, used-edges, next-neighbour index)
        path: list[Step] = []
        used: set = set()
        stack = [(root, 0)]
        while stack:
            node, pos = stack.pop()
            nbrs = adj[node]
            if pos >= len(nbrs):
                if path:
                    used.discard(path.pop().edge)
                continue
            stack.append((node, pos + 1))
            r, v, out = nbrs[pos]
            step = Step(r, node, v, out)
            edge = step.edge
            if edge in used or edge in exclude:
                continue
            path.append(step)
            if budget is not None and produced >= budget:
                return
            produced += 1
            yield tuple(path)
            if len(path) < x and v not in anchors:
                used.add(edge)
                stack.append((v, 0))
            else:
                path.pop()


def _term(entity: int, head: int, tail: int, graph: KnowledgeGraph, classes, constant: bool) -> Term:
    if entity == head:
        return Term("role", HEAD)
    if entity == tail:
        return Term("role", TAIL)
    if constant:
        return Term("const", graph.entities[entity])
    return Term("class", classes[entity])


def _canonical(clause: Clause) -> Clause:
    first = clause.literals[0].subject
    last = clause.literals[-1].object
    if first.kind != "role" or last.kind != "role":
        return clause
    if first.value == TAIL and last.value == HEAD:
        return clause.reversed()
    if first.value == last.value:
        rev = clause.reversed()
        return min(clause, rev, key=lambda c: c.key)
    return clause


def abstract_walk(walk, graph: KnowledgeGraph, schema: SchemaMap | None, head: int, tail: int,
                  classes=None) -> list[Clause]:
    """Clause(s) of one walk: the abstract clause and, for length 1, the
    partially abstracted clause that keeps the non-anchor entity."""
    if classes is None:
        classes = (schema or SchemaMap()).class_ids(graph)
    rels = graph.relations

    def build(constant: bool) -> Clause:
        lits = tuple(
            Literal(rels[s.relation],
                    _term(s.src, head, tail, graph, classes, constant),
                    _term(s.dst, head, tail, graph, classes, constant),
                    s.forward)
            for s in walk
        )
        return _canonical(Clause(lits))

    out = [build(False)]
    if len(walk) == 1:
        out.append(build(True))
    return out


@dataclass
class ClauseRow:
    pair: tuple[str, str]
    label: int  # +1 positive, -1 negative
    source: int  # index of the positive the row derives from
    counts: dict[str, int]
    n_walks: int
    truncated: bool = False
    weight: float | None = None

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def frequencies(self) -> dict[str, float]:
        total = self.total
        return {k: c / total for k, c in self.counts.items()} if total else {}


@dataclass
class ClauseTable:
    rows: list[ClauseRow]
    clauses: dict[str, Clause]
    relation: str = ""
    max_walk_len: int = 1

    @property
    def vocabulary(self) -> list[str]:
        return sorted(self.clauses)

    def to_dict(self) -> dict:
        return {
            "relation": self.relation,
            "max_walk_len": self.max_walk_len,
            "vocabulary": {k: str(self.clauses[k]) for k in self.vocabulary},
            "rows": [
                {
                    "pair": list(r.pair),
                    "label": r.label,
                    "source": r.source,
                    "weight": r.weight,
                    "walks": r.n_walks,
                    "truncated": r.truncated,
                    "frequencies": dict(sorted(r.frequencies.items())),
                }
                for r in self.rows
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


class _ClauseCache:
    """Memo of abstraction results keyed by the walk's integer signature."""

    def __init__(self, graph: KnowledgeGraph, classes):
        self.graph = graph
        self.classes = classes
        names = sorted(set(classes))
        self.class_code = [names.index(c) for c in classes]
        self.memo: dict = {}

    def clauses(self, walk, head: int, tail: int) -> list[Clause]:
        code = self.class_code

        def term(e):
            return -1 if e == head else -2 if e == tail else code[e]

        sig = tuple((s.relation, term(s.src), term(s.dst), s.forward) for s in walk)
        if len(walk) == 1:
            s = walk[0]
            sig = sig + ((-1 if s.src in (head, tail) else s.src, -1 if s.dst in (head, tail) else s.dst),)
        out = self.memo.get(sig)
        if out is None:
            out = self.memo[sig] = abstract_walk(walk, self.graph, None, head, tail, self.classes)
        return out


def mine_pair(graph: KnowledgeGraph, head: int, tail: int, x: int, classes, exclude=frozenset(),
              budget: int = DEFAULT_WALK_BUDGET, cache: _ClauseCache | None = None):
    """Clause multiset of one pair: ``(Counter key -> count, clauses, n_walks, truncated)``."""
    cache = cache or _ClauseCache(graph, classes)
    counts: Counter = Counter()
    seen: dict[str, Clause] = {}
    n = 0
    for walk in enumerate_walks(graph, head, tail, x, exclude=exclude, budget=budget + 1):
        n += 1
        if n > budget:
            break
        for c in cache.clauses(walk, head, tail):
            counts[c.key] += 1
            seen.setdefault(c.key, c)
    truncated = n > budget
    return counts, seen, min(n, budget), truncated


def mine(pairs, graph: KnowledgeGraph, schema: SchemaMap | None, x: int,
         budget: int = DEFAULT_WALK_BUDGET, exclude_label_edge: bool = True) -> ClauseTable:
    """Clause table with one row per positive then per negative pair.

    With ``exclude_label_edge`` the pair's own ``relation`` edge is not
    walked, so the labelled fact cannot explain itself.
    """
    classes = (schema or SchemaMap()).class_ids(graph)
    cache = _ClauseCache(graph, classes)
    r_id = graph.relation_id(pairs.relation)
    rows = []
    clauses: dict[str, Clause] = {}
    items = [(p.pair, 1, i) for i, p in enumerate(pairs.positives)]
    items += [(n.pair, -1, n.source) for n in pairs.negatives]
    for (h_lab, t_lab), label, source in items:
        h, t = graph.entity_id(h_lab), graph.entity_id(t_lab)
        exclude = frozenset({(h, r_id, t)}) if exclude_label_edge else frozenset()
        counts, seen, n, truncated = mine_pair(graph, h, t, x, classes, exclude, budget, cache)
        if truncated:
            warnings.warn(f"walk budget {budget} reached for pair {(h_lab, t_lab)}", WalkTruncatedWarning)
        clauses.update(seen)
        rows.append(ClauseRow((h_lab, t_lab), label, source, dict(counts), n, truncated))
    return ClauseTable(rows, clauses, pairs.relation, x)


def render_walk(graph: KnowledgeGraph, walk) -> list[Triple]:
    return [graph.to_triple(s.edge) for s in walk]

"""Rule, instance and analogy explanations of a predicted triple.

The pipeline retrieves the nearest training triples, labels their pairs
against the predicted relation, mines clauses around each pair, ranks the
clauses with a surrogate and finally grounds the top clauses in the graph.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field

from .clauses import DEFAULT_WALK_BUDGET, HEAD, TAIL, Clause, Literal, Term, mine
from .errors import ConfigError, EmptyPositiveSetError
from .graph import KnowledgeGraph, SchemaMap, Triple
from .neighbors import DEFAULT_K, TrainIndex, build_pairs, knn, nearest_positive_pair
from .surrogates import METHODS, rank_clauses

logger = logging.getLogger(__name__)

MODALITIES = ("rule", "instance", "analogy")


class UngroundedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExplainConfig:
    k: int = DEFAULT_K
    max_walk_len: int = 1
    method: str = "hsic"
    top_clauses: int = 5
    grounding_limit: int = 10
    seed: int = 0
    sigma: float | None = None
    walk_budget: int = DEFAULT_WALK_BUDGET
    negative_embeddings: str = "inherit"
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 1 or self.max_walk_len < 1 or self.top_clauses < 1 or self.grounding_limit < 1:
            raise ConfigError("k, max_walk_len, top_clauses and grounding_limit must be >= 1")
        if self.method not in METHODS:
            raise ConfigError(f"unknown surrogate {self.method!r}; expected one of {METHODS}")

    def to_dict(self) -> dict:
        return asdict(self)


# --- rules and groundings -----------------------------------------------------

@dataclass(frozen=True)
class Rule:
    body: tuple[Literal, ...]
    head: Triple

    def __str__(self):
        body = " ∧ ".join(lit.render() for lit in self.body)
        return f"{body} → {self.head.relation}({self.head.head},{self.head.tail})"

    def abstract(self) -> Clause:
        """The clause this rule was built from (anchors back to roles)."""
        roles = {self.head.head: HEAD, self.head.tail: TAIL}

        def back(t: Term) -> Term:
            if t.kind == "anchor":
                return Term("role", roles[t.value])
            return t

        return Clause(tuple(Literal(l.relation, back(l.subject), back(l.object), l.forward) for l in self.body))


def make_rule(clause: Clause, predicted) -> Rule:
    """``clause`` with Head/Tail replaced by the predicted entities, implying the prediction."""
    predicted = Triple(*predicted)
    names = {HEAD: predicted.head, TAIL: predicted.tail}

    def fill(t: Term) -> Term:
        return Term("anchor", names[t.value]) if t.kind == "role" else t

    body = tuple(Literal(l.relation, fill(l.subject), fill(l.object), l.forward) for l in clause.literals)
    return Rule(body, predicted)


def ground_clause(clause: Clause, head: str, tail: str, graph: KnowledgeGraph, schema: SchemaMap | None = None,
                  limit: int = 10, exclude=(), split: str = "train") -> list[list[Triple]]:
    """Up to ``limit`` groundings of ``clause`` anchored at ``(head, tail)``.

    A class slot binds a non-anchor entity of that class, constants and
    roles must match exactly, and every literal must be a ``split`` triple
    in its recorded direction. No edge repeats within a grounding and edges
    in ``exclude`` (label triples) are never used. Groundings come in
    lexicographic order of the bound entity ids.
    """
    schema = schema or SchemaMap()
    h, t = graph.entity_id(head), graph.entity_id(tail)
    anchors = {h, t}
    exclude = {graph.to_ids(x) if isinstance(x[0], str) else tuple(x) for x in exclude if _known(graph, x)}
    lits = clause.literals
    start = lits[0].subject
    if start.kind != "role":
        raise ValueError(f"clause does not start at an anchor: {clause}")
    try:
        rels = [graph.relation_id(l.relation) for l in lits]
    except KeyError:
        return []
    const_ids = {}
    for l in lits:
        for term in (l.subject, l.object):
            if term.kind == "const":
                if not graph.has_entity(term.value):
                    return []
                const_ids[term.value] = graph.entity_id(term.value)
    classes = schema.class_ids(graph)
    adj = graph.adjacency(split)

    def matches(term: Term, v: int) -> bool:
        if term.kind == "role":
            return v == (h if term.value == HEAD else t)
        if term.kind == "const":
            return v == const_ids[term.value]
        return v not in anchors and classes[v] == term.value

    out: list[list[Triple]] = []
    path: list[tuple[int, int, int]] = []

    def extend(node: int, i: int):
        if len(out) >= limit:
            return
        if i == len(lits):
            out.append([graph.to_triple(e) for e in path])
            return
        lit, rid = lits[i], rels[i]
        for r, v, outgoing in adj[node]:
            if r != rid or outgoing != lit.forward or not matches(lit.object, v):
                continue
            edge = (node, r, v) if outgoing else (v, r, node)
            if edge in exclude or edge in path:
                continue
            path.append(edge)
            extend(v, i + 1)
            path.pop()
            if len(out) >= limit:
                return

    root = h if start.value == HEAD else t
    extend(root, 0)
    return out


def _known(graph, x) -> bool:
    if isinstance(x[0], str):
        return graph.has_entity(x[0]) and graph.has_entity(x[2]) and x[1] in graph.relations
    return True


# --- explanations -------------------------------------------------------------

@dataclass
class ExplanationEntry:
    clause: str
    key: str
    relevance: float
    rule: str | None = None
    groundings: list[list[Triple]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"clause": self.clause, "key": self.key, "relevance": self.relevance}
        if self.rule is not None:
            d["rule"] = self.rule
        else:
            d["groundings"] = [[list(x) for x in g] for g in self.groundings]
        return d


@dataclass
class Explanation:
    predicted: Triple
    modality: str
    entries: list[ExplanationEntry]
    anchors: tuple[str, str]
    skipped: list[str] = field(default_factory=list)

    def triples(self) -> set[Triple]:
        return {x for e in self.entries for g in e.groundings for x in g}

    def to_dict(self) -> dict:
        return {
            "modality": self.modality,
            "anchors": list(self.anchors),
            "entries": [e.to_dict() for e in self.entries],
            "skipped": list(self.skipped),
        }


@dataclass
class ExplanationResult:
    """All three modalities of one prediction plus the intermediate artefacts."""

    predicted: Triple
    rule: Explanation
    instance: Explanation | None
    analogy: Explanation | None
    report: object
    pairs: object
    table: object
    provenance: dict

    @property
    def modalities(self) -> dict:
        return {m: getattr(self, m) for m in MODALITIES if getattr(self, m) is not None}

    @property
    def removal_set(self) -> set[Triple]:
        """Grounding triples of the instance modality (the ablation set E)."""
        return self.instance.triples() if self.instance is not None else set()

    def to_dict(self) -> dict:
        return {
            "predicted": list(self.predicted),
            "provenance": self.provenance,
            "modalities": {m: e.to_dict() for m, e in self.modalities.items()},
            "ranking": self.report.to_dict()["clauses"],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, **kw)

    def to_text(self) -> str:
        p = self.predicted
        lines = [f"prediction: {p.relation}({p.head},{p.tail})"]
        for name, exp in self.modalities.items():
            lines.append(f"{name} (anchors {exp.anchors[0]}, {exp.anchors[1]}):")
            if not exp.entries:
                lines.append("  (no grounded clause)")
            for e in exp.entries:
                lines.append(f"  [{e.relevance:.4g}] {e.clause}")
                if e.rule is not None:
                    lines.append(f"      {e.rule}")
                for g in e.groundings:
                    lines.append("      " + " ∧ ".join(f"{x.relation}({x.head},{x.tail})" for x in g))
            for s in exp.skipped:
                lines.append(f"  skipped (no grounding): {s}")
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        """Explanation subgraph (predicted edge dashed) in DOT format."""
        esc = lambda s: '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'
        edges = set()
        for exp in (self.instance, self.analogy):
            if exp is not None:
                edges |= exp.triples()
        lines = ["digraph explanation {"]
        p = self.predicted
        lines.append(f"  {esc(p.head)} -> {esc(p.tail)} [label={esc(p.relation)}, style=dashed];")
        for x in sorted(edges):
            lines.append(f"  {esc(x.head)} -> {esc(x.tail)} [label={esc(x.relation)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _grounded(modality, top, table, anchors, graph, schema, limit, exclude, predicted):
    entries, skipped = [], []
    for key, score in top:
        clause = table.clauses[key]
        g = ground_clause(clause, anchors[0], anchors[1], graph, schema, limit, exclude)
        if g:
            entries.append(ExplanationEntry(str(clause), key, score, None, g))
        else:
            skipped.append(str(clause))
    return Explanation(predicted, modality, entries, anchors, skipped)


def explain(predicted, graph: KnowledgeGraph, store, schema: SchemaMap | None = None,
            config: ExplainConfig | None = None, index: TrainIndex | None = None) -> ExplanationResult:
    """Run the five steps for ``predicted`` and return the three modalities.

    Raises
    ------
    EmptyPositiveSetError
        When no neighbour pair carries the predicted relation (raise ``k``).
    """
    config = config or ExplainConfig()
    schema = schema or SchemaMap()
    predicted = Triple(*predicted)
    graph.to_ids(predicted)  # unknown identifiers fail here
    index = index or TrainIndex(store, graph)
    neighbors = knn(store, graph, predicted, config.k, index)
    pairs = build_pairs(neighbors, predicted.relation, graph, config.seed)
    table = mine(pairs, graph, schema, config.max_walk_len, budget=config.walk_budget)
    params = dict(config.method_params)
    if config.method == "mdi":
        params.setdefault("seed", config.seed)
    report = rank_clauses(table, pairs, config.method, params, config.sigma, config.negative_embeddings, index)
    top = report.top(config.top_clauses)
    rule = Explanation(
        predicted, "rule",
        [ExplanationEntry(str(table.clauses[k]), k, s, str(make_rule(table.clauses[k], predicted))) for k, s in top],
        (predicted.head, predicted.tail),
    )
    limit = config.grounding_limit
    instance = _grounded("instance", top, table, (predicted.head, predicted.tail), graph, schema, limit,
                         [predicted], predicted)
    try:
        analog = nearest_positive_pair(pairs, exclude=[(predicted.head, predicted.tail)])
    except EmptyPositiveSetError:
        analog = None  # the only positive is the predicted pair itself
    analogy = None
    if analog is not None:
        analogy = _grounded("analogy", top, table, analog, graph, schema, limit,
                            [predicted, (analog[0], predicted.relation, analog[1])], predicted)
    if top and not instance.entries and (analogy is None or not analogy.entries):
        warnings.warn(f"no top clause of {predicted} could be grounded; rule modality only", UngroundedWarning)
    provenance = {"k": config.k, "max_walk_len": config.max_walk_len, "method": config.method,
                  "seed": config.seed, "top_clauses": config.top_clauses, "sigma": report.info.get("sigma"),
                  "positives": len(pairs.positives), "clauses": len(table.clauses)}
    return ExplanationResult(predicted, rule, instance, analogy, report, pairs, table, provenance)


class Explainer:
    """Explains many predictions of one model, reusing the train-triple index."""

    def __init__(self, graph: KnowledgeGraph, store, schema: SchemaMap | None = None,
                 config: ExplainConfig | None = None):
        self.graph = graph
        self.store = store
        self.schema = schema or SchemaMap()
        self.config = config or ExplainConfig()
        self.index = TrainIndex(store, graph)

    def explain(self, predicted, **overrides) -> ExplanationResult:
        config = self.config
        if overrides:
            config = ExplainConfig(**{**config.to_dict(), **overrides})
        return explain(predicted, self.graph, self.store, self.schema, config, self.index)

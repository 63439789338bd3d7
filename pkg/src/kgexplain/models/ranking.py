"""Filtered link-prediction ranking (MRR and Hits@1)."""
from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .scoring import score_heads, score_tails


@dataclass(frozen=True)
class RankMetrics:
    """Aggregated metrics over head- and tail-side ranks.

    ``ranks`` holds one ``(head_rank, tail_rank)`` pair per evaluated triple.
    """

    mrr: float
    hits_at_1: float
    ranks: tuple[tuple[int, int], ...] = field(default=())

    def to_json(self) -> str:
        return json.dumps({"mrr": self.mrr, "hits1": self.hits_at_1, "ranks": [list(r) for r in self.ranks]})

    @classmethod
    def from_ranks(cls, ranks) -> "RankMetrics":
        ranks = tuple((int(h), int(t)) for h, t in ranks)
        flat = np.array([x for pair in ranks for x in pair], dtype=np.float64)
        if len(flat) == 0:
            return cls(0.0, 0.0, ())
        return cls(float(np.mean(1.0 / flat)), float(np.mean(flat == 1)), ranks)


class FilterIndex:
    """Known true heads per ``(relation, tail)`` and tails per ``(head, relation)``."""

    def __init__(self, graph):
        self.tails = defaultdict(set)
        self.heads = defaultdict(set)
        for h, r, t in graph.id_set(None):
            self.tails[(h, r)].add(t)
            self.heads[(r, t)].add(h)
        self.fingerprint = graph.fingerprint(None)

    def digest(self) -> str:
        """SHA-256 of the filter contents, to prove they were not altered."""
        h = hashlib.sha256()
        for name, table in (("tails", self.tails), ("heads", self.heads)):
            for key in sorted(table):
                h.update(f"{name}{key}{sorted(table[key])}".encode())
        return h.hexdigest()


def pessimistic_rank(scores: np.ndarray, true_index: int, excluded) -> int:
    """``1 + #(strictly greater) + #(equal)`` over non-excluded candidates.

    ``excluded`` candidates (known true completions other than the evaluated
    one) are dropped; the true candidate never counts against itself.
    """
    s_true = scores[true_index]
    mask = np.ones(len(scores), dtype=bool)
    if excluded:
        mask[list(excluded)] = False
    mask[true_index] = False
    others = scores[mask]
    return 1 + int(np.count_nonzero(others > s_true)) + int(np.count_nonzero(others == s_true))


def rank_triple(store, h: int, r: int, t: int, filters: FilterIndex) -> tuple[int, int, float]:
    """Filtered ``(head_rank, tail_rank, margin)`` of one triple given as store rows.

    ``margin`` is the smaller of the two gaps between the true score and the
    best surviving competitor (negative when some competitor is ahead).
    """
    tails = score_tails(store, h, r)
    heads = score_heads(store, r, t)
    t_ex = filters.tails.get((h, r), set()) - {t}
    h_ex = filters.heads.get((r, t), set()) - {h}
    tail_rank = pessimistic_rank(tails, t, t_ex)
    head_rank = pessimistic_rank(heads, h, h_ex)
    margins = []
    for scores, true, ex in ((tails, t, t_ex), (heads, h, h_ex)):
        mask = np.ones(len(scores), dtype=bool)
        mask[list(ex | {true})] = False
        margins.append(scores[true] - scores[mask].max() if mask.any() else np.inf)
    return head_rank, tail_rank, float(min(margins))


def evaluate_ranking(store, eval_triples, filter_graph, filters: FilterIndex | None = None) -> RankMetrics:
    """Filtered ranks of ``eval_triples`` (labels) in both directions.

    ``filter_graph`` supplies the known-true triples (all splits) and must be
    independent of any ablated training graph the store was trained on.
    """
    filters = filters or FilterIndex(filter_graph)
    eval_triples = list(eval_triples)
    for h, r, t in eval_triples:
        store.entity_row(h), store.relation_row(r), store.entity_row(t)
    # filter sets are keyed by graph ids
    store = store.aligned_to(filter_graph)
    ranks = []
    for triple in eval_triples:
        hr, tr, _ = rank_triple(store, *filter_graph.to_ids(triple), filters)
        ranks.append((hr, tr))
    return RankMetrics.from_ranks(ranks)

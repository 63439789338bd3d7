"""Nearest training triples in triple-embedding space and the pair sets built from them."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EmptyPositiveSetError
from .graph import KnowledgeGraph, Triple
from .models.scoring import triple_embeddings_ids

DEFAULT_K = 40


class CorruptionError(DataError):
    """No admissible corruption found within the retry cap."""


class TrainIndex:
    """Triple embeddings of a graph's train split under one store.

    Building the matrix is the expensive part of a query, so it is shared
    across explanations of the same model.
    """

    def __init__(self, store, graph: KnowledgeGraph, split: str = "train"):
        self.graph = graph
        self.store = store.aligned_to(graph)
        self.ids = np.asarray(graph.split(split), dtype=np.int64)
        if len(self.ids) == 0:
            raise DataError(f"{split} split is empty")
        self.embeddings = triple_embeddings_ids(self.store, self.ids)
        # lexicographic id order, the tie-break for equal distances
        self._lex = np.empty(len(self.ids), dtype=np.int64)
        self._lex[np.lexsort(self.ids.T[::-1])] = np.arange(len(self.ids))

    def embed(self, triple) -> np.ndarray:
        """Embedding of a (possibly unseen) triple given by labels."""
        return triple_embeddings_ids(self.store, [self.graph.to_ids(triple)])[0]

    def embed_ids(self, ids) -> np.ndarray:
        return triple_embeddings_ids(self.store, ids)


@dataclass(frozen=True)
class NeighborEntry:
    triple: Triple
    ids: tuple[int, int, int]
    embedding: np.ndarray
    distance: float


@dataclass(frozen=True)
class NeighborSet:
    """``k`` nearest training triples, ascending by distance."""

    predicted: Triple
    query: np.ndarray
    entries: tuple[NeighborEntry, ...]
    k: int

    def __len__(self):
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "predicted": list(self.predicted),
            "k": self.k,
            "entries": [{"triple": list(e.triple), "distance": e.distance} for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def knn(store, graph: KnowledgeGraph, predicted, k: int = DEFAULT_K, index: TrainIndex | None = None) -> NeighborSet:
    """Exact ``k`` nearest training triples to ``predicted`` by Euclidean distance.

    Ties are ordered by the lexicographic id tuple of the training triple.
    The predicted triple, when it is itself a training triple, is treated
    like any other.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    index = index or TrainIndex(store, graph)
    predicted = Triple(*predicted)
    q = index.embed(predicted)
    dist = np.sqrt(((index.embeddings - q) ** 2).sum(axis=1))
    n = len(dist)
    k_eff = min(k, n)
    if k_eff < n:
        # every candidate tied with the k-th distance survives to the tie-break
        kth = np.partition(dist, k_eff - 1)[k_eff - 1]
        cand = np.flatnonzero(dist <= kth)
    else:
        cand = np.arange(n)
    order = cand[np.lexsort((index._lex[cand], dist[cand]))][:k_eff]
    entries = tuple(
        NeighborEntry(graph.to_triple(index.ids[i]), tuple(int(x) for x in index.ids[i]),
                      index.embeddings[i], float(dist[i]))
        for i in order
    )
    return NeighborSet(predicted, q, entries, k)


@dataclass(frozen=True)
class PositivePair:
    head: str
    tail: str
    source: Triple
    embedding: np.ndarray
    distance: float

    @property
    def pair(self):
        return (self.head, self.tail)


@dataclass(frozen=True)
class NegativePair:
    head: str
    tail: str
    source: int  # index into PairSets.positives
    replaced: str  # "head" or "tail"

    @property
    def pair(self):
        return (self.head, self.tail)


@dataclass(frozen=True)
class PairSets:
    relation: str
    positives: tuple[PositivePair, ...]
    negatives: tuple[NegativePair, ...]
    predicted: Triple | None = None
    query: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "relation": self.relation,
            "positives": [
                {"pair": list(p.pair), "source": list(p.source), "distance": p.distance} for p in self.positives
            ],
            "negatives": [
                {"pair": list(n.pair), "source": n.source, "replaced": n.replaced} for n in self.negatives
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def build_pairs(neighbors: NeighborSet, relation: str, graph: KnowledgeGraph, seed: int = 0,
                max_retries: int = 1000) -> PairSets:
    """Positive pairs among the neighbours and one corruption per positive.

    A neighbour pair is positive when ``(head, relation, tail)`` is a train
    triple; other neighbour pairs are dropped. Repeated pairs keep their
    closest source triple. Each corruption replaces head or tail (equal odds)
    by a uniform entity and is rejected while the result is a known triple
    in any split.
    """
    if len(neighbors) == 0:
        raise ValueError("empty neighbour set")
    r_id = graph.relation_id(relation)
    train = graph.id_set("train")
    known = graph.id_set(None)
    positives = []
    seen = set()
    for entry in neighbors.entries:
        h, _, t = entry.ids
        if (h, t) in seen or (h, r_id, t) not in train:
            continue
        seen.add((h, t))
        positives.append(PositivePair(entry.triple.head, entry.triple.tail, entry.triple, entry.embedding,
                                      entry.distance))
    if not positives:
        raise EmptyPositiveSetError(
            f"none of the {len(neighbors)} nearest neighbours is linked by {relation!r}; increase k"
        )
    rng = np.random.default_rng(seed)
    n_e = graph.n_entities
    negatives = []
    for i, p in enumerate(positives):
        h, t = graph.entity_id(p.head), graph.entity_id(p.tail)
        for _ in range(max_retries):
            replace_tail = bool(rng.random() < 0.5)
            e = int(rng.integers(n_e))
            c, d = (h, e) if replace_tail else (e, t)
            if (c, r_id, d) not in known:
                break
        else:
            raise CorruptionError(
                f"no corruption of {p.pair} outside the graph after {max_retries} draws ({relation!r} is near-complete)"
            )
        negatives.append(NegativePair(graph.entities[c], graph.entities[d], i, "tail" if replace_tail else "head"))
    return PairSets(relation, tuple(positives), tuple(negatives), neighbors.predicted, neighbors.query)


def nearest_positive_pair(pairs: PairSets, exclude=()) -> tuple[str, str]:
    """Positive pair whose source triple lies closest to the predicted triple.

    Positives are stored in neighbour order, so the first one not listed in
    ``exclude`` is the closest with the id tie-break already applied.
    """
    exclude = {tuple(x) for x in exclude}
    for p in pairs.positives:
        if p.pair not in exclude:
            return p.pair
    raise EmptyPositiveSetError("no positive pair available for the analogy")

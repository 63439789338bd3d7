import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgexplain.errors import DataError, EmptyPositiveSetError
from kgexplain.graph import KnowledgeGraph
from kgexplain.models import EmbeddingStore
from kgexplain.neighbors import CorruptionError, TrainIndex, build_pairs, knn, nearest_positive_pair


def line_store(graph, values, rel=0.0):
    """DistMult store with 1-d entity vectors given by ``values``."""
    E = np.array([[values[e]] for e in graph.entities], dtype=float)
    R = np.full((graph.n_relations, 1), rel)
    return EmbeddingStore("distmult", graph.entities, graph.relations, E, R)


def random_setup(seed, n_e=8, n_t=30, d=3):
    rng = np.random.default_rng(seed)
    ents = [f"e{i}" for i in range(n_e)]
    rows = {(ents[a], f"r{b}", ents[c]) for a, b, c in rng.integers(0, [n_e, 3, n_e], size=(n_t, 3))}
    g = KnowledgeGraph.from_triples(train=sorted(rows))
    s = EmbeddingStore("transe", g.entities, g.relations, rng.normal(size=(g.n_entities, d)),
                       rng.normal(size=(g.n_relations, d)))
    return g, s, rng


def test_knn_spec_example():
    g = KnowledgeGraph.from_triples(train=[("A", "r", "A"), ("B", "r", "C")], valid=[("A", "r", "Q")])
    s = line_store(g, {"A": 0.0, "B": 3.0, "C": 4.0, "Q": 1.0})
    n = knn(s, g, ("A", "r", "Q"), k=1)
    assert [e.triple for e in n.entries] == [("A", "r", "A")]
    assert n.entries[0].distance == pytest.approx(1.0)
    n = knn(s, g, ("A", "r", "Q"), k=2)
    assert n.entries[1].distance == pytest.approx(np.sqrt(18))


def test_knn_identity_query():
    g, s, _ = random_setup(0)
    t = g.triples("train")[5]
    n = knn(s, g, t, k=1)
    assert n.entries[0].triple == t and n.entries[0].distance == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_knn_full_sort_oracle(seed):
    g, s, rng = random_setup(seed)
    train = g.triples("train")
    q = train[int(rng.integers(len(train)))]
    n = knn(s, g, q, k=len(train))
    idx = TrainIndex(s, g)
    qv = idx.embed(q)
    keyed = sorted(train, key=lambda t: (np.linalg.norm(idx.embed(t) - qv), g.to_ids(t)))
    assert [e.triple for e in n.entries] == keyed


def test_knn_tie_break_by_ids():
    g = KnowledgeGraph.from_triples(train=[("c", "r", "a"), ("a", "r", "b"), ("a", "r", "a")])
    s = line_store(g, {"a": 1.0, "b": 1.0, "c": 1.0})
    n = knn(s, g, ("a", "r", "a"), k=2)
    assert [e.ids for e in n.entries] == sorted(g.to_ids(t) for t in g.triples("train"))[:2]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 40))
def test_knn_properties(seed, k):
    g, s, rng = random_setup(seed)
    q = g.triples("train")[0]
    n = knn(s, g, q, k=k)
    d = [e.distance for e in n.entries]
    assert len(d) == min(k, len(g.split("train")))
    assert d == sorted(d) and min(d) >= 0
    # the store's row order must not matter
    perm = rng.permutation(g.n_entities)
    shuffled = EmbeddingStore(s.model_kind, [g.entities[i] for i in perm], s.relations, s.entity_vectors[perm],
                              s.relation_vectors)
    assert [e.triple for e in knn(shuffled, g, q, k=k).entries] == [e.triple for e in n.entries]


def test_knn_errors():
    g = KnowledgeGraph.from_triples(valid=[("a", "r", "b")])
    s = line_store(g, {"a": 0.0, "b": 1.0})
    with pytest.raises(DataError):
        knn(s, g, ("a", "r", "b"), k=3)
    g2 = KnowledgeGraph.from_triples(train=[("a", "r", "b")])
    with pytest.raises(ValueError):
        knn(line_store(g2, {"a": 0.0, "b": 1.0}), g2, ("a", "r", "b"), k=0)


def test_pairs_table1_caption():
    g = KnowledgeGraph.from_triples(
        train=[("Carol", "knows", "Dave"), ("Carol", "likes", "Eve")] + [(f"p{i}", "likes", f"p{i+1}") for i in range(6)],
        valid=[("Alice", "knows", "Bob")],
    )
    s = line_store(g, {e: float(i) for i, e in enumerate(g.entities)}, rel=1.0)
    n = knn(s, g, ("Alice", "knows", "Bob"), k=40)
    pairs = build_pairs(n, "knows", g, seed=0)
    assert [p.pair for p in pairs.positives] == [("Carol", "Dave")]
    assert len(pairs.negatives) == 1
    assert nearest_positive_pair(pairs) == ("Carol", "Dave")


@pytest.mark.parametrize("seed", range(8))
def test_pair_invariants(seed):
    g, s, rng = random_setup(seed, n_e=12, n_t=60)
    q = g.triples("train")[0]
    n = knn(s, g, q, k=40)
    pairs = build_pairs(n, q.relation, g, seed=seed)
    r = q.relation
    assert len(pairs.negatives) == len(pairs.positives)
    for p in pairs.positives:
        assert g.contains((p.head, r, p.tail), split="train")
    for neg in pairs.negatives:
        src = pairs.positives[neg.source]
        assert not g.contains((neg.head, r, neg.tail))
        assert (neg.head == src.head) + (neg.tail == src.tail) == 1
        assert neg.replaced == ("tail" if neg.head == src.head else "head")
    again = build_pairs(n, r, g, seed=seed)
    assert again.to_json() == pairs.to_json()
    assert len({p.pair for p in pairs.positives}) == len(pairs.positives)


def test_empty_positive_set():
    g = KnowledgeGraph.from_triples(train=[("a", "likes", "b"), ("c", "knows", "d")])
    s = line_store(g, {"a": 0.0, "b": 0.0, "c": 9.0, "d": 9.0})
    n = knn(s, g, ("a", "likes", "b"), k=1)
    with pytest.raises(EmptyPositiveSetError, match="increase k"):
        build_pairs(n, "knows", g)


def test_corruption_cap_on_complete_relation():
    ents = ["a", "b"]
    g = KnowledgeGraph.from_triples(train=[(x, "r", y) for x in ents for y in ents])
    s = line_store(g, {"a": 0.0, "b": 1.0})
    with pytest.raises(CorruptionError):
        build_pairs(knn(s, g, ("a", "r", "b"), k=4), "r", g, max_retries=50)


def test_nearest_positive_tie_uses_ids():
    g = KnowledgeGraph.from_triples(train=[("b", "r", "c"), ("a", "r", "c")], valid=[("q", "r", "c")])
    s = line_store(g, {"a": 1.0, "b": -1.0, "c": 0.0, "q": 0.0})
    pairs = build_pairs(knn(s, g, ("q", "r", "c"), k=2), "r", g)
    # equal distance 1; ("b", "r", "c") was interned first
    assert nearest_positive_pair(pairs) == ("b", "c")
    assert nearest_positive_pair(pairs, exclude=[("b", "c")]) == ("a", "c")
    with pytest.raises(EmptyPositiveSetError):
        nearest_positive_pair(pairs, exclude=[("b", "c"), ("a", "c")])


def test_neighbor_json():
    g, s, _ = random_setup(1)
    n = knn(s, g, g.triples("train")[0], k=3)
    assert '"k": 3' in n.to_json()

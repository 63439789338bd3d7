"""Hand-built graphs and stores shared by the test modules."""
from __future__ import annotations

import numpy as np

from kgexplain.graph import KnowledgeGraph, SchemaMap
from kgexplain.models import EmbeddingStore

PREDICTED = ("Alice", "knows", "Bob")


def table1_graph():
    """Alice/Bob scenario: every known ``knows`` pair is bridged by a colleague,
    some also by a sibling; Carol/Dave is the pair closest to Alice/Bob."""
    train = [
        ("Alice", "knows", "Tom"), ("Tom", "works_with", "Bob"),
        ("Alice", "knows", "Pedro"), ("Pedro", "sibling_of", "Bob"),
        ("Carol", "knows", "Dave"),
        ("Carol", "knows", "Anja"), ("Anja", "works_with", "Dave"),
        ("Carol", "knows", "Jan"), ("Jan", "sibling_of", "Dave"),
    ]
    for i in range(6):
        x, y, c = f"X{i}", f"Y{i}", f"C{i}"
        train += [(x, "knows", y), (x, "knows", c), (c, "works_with", y)]
        if i < 2:
            train += [(x, "knows", f"S{i}"), (f"S{i}", "sibling_of", y)]
    # unrelated people give the corruptions somewhere to land
    for i in range(8):
        train.append((f"Z{i}", "works_with", f"Z{(i + 1) % 8}"))
    return KnowledgeGraph.from_triples(train=train, valid=[PREDICTED])


def table1_store(graph):
    """DistMult store whose triple space puts ``(X, knows, Y)`` pairs near the
    prediction, Carol/Dave nearest, and every bridge triple far away."""
    rng = np.random.default_rng(7)
    d = 4
    E = 10.0 + 5.0 * rng.normal(size=(graph.n_entities, d))
    head, tail = np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])
    place = {"Alice": head, "Bob": tail, "Carol": head + 0.01, "Dave": tail + 0.01}
    for i in range(6):
        place[f"X{i}"] = head + 0.1 * (i + 1)
        place[f"Y{i}"] = tail + 0.1 * (i + 1)
    for name, vec in place.items():
        E[graph.entity_id(name)] = vec
    R = np.zeros((graph.n_relations, d))
    R[graph.relation_id("knows")] = [0, 0, 1.0, 0]
    R[graph.relation_id("works_with")] = [0, 0, 0, 5.0]
    R[graph.relation_id("sibling_of")] = [0, 0, 0, -5.0]
    return EmbeddingStore("distmult", graph.entities, graph.relations, E, R)


def table1_schema(graph):
    return SchemaMap({e: "Person" for e in graph.entities})


MERONYM_PREDICTED = ("family_Treponemataceae", "hypernym", "bacteria_family")


def meronym_graph():
    """WordNet-style taxonomy where ``hypernym(F, B)`` is only reachable through
    the chain ``member_meronym(O, F), member_meronym(D, O), member_meronym(D, B)``."""
    train = [
        ("order_Spirochaetales", "member_meronym", "family_Treponemataceae"),
        ("division_Eubacteria", "member_meronym", "order_Spirochaetales"),
        ("division_Eubacteria", "member_meronym", "bacteria_family"),
    ]
    for i in range(6):
        f, o, d, b = f"family_{i}", f"order_{i}", f"division_{i}", f"group_{i}"
        train += [(f, "hypernym", b), (o, "member_meronym", f), (d, "member_meronym", o), (d, "member_meronym", b)]
    for i in range(8):
        train.append((f"genus_{i}", "also_see", f"genus_{(i + 1) % 8}"))
    return KnowledgeGraph.from_triples(train=train, valid=[MERONYM_PREDICTED])


def meronym_store(graph):
    rng = np.random.default_rng(11)
    d = 4
    E = 10.0 + 5.0 * rng.normal(size=(graph.n_entities, d))
    head, tail = np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])
    E[graph.entity_id("family_Treponemataceae")] = head
    E[graph.entity_id("bacteria_family")] = tail
    for i in range(6):
        E[graph.entity_id(f"family_{i}")] = head + 0.05 * (i + 1)
        E[graph.entity_id(f"group_{i}")] = tail + 0.05 * (i + 1)
    R = np.zeros((graph.n_relations, d))
    R[graph.relation_id("hypernym")] = [0, 0, 1.0, 0]
    R[graph.relation_id("member_meronym")] = [0, 0, 0, 5.0]
    R[graph.relation_id("also_see")] = [0, 0, 0, -5.0]
    return EmbeddingStore("distmult", graph.entities, graph.relations, E, R)


def meronym_schema(graph):
    return SchemaMap({e: "noun.animal" if not e.startswith("genus") else "noun.plant" for e in graph.entities})


def symmetric_toy(n_pairs: int = 24, n_valid: int = 12):
    """``married`` pairs in train whose inverses form the validation split, plus
    a ``friend`` ring so every entity has other edges to ablate."""
    train, valid = [], []
    for i in range(n_pairs):
        a, b = f"a{i}", f"b{i}"
        train.append((a, "married", b))
        if i < n_valid:
            valid.append((b, "married", a))
        else:
            train.append((b, "married", a))
        train.append((a, "friend", f"a{(i + 1) % n_pairs}"))
        train.append((b, "friend", f"b{(i + 1) % n_pairs}"))
    return KnowledgeGraph.from_triples(train=train, valid=valid, test=[])


def wn18rr_like(n_triples: int = 5000, seed: int = 0):
    """Synthetic graph with WN18RR's shape: a hypernym taxonomy, partial
    member_meronym inverses, symmetric derivational pairs (whose held-out
    inverses form the validation split) and a few sparse relations."""
    rng = np.random.default_rng(seed)
    n = n_triples // 3
    names = [f"synset_{i:05d}" for i in range(n)]
    train = set()
    for i in range(1, n):
        parent = int(rng.integers(max(0, i // 5 - 3), i // 5 + 1)) if i >= 5 else 0
        train.add((names[i], "hypernym", names[parent]))
        if rng.random() < 0.3:
            train.add((names[parent], "member_meronym", names[i]))
    valid = []
    perm = rng.permutation(n)
    for a, b in zip(perm[0::2][: n // 4], perm[1::2][: n // 4]):
        train.add((names[a], "derivationally_related_form", names[b]))
        if len(valid) < 60:
            valid.append((names[b], "derivationally_related_form", names[a]))
        else:
            train.add((names[b], "derivationally_related_form", names[a]))
    sparse = ["has_part", "also_see", "synset_domain_topic_of", "verb_group", "instance_hypernym",
              "similar_to", "member_of_domain_usage", "member_of_domain_region"]
    while len(train) < n_triples:
        a, b = rng.integers(0, n, size=2)
        if a != b:
            train.add((names[a], sparse[int(rng.integers(len(sparse)))], names[b]))
    train = sorted(train)
    valid = [v for v in valid if tuple(v) not in set(train)]
    return KnowledgeGraph.from_triples(train=train, valid=valid, test=[])

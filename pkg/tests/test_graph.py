import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgexplain.errors import ParseError, RemovalError, SchemaError, UnknownIdentifierError
from kgexplain.graph import (
    KnowledgeGraph,
    SchemaMap,
    Triple,
    load_dataset,
    load_schema,
    load_triples,
    write_stats,
    write_triples,
)

triples_st = st.lists(
    st.tuples(st.sampled_from("abcdef"), st.sampled_from(["r", "s"]), st.sampled_from("abcdef")),
    max_size=25,
)


def test_empty_file(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("")
    g = load_triples(p)
    assert len(g) == 0 and g.n_entities == 0


def test_duplicates_counted(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("a\tr\tb\na\tr\tb\n")
    g = load_triples(p)
    assert len(g) == 1
    assert g.duplicates["train"] == 1


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("a\tr\tb\na r b\n")
    with pytest.raises(ParseError) as info:
        load_triples(p)
    assert info.value.line_no == 2


def test_kinship_counts(kinship):
    assert len(kinship) == 10_686
    assert kinship.n_entities == 104
    # the distributed files carry 25 relation labels
    assert kinship.n_relations == 25
    assert kinship.stats()["splits"] == {"train": 8544, "valid": 1068, "test": 1074}


def test_round_trip(tmp_path, kinship):
    for split in ("train", "valid", "test"):
        write_triples(kinship, tmp_path / f"{split}.txt", split)
    again = load_dataset(tmp_path)
    for split in ("train", "valid", "test"):
        assert set(again.triples(split)) == set(kinship.triples(split))
    write_stats(kinship, tmp_path / "stats.json")
    assert json.loads((tmp_path / "stats.json").read_text())["entities"] == 104


def test_schema_default_and_reserved(tmp_path):
    g = KnowledgeGraph.from_triples(train=[("a", "r", "b")])
    s = load_schema(None)
    assert s.class_of("a") == "Entity" == s.class_of("b")
    p = tmp_path / "schema.tsv"
    p.write_text("a\tnoun.animal\nghost\tThing\n")
    s = load_schema(p, graph=g)
    assert s.class_of("a") == "noun.animal"
    assert s.unknown_entities == ("ghost",)
    assert s.class_of("ghost") == "Thing"
    p.write_text("a\tHead\n")
    with pytest.raises(SchemaError):
        load_schema(p)
    with pytest.raises(SchemaError):
        SchemaMap({"a": "Tail"})


def test_remove_triples(kinship):
    assert kinship.remove_triples([]) is kinship
    t = kinship.triples("train")[0]
    g2 = kinship.remove_triples([t])
    assert len(g2.split("train")) == 8543
    assert not g2.contains(t) and kinship.contains(t)
    assert len(g2.split("valid")) == 1068 and len(g2.split("test")) == 1074
    with pytest.raises(RemovalError):
        kinship.remove_triples([kinship.triples("valid")[0]])
    with pytest.raises(RemovalError):
        kinship.remove_triples([("nobody", "term1", "person1")])


def test_neighbors_direction_tags():
    g = KnowledgeGraph.from_triples(train=[("a", "r", "b"), ("c", "r", "a"), ("d", "s", "a")])
    n = g.neighbors_of("a")
    assert len(n) == 3
    assert sorted(x.direction for x in n) == ["in", "in", "out"]
    with pytest.raises(UnknownIdentifierError):
        g.neighbors_of("zz")


def test_contains_after_insert():
    g = KnowledgeGraph.from_triples(train=[("a", "r", "b")])
    g = g.with_triples("valid", [("b", "r", "c")])
    assert g.contains(("b", "r", "c"))
    assert not g.contains(("b", "r", "c"), split="train")
    assert not g.contains(("x", "r", "c"))


def _brute_neighbors(triples, e):
    out = []
    for h, r, t in triples:
        if h == e:
            out.append((r, t, "out"))
        if t == e:
            out.append((r, h, "in"))
    return sorted(out)


def test_neighbors_match_scan_on_kinship(kinship):
    triples = kinship.triples(None)
    for e in kinship.entities[:20]:
        got = sorted((n.relation, n.neighbor, n.direction) for n in kinship.neighbors_of(e))
        assert got == _brute_neighbors(triples, e)


@settings(max_examples=60, deadline=None)
@given(triples_st, st.data())
def test_remove_then_contains(rows, data):
    g = KnowledgeGraph.from_triples(train=rows)
    train = g.triples("train")
    removal = data.draw(st.sets(st.sampled_from(train)) if train else st.just(set()))
    g2 = g.remove_triples(removal)
    for t in train:
        assert g2.contains(t) == (t not in removal)
    assert len(g2.split("train")) == len(train) - len(removal)
    assert len(g.split("train")) == len(train)  # original untouched


@settings(max_examples=60, deadline=None)
@given(triples_st)
def test_adjacency_matches_scan(rows):
    g = KnowledgeGraph.from_triples(train=rows)
    triples = g.triples("train")
    for e in g.entities:
        got = sorted((n.relation, n.neighbor, n.direction) for n in g.neighbors_of(e, "train"))
        assert got == _brute_neighbors(triples, e)


def test_split_arrays_are_read_only(kinship):
    with pytest.raises(ValueError):
        kinship.split("train")[0, 0] = 1


def test_fingerprint_changes_with_removal(kinship):
    g2 = kinship.remove_triples(kinship.triples("train")[:1])
    assert g2.fingerprint("valid") == kinship.fingerprint("valid")
    assert g2.fingerprint("train") != kinship.fingerprint("train")

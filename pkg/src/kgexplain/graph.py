"""Knowledge graph container, TSV loading and schema mapping."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ParseError, RemovalError, SchemaError, UnknownIdentifierError

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
RESERVED_CLASSES = frozenset({"Head", "Tail"})
DEFAULT_CLASS = "Entity"


class Triple(NamedTuple):
    head: str
    relation: str
    tail: str


class Neighbor(NamedTuple):
    relation: str
    neighbor: str
    direction: str  # "out" | "in"


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=np.int64).reshape(-1, 3)
    arr.setflags(write=False)
    return arr


class KnowledgeGraph:
    """Immutable directed labelled multigraph with train/valid/test splits.

    Entity and relation labels are interned to dense integers in first-seen
    order; every graph derived from another (``load_triples`` on top of an
    existing graph, ``remove_triples``) keeps the same id tables, so ids are
    comparable across an original graph and its ablations.

    Parameters
    ----------
    entities, relations : sequence of str
        Label tables; position is the interned id.
    splits : mapping of split name to (m, 3) int array
        Triples as ``(head_id, relation_id, tail_id)`` rows.
    duplicates : mapping of split name to int, optional
        Within-split duplicate lines dropped while loading.
    """

    def __init__(
        self,
        entities: Sequence[str] = (),
        relations: Sequence[str] = (),
        splits: Mapping[str, np.ndarray] | None = None,
        duplicates: Mapping[str, int] | None = None,
    ):
        self._entities = tuple(entities)
        self._relations = tuple(relations)
        self._entity_ids = {e: i for i, e in enumerate(self._entities)}
        self._relation_ids = {r: i for i, r in enumerate(self._relations)}
        if len(self._entity_ids) != len(self._entities):
            raise ValueError("duplicate entity labels")
        if len(self._relation_ids) != len(self._relations):
            raise ValueError("duplicate relation labels")
        splits = dict(splits or {})
        self._splits = {s: _freeze(splits.get(s, np.empty((0, 3)))) for s in SPLITS}
        extra = set(splits) - set(SPLITS)
        if extra:
            raise ValueError(f"unknown split names: {sorted(extra)}")
        self.duplicates = {s: int((duplicates or {}).get(s, 0)) for s in SPLITS}
        for s, arr in self._splits.items():
            if len(arr) and (
                arr.min() < 0
                or arr[:, [0, 2]].max() >= len(self._entities)
                or arr[:, 1].max() >= len(self._relations)
            ):
                raise ValueError(f"split {s!r} references unregistered identifiers")
        self._cache: dict = {}

    # construction helpers -------------------------------------------------
    @classmethod
    def from_triples(cls, train=(), valid=(), test=()) -> "KnowledgeGraph":
        """Build a graph from iterables of ``(head, relation, tail)`` labels."""
        graph = cls()
        for split, rows in (("train", train), ("valid", valid), ("test", test)):
            graph = graph.with_triples(split, rows)
        return graph

    def with_triples(self, split: str, rows: Iterable[Sequence[str]]) -> "KnowledgeGraph":
        """Return a new graph with ``rows`` appended to ``split`` (deduplicated)."""
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        entities = list(self._entities)
        relations = list(self._relations)
        ent_ids = dict(self._entity_ids)
        rel_ids = dict(self._relation_ids)
        seen = set(map(tuple, self._splits[split].tolist()))
        new = []
        dups = 0
        for h, r, t in rows:
            ids = []
            for label, table, lookup in ((h, entities, ent_ids), (r, relations, rel_ids), (t, entities, ent_ids)):
                i = lookup.get(label)
                if i is None:
                    i = lookup[label] = len(table)
                    table.append(label)
                ids.append(i)
            key = tuple(ids)
            if key in seen:
                dups += 1
                continue
            seen.add(key)
            new.append(key)
        splits = dict(self._splits)
        if new:
            splits[split] = np.vstack([self._splits[split], np.asarray(new, dtype=np.int64)])
        duplicates = dict(self.duplicates)
        duplicates[split] += dups
        return KnowledgeGraph(entities, relations, splits, duplicates)

    # identifiers ----------------------------------------------------------
    @property
    def entities(self) -> tuple[str, ...]:
        return self._entities

    @property
    def relations(self) -> tuple[str, ...]:
        return self._relations

    @property
    def n_entities(self) -> int:
        return len(self._entities)

    @property
    def n_relations(self) -> int:
        return len(self._relations)

    def entity_id(self, label: str) -> int:
        try:
            return self._entity_ids[label]
        except KeyError:
            raise UnknownIdentifierError("entity", label) from None

    def relation_id(self, label: str) -> int:
        try:
            return self._relation_ids[label]
        except KeyError:
            raise UnknownIdentifierError("relation", label) from None

    def has_entity(self, label: str) -> bool:
        return label in self._entity_ids

    def to_ids(self, triple: Sequence[str]) -> tuple[int, int, int]:
        h, r, t = triple
        return self.entity_id(h), self.relation_id(r), self.entity_id(t)

    def to_triple(self, ids: Sequence[int]) -> Triple:
        h, r, t = ids
        return Triple(self._entities[h], self._relations[r], self._entities[t])

    # triples --------------------------------------------------------------
    def split(self, name: str) -> np.ndarray:
        """Read-only ``(m, 3)`` id array of one split."""
        return self._splits[name]

    def all_triples(self) -> np.ndarray:
        return np.vstack([self._splits[s] for s in SPLITS])

    def triples(self, split: str | None = None) -> list[Triple]:
        arr = self.all_triples() if split is None else self._splits[split]
        return [self.to_triple(row) for row in arr.tolist()]

    def id_set(self, split: str | None = None) -> frozenset:
        """Frozen set of id tuples for one split, or all splits when None."""
        key = ("idset", split)
        if key not in self._cache:
            arr = self.all_triples() if split is None else self._splits[split]
            self._cache[key] = frozenset(map(tuple, arr.tolist()))
        return self._cache[key]

    def contains(self, triple: Sequence[str], split: str | None = None) -> bool:
        h, r, t = triple
        ids = (self._entity_ids.get(h), self._relation_ids.get(r), self._entity_ids.get(t))
        if None in ids:
            return False
        return ids in self.id_set(split)

    def __len__(self):
        return sum(len(a) for a in self._splits.values())

    @property
    def cross_split_duplicates(self) -> int:
        return sum(len(self._splits[s]) for s in SPLITS) - len(self.id_set())

    # adjacency ------------------------------------------------------------
    def adjacency(self, split: str | None = "train") -> tuple[tuple[tuple[int, int, bool], ...], ...]:
        """Per-entity tuple of ``(relation_id, neighbor_id, outgoing)`` edges.

        A self-loop contributes one outgoing and one incoming entry.
        """
        key = ("adj", split)
        if key not in self._cache:
            if split is None:
                arr = np.array(sorted(self.id_set(None)), dtype=np.int64).reshape(-1, 3)
            else:
                arr = self._splits[split]
            lists: list[list] = [[] for _ in range(self.n_entities)]
            for h, r, t in arr.tolist():
                lists[h].append((r, t, True))
                lists[t].append((r, h, False))
            self._cache[key] = tuple(tuple(sorted(x)) for x in lists)
        return self._cache[key]

    def neighbors_of(self, entity: str, split: str | None = None) -> list[Neighbor]:
        eid = self.entity_id(entity)
        return [
            Neighbor(self._relations[r], self._entities[n], "out" if out else "in")
            for r, n, out in self.adjacency(split)[eid]
        ]

    def degree(self, entity_id: int, split: str | None = "train") -> int:
        return len(self.adjacency(split)[entity_id])

    # derived graphs -------------------------------------------------------
    def remove_triples(self, removal: Iterable[Sequence[str]]) -> "KnowledgeGraph":
        """Copy of this graph whose train split lacks ``removal``.

        Raises
        ------
        RemovalError
            If a triple is not part of the train split.
        """
        train = self.id_set("train")
        drop = set()
        for triple in removal:
            try:
                ids = self.to_ids(triple)
            except UnknownIdentifierError:
                ids = None
            if ids is None or ids not in train:
                raise RemovalError(f"triple not in train split: {tuple(triple)}")
            drop.add(ids)
        return self.remove_ids(drop)

    def remove_ids(self, drop) -> "KnowledgeGraph":
        drop = set(map(tuple, drop))
        if not drop:
            return self
        arr = self._splits["train"]
        keep = np.fromiter((tuple(row) not in drop for row in arr.tolist()), dtype=bool, count=len(arr))
        if len(arr) - keep.sum() != len(drop):
            raise RemovalError("removal set contains triples outside the train split")
        splits = dict(self._splits)
        splits["train"] = arr[keep]
        return KnowledgeGraph(self._entities, self._relations, splits, self.duplicates)

    # reporting ------------------------------------------------------------
    def stats(self) -> dict:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "triples": len(self),
            "splits": {s: int(len(self._splits[s])) for s in SPLITS},
            "duplicates": dict(self.duplicates),
            "cross_split_duplicates": self.cross_split_duplicates,
        }

    def fingerprint(self, split: str | None = None) -> str:
        """SHA-256 over the sorted labelled triples of a split (or all)."""
        rows = sorted(
            "\t".join(t) for t in (self.triples(split))
        )
        digest = hashlib.sha256()
        for row in rows:
            digest.update(row.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()

    def __repr__(self):
        s = self.stats()["splits"]
        return (
            f"KnowledgeGraph(entities={self.n_entities}, relations={self.n_relations}, "
            f"train={s['train']}, valid={s['valid']}, test={s['test']})"
        )


def load_triples(path, split: str = "train", graph: KnowledgeGraph | None = None) -> KnowledgeGraph:
    """Read a ``head<TAB>relation<TAB>tail`` file into ``split``.

    Loading is incremental: when ``graph`` is given the new triples are added
    to a copy of it, reusing its identifier tables.
    """
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
            rows.append(tuple(p.strip() for p in parts))
    graph = (graph or KnowledgeGraph()).with_triples(split, rows)
    if graph.duplicates[split]:
        logger.warning("%s: %d duplicate triples dropped", path, graph.duplicates[split])
    return graph


def load_dataset(directory) -> KnowledgeGraph:
    """Load ``train``/``valid``/``test`` files (``.txt`` or ``.tsv``) from a directory."""
    directory = Path(directory)
    graph = KnowledgeGraph()
    for split in SPLITS:
        candidates = [directory / f"{split}{ext}" for ext in (".txt", ".tsv")]
        if split == "valid":
            candidates += [directory / f"validation{ext}" for ext in (".txt", ".tsv")]
        found = next((p for p in candidates if p.exists()), None)
        if found is None:
            if split == "train":
                raise FileNotFoundError(f"no train file in {directory}")
            continue
        graph = load_triples(found, split, graph)
    if graph.cross_split_duplicates:
        logger.warning("%s: %d triples occur in more than one split", directory, graph.cross_split_duplicates)
    return graph


def write_triples(graph: KnowledgeGraph, path, split: str = "train") -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for h, r, t in graph.triples(split):
            fh.write(f"{h}\t{r}\t{t}\n")


def write_stats(graph: KnowledgeGraph, path) -> None:
    Path(path).write_text(json.dumps(graph.stats(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SchemaMap:
    """Total mapping from entities to classes.

    Entities not listed resolve to ``default_class``. ``Head`` and ``Tail``
    are reserved for anchor roles and cannot be assigned.
    """

    mapping: Mapping[str, str] = field(default_factory=dict)
    default_class: str = DEFAULT_CLASS
    unknown_entities: tuple[str, ...] = ()

    def __post_init__(self):
        for cls in list(self.mapping.values()) + [self.default_class]:
            if cls in RESERVED_CLASSES:
                raise SchemaError(f"class {cls!r} is reserved")

    def class_of(self, entity: str) -> str:
        return self.mapping.get(entity, self.default_class)

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(self.mapping.values()) | {self.default_class}

    def class_ids(self, graph: KnowledgeGraph) -> tuple[str, ...]:
        """Class label per entity id of ``graph``."""
        return tuple(self.class_of(e) for e in graph.entities)


def load_schema(path=None, default_class: str = DEFAULT_CLASS, graph: KnowledgeGraph | None = None) -> SchemaMap:
    """Read an ``entity<TAB>class`` file; a missing file yields the default map."""
    if default_class in RESERVED_CLASSES:
        raise SchemaError(f"class {default_class!r} is reserved")
    if path is None or not Path(path).exists():
        return SchemaMap({}, default_class)
    mapping = {}
    unknown = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, "expected entity<TAB>class")
            entity, cls = (p.strip() for p in parts)
            if cls in RESERVED_CLASSES:
                raise SchemaError(f"{path}:{line_no}: class {cls!r} is reserved")
            if graph is not None and not graph.has_entity(entity):
                unknown.append(entity)
            mapping[entity] = cls
    if unknown:
        logger.warning("%s: %d schema entries name entities absent from the graph", path, len(unknown))
    return SchemaMap(mapping, default_class, tuple(unknown))

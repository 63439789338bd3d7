"""Embedding container and its TSV + JSON-header file format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, ParseError, UnknownIdentifierError

MODEL_KINDS = ("transe", "distmult", "conve")
FORMAT_VERSION = 1


def normalize_kind(kind: str) -> str:
    k = str(kind).lower()
    if k not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return k


def default_reshape(dimension: int) -> tuple[int, int]:
    """Reshape of the stacked ``2 x d`` input: ``n`` is the largest divisor of
    ``d`` not above ``sqrt(d)`` and ``m = 2d / n``."""
    n = max(i for i in range(1, int(math.isqrt(dimension)) + 1) if dimension % i == 0)
    return 2 * dimension // n, n


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ConvEParams:
    """Convolution filters, projection matrix and input reshape of a ConvE model.

    ``filters`` has shape ``(n_filters, rows, cols)``; ``projection`` maps the
    flattened feature maps (``n_filters * out_rows * out_cols``) to ``d``.
    """

    filters: np.ndarray
    projection: np.ndarray
    reshape: tuple[int, int]
    conv_bias: np.ndarray | None = None
    fc_bias: np.ndarray | None = None
    activation: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "filters", _readonly(self.filters))
        object.__setattr__(self, "projection", _readonly(self.projection))
        object.__setattr__(self, "reshape", tuple(int(x) for x in self.reshape))
        if self.conv_bias is not None:
            object.__setattr__(self, "conv_bias", _readonly(self.conv_bias))
        if self.fc_bias is not None:
            object.__setattr__(self, "fc_bias", _readonly(self.fc_bias))
        if self.filters.ndim != 3:
            raise ConfigError("ConvE filters must have shape (n_filters, rows, cols)")
        if self.activation not in ("none", "relu"):
            raise ConfigError(f"unknown ConvE activation {self.activation!r}")

    @property
    def feature_map_shape(self) -> tuple[int, int]:
        m, n = self.reshape
        _, fr, fc = self.filters.shape
        return m - fr + 1, n - fc + 1

    def validate(self, dimension: int) -> None:
        m, n = self.reshape
        if m * n != 2 * dimension or m % 2:
            raise ConfigError(
                f"ConvE reshape {m}x{n} must split evenly into two (d/n)x{n} blocks, d = {dimension}"
            )
        orows, ocols = self.feature_map_shape
        if orows < 1 or ocols < 1:
            raise ConfigError("ConvE filters larger than the reshaped input")
        expected = (self.filters.shape[0] * orows * ocols, dimension)
        if self.projection.shape != expected:
            raise ConfigError(f"ConvE projection has shape {self.projection.shape}, expected {expected}")
        if self.conv_bias is not None and self.conv_bias.shape != (self.filters.shape[0],):
            raise ConfigError("ConvE conv_bias must have one entry per filter")
        if self.fc_bias is not None and self.fc_bias.shape != (dimension,):
            raise ConfigError("ConvE fc_bias must have length d")


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Entity and relation vectors of a trained (or imported) model."""

    model_kind: str
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    entity_vectors: np.ndarray
    relation_vectors: np.ndarray
    conve: ConvEParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "model_kind", normalize_kind(self.model_kind))
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "relations", tuple(self.relations))
        object.__setattr__(self, "entity_vectors", _readonly(self.entity_vectors))
        object.__setattr__(self, "relation_vectors", _readonly(self.relation_vectors))
        ev, rv = self.entity_vectors, self.relation_vectors
        if ev.ndim != 2 or rv.ndim != 2 or ev.shape[1] != rv.shape[1]:
            raise DataError(f"dimension mismatch: entity {ev.shape}, relation {rv.shape}")
        if ev.shape[0] != len(self.entities) or rv.shape[0] != len(self.relations):
            raise DataError("vector count does not match label count")
        if not (np.isfinite(ev).all() and np.isfinite(rv).all()):
            raise DataError("embedding contains NaN or Inf")
        if (self.model_kind == "conve") != (self.conve is not None):
            raise ConfigError("ConvE parameters are required for, and only for, model kind conve")
        if self.conve is not None:
            self.conve.validate(self.dimension)
        object.__setattr__(self, "_ent_index", {e: i for i, e in enumerate(self.entities)})
        object.__setattr__(self, "_rel_index", {r: i for i, r in enumerate(self.relations)})

    @property
    def dimension(self) -> int:
        return self.entity_vectors.shape[1]

    def entity_row(self, label: str) -> int:
        try:
            return self._ent_index[label]
        except KeyError:
            raise UnknownIdentifierError("entity", label) from None

    def relation_row(self, label: str) -> int:
        try:
            return self._rel_index[label]
        except KeyError:
            raise UnknownIdentifierError("relation", label) from None

    def aligned_to(self, graph) -> "EmbeddingStore":
        """Store whose rows follow ``graph``'s entity and relation ids."""
        if self.entities == graph.entities and self.relations == graph.relations:
            return self
        e_rows = [self.entity_row(e) for e in graph.entities]
        r_rows = [self.relation_row(r) for r in graph.relations]
        return replace(
            self,
            entities=graph.entities,
            relations=graph.relations,
            entity_vectors=self.entity_vectors[e_rows],
            relation_vectors=self.relation_vectors[r_rows],
        )

    def equals(self, other: "EmbeddingStore") -> bool:
        """Bit-exact equality of labels, vectors and ConvE parameters."""
        if (self.model_kind, self.entities, self.relations) != (other.model_kind, other.entities, other.relations):
            return False
        if not (np.array_equal(self.entity_vectors, other.entity_vectors)
                and np.array_equal(self.relation_vectors, other.relation_vectors)):
            return False
        if self.conve is None:
            return True
        a, b = self.conve, other.conve
        same = lambda x, y: (x is None and y is None) or (x is not None and y is not None and np.array_equal(x, y))
        return (a.reshape == b.reshape and a.activation == b.activation
                and same(a.filters, b.filters) and same(a.projection, b.projection)
                and same(a.conv_bias, b.conv_bias) and same(a.fc_bias, b.fc_bias))


def _fmt(vec) -> str:
    return ",".join(repr(float(x)) for x in np.ravel(vec))


def export_embeddings(store: EmbeddingStore, path) -> None:
    """Write ``store`` as a JSON header line followed by ``id<TAB>v1,v2,...`` rows.

    Row ids are ``e:<entity>``, ``r:<relation>`` and, for ConvE, ``filter:<i>``,
    ``W:<i>``, ``conv_bias`` and ``fc_bias``. Floats use shortest round-trip
    decimal rendering, so import restores them bit-exactly.
    """
    header = {
        "format": FORMAT_VERSION,
        "model_kind": store.model_kind,
        "dimension": store.dimension,
        "n_entities": len(store.entities),
        "n_relations": len(store.relations),
    }
    if store.conve is not None:
        c = store.conve
        header["conve"] = {
            "filters_shape": list(c.filters.shape),
            "projection_shape": list(c.projection.shape),
            "reshape": list(c.reshape),
            "activation": c.activation,
            "conv_bias": c.conv_bias is not None,
            "fc_bias": c.fc_bias is not None,
        }
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for label, vec in zip(store.entities, store.entity_vectors):
            fh.write(f"e:{label}\t{_fmt(vec)}\n")
        for label, vec in zip(store.relations, store.relation_vectors):
            fh.write(f"r:{label}\t{_fmt(vec)}\n")
        if store.conve is not None:
            c = store.conve
            for i, f in enumerate(c.filters):
                fh.write(f"filter:{i}\t{_fmt(f)}\n")
            for i, row in enumerate(c.projection):
                fh.write(f"W:{i}\t{_fmt(row)}\n")
            if c.conv_bias is not None:
                fh.write(f"conv_bias\t{_fmt(c.conv_bias)}\n")
            if c.fc_bias is not None:
                fh.write(f"fc_bias\t{_fmt(c.fc_bias)}\n")


def import_embeddings(path, graph=None) -> EmbeddingStore:
    """Read a file written by :func:`export_embeddings`.

    When ``graph`` is given, every graph entity and relation must have a row;
    the returned store is aligned to the graph's ids.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ParseError(path, 1, f"invalid JSON header: {exc}") from None
        kind = normalize_kind(header.get("model_kind", ""))
        dim = int(header["dimension"])
        ents, ent_vecs, rels, rel_vecs = [], [], [], []
        filters, proj = {}, {}
        biases = {}
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            key, sep, values = line.partition("\t")
            if not sep:
                raise ParseError(path, line_no, "expected id<TAB>values")
            try:
                vec = np.array([float(v) for v in values.split(",")], dtype=np.float64)
            except ValueError:
                raise ParseError(path, line_no, "non-numeric vector entry") from None
            kind_tag, _, label = key.partition(":")
            if kind_tag in ("e", "r"):
                if len(vec) != dim:
                    raise DataError(f"{path}:{line_no}: vector of length {len(vec)}, header dimension {dim}")
                (ents if kind_tag == "e" else rels).append(label)
                (ent_vecs if kind_tag == "e" else rel_vecs).append(vec)
            elif kind_tag == "filter":
                filters[int(label)] = vec
            elif kind_tag == "W":
                proj[int(label)] = vec
            elif key in ("conv_bias", "fc_bias"):
                biases[key] = vec
            else:
                raise ParseError(path, line_no, f"unknown row id {key!r}")
    for name, have in (("n_entities", ents), ("n_relations", rels)):
        if name in header and int(header[name]) != len(have):
            raise DataError(f"{path}: header declares {header[name]} {name[2:]}, file has {len(have)}")
    conve = None
    if kind == "conve":
        meta = header.get("conve")
        if meta is None:
            raise DataError(f"{path}: ConvE file without conve header block")
        fshape = tuple(meta["filters_shape"])
        pshape = tuple(meta["projection_shape"])
        try:
            f_arr = np.stack([filters[i] for i in range(fshape[0])]).reshape(fshape)
            p_arr = np.stack([proj[i] for i in range(pshape[0])]).reshape(pshape)
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: incomplete ConvE parameters ({exc})") from None
        conve = ConvEParams(
            filters=f_arr,
            projection=p_arr,
            reshape=tuple(meta.get("reshape") or default_reshape(dim)),
            conv_bias=biases.get("conv_bias"),
            fc_bias=biases.get("fc_bias"),
            activation=meta.get("activation", "none"),
        )
    store = EmbeddingStore(
        kind,
        ents,
        rels,
        np.array(ent_vecs).reshape(len(ents), dim),
        np.array(rel_vecs).reshape(len(rels), dim),
        conve,
    )
    if graph is not None:
        store = store.aligned_to(graph)
    return store

"""Interaction functions and triple embeddings for TransE, DistMult and ConvE.

Label-level functions (``score``, ``conve_combine``, ``triple_embedding``)
take :class:`~kgexplain.graph.Triple`-like tuples; the ``*_ids`` variants work
on integer row indices of an :class:`EmbeddingStore` and are vectorised.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError
from .store import EmbeddingStore


def _rows(store: EmbeddingStore, triple):
    h, r, t = triple
    return store.entity_row(h), store.relation_row(r), store.entity_row(t)


def conve_combine_ids(store: EmbeddingStore, heads, relations) -> np.ndarray:
    """``v^{head,r}`` for arrays of head and relation rows, shape ``(b, d)``."""
    if store.conve is None:
        raise ConfigError("conve_combine requires a ConvE store")
    params = store.conve
    heads = np.atleast_1d(np.asarray(heads))
    relations = np.atleast_1d(np.asarray(relations))
    heads, relations = np.broadcast_arrays(heads, relations)
    d = store.dimension
    m, n = params.reshape
    h = store.entity_vectors[heads].reshape(-1, m // 2, n)
    r = store.relation_vectors[relations].reshape(-1, m // 2, n)
    stacked = np.concatenate([h, r], axis=1)  # (b, m, n)
    _, fr, fc = params.filters.shape
    windows = sliding_window_view(stacked, (fr, fc), axis=(1, 2))  # (b, orow, ocol, fr, fc)
    maps = np.einsum("bijxy,kxy->bkij", windows, params.filters)
    if params.conv_bias is not None:
        maps = maps + params.conv_bias[None, :, None, None]
    if params.activation == "relu":
        maps = np.maximum(maps, 0.0)
    features = maps.reshape(maps.shape[0], -1)
    out = features @ params.projection
    if params.fc_bias is not None:
        out = out + params.fc_bias
    if params.activation == "relu":
        out = np.maximum(out, 0.0)
    assert out.shape[1] == d
    return out


def conve_combine(store: EmbeddingStore, head: str, relation: str) -> np.ndarray:
    return conve_combine_ids(store, store.entity_row(head), store.relation_row(relation))[0]


def score_ids(store: EmbeddingStore, heads, relations, tails) -> np.ndarray:
    heads, relations, tails = np.broadcast_arrays(
        np.atleast_1d(heads), np.atleast_1d(relations), np.atleast_1d(tails)
    )
    kind = store.model_kind
    E, R = store.entity_vectors, store.relation_vectors
    if kind == "transe":
        return -np.linalg.norm(E[heads] + R[relations] - E[tails], axis=-1)
    if kind == "distmult":
        return np.einsum("bi,bi,bi->b", E[heads], R[relations], E[tails])
    hr = conve_combine_ids(store, heads, relations)
    return np.einsum("bi,bi->b", hr, E[tails])


def score(store: EmbeddingStore, triple) -> float:
    """Plausibility score; higher means more plausible."""
    h, r, t = _rows(store, triple)
    return float(score_ids(store, h, r, t)[0])


def score_tails(store: EmbeddingStore, head: int, relation: int) -> np.ndarray:
    """Scores of ``(head, relation, e)`` for every entity row ``e``."""
    E, R = store.entity_vectors, store.relation_vectors
    kind = store.model_kind
    if kind == "transe":
        return -np.linalg.norm(E[head] + R[relation] - E, axis=1)
    if kind == "distmult":
        return E @ (E[head] * R[relation])
    return E @ conve_combine_ids(store, head, relation)[0]


def score_heads(store: EmbeddingStore, relation: int, tail: int) -> np.ndarray:
    """Scores of ``(e, relation, tail)`` for every entity row ``e``."""
    E, R = store.entity_vectors, store.relation_vectors
    kind = store.model_kind
    if kind == "transe":
        return -np.linalg.norm(E + R[relation] - E[tail], axis=1)
    if kind == "distmult":
        return E @ (R[relation] * E[tail])
    hr = conve_combine_ids(store, np.arange(len(E)), relation)
    return hr @ E[tail]


def triple_embeddings_ids(store: EmbeddingStore, triples) -> np.ndarray:
    """Triple embeddings for an ``(m, 3)`` array of store rows.

    ``[v_head; v_r; v_tail]`` for TransE/DistMult, ``[v^{head,r}; v_tail]``
    for ConvE.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    E, R = store.entity_vectors, store.relation_vectors
    if store.model_kind == "conve":
        hr = conve_combine_ids(store, triples[:, 0], triples[:, 1]) if len(triples) else np.empty((0, store.dimension))
        return np.hstack([hr, E[triples[:, 2]]])
    return np.hstack([E[triples[:, 0]], R[triples[:, 1]], E[triples[:, 2]]])


def triple_embedding(store: EmbeddingStore, triple) -> np.ndarray:
    return triple_embeddings_ids(store, [_rows(store, triple)])[0]

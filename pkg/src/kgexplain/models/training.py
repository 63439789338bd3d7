"""Mini-batch training of TransE and DistMult with sampled negatives.

All per-triple randomness (epoch order, negative corruptions) is drawn from a
counter-based hash of ``(seed, epoch, triple)`` rather than from a sequential
generator. Removing a few triples from the training set therefore leaves the
random stream of every remaining triple untouched, so a model retrained on an
ablated graph with the same seed differs from the full-data model only
through the ablation itself.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, UnsupportedModelError
from .store import EmbeddingStore, normalize_kind

logger = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

STREAM_ORDER = 1
STREAM_NEGATIVE = 2


@dataclass(frozen=True)
class TrainConfig:
    dimension: int = 64
    epochs: int = 100
    learning_rate: float = 0.01
    margin: float = 1.0
    negatives: int = 16
    batch_size: int = 256
    seed: int = 0
    regularization: float = 0.0
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("dimension", "epochs", "negatives", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        # lr = 0 is allowed: it is the documented way to get an untrained store
        if self.learning_rate < 0 or self.regularization < 0 or self.seed < 0:
            raise ConfigError("learning_rate, regularization and seed must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        return asdict(self)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def keyed_hash(seed: int, *parts) -> np.ndarray:
    """Deterministic 64-bit hash of ``seed`` and broadcastable integer parts."""
    with np.errstate(over="ignore"):
        out = _splitmix64(np.asarray([seed], dtype=np.uint64))
        for part in parts:
            part = np.asarray(part).astype(np.uint64)
            out = _splitmix64(out ^ _splitmix64(part))
    return out if out.ndim > 1 or out.size > 1 else out.reshape(np.shape(out))


class KnownTriples:
    """Membership test for triple codes (dense table when small enough)."""

    def __init__(self, codes, n_entities, n_relations, dense_limit=50_000_000):
        size = n_entities * n_entities * n_relations
        self.table = None
        self.sorted = np.unique(codes)
        if size <= dense_limit:
            self.table = np.zeros(size, dtype=bool)
            self.table[self.sorted] = True

    def __contains__(self, code):
        return bool(self.contains(np.asarray([code]))[0])

    def contains(self, codes):
        if self.table is not None:
            return self.table[codes]
        if len(self.sorted) == 0:
            return np.zeros(np.shape(codes), dtype=bool)
        pos = np.minimum(np.searchsorted(self.sorted, codes), len(self.sorted) - 1)
        return self.sorted[pos] == codes


def scatter_add(out, index, values):
    """``out[index[i]] += values[i]`` for row vectors; faster than ``np.add.at``."""
    n, d = out.shape
    flat = (np.asarray(index)[:, None] * d + np.arange(d)).ravel()
    out += np.bincount(flat, weights=np.asarray(values).ravel(), minlength=n * d).reshape(n, d)


def triple_codes(triples: np.ndarray, n_entities: int, n_relations: int) -> np.ndarray:
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (t[:, 0] * n_relations + t[:, 1]) * n_entities + t[:, 2]


def sample_corruptions(triples, codes, known, n_entities, n_relations, k, seed, epoch, max_attempts=10):
    """Sample ``k`` corruptions per triple.

    Returns ``(corrupt_tail, entity)``, both ``(m, k)``: which slot is replaced
    (head or tail with equal probability) and by which entity. A corruption
    that is a known true triple is re-drawn up to ``max_attempts`` times.
    """
    m = len(triples)
    j = np.arange(k, dtype=np.int64)[None, :]
    tail_side = np.zeros((m, k), dtype=bool)
    ents = np.zeros((m, k), dtype=np.int64)
    pending = np.ones((m, k), dtype=bool)
    for attempt in range(max_attempts):
        if m == 0 or not pending.any():
            break
        h = keyed_hash(seed, STREAM_NEGATIVE, epoch, codes[:, None], j, attempt)
        tail_side = np.where(pending, (h >> np.uint64(63)) == 1, tail_side)
        ents = np.where(pending, ((h & np.uint64(0xFFFFFFFF)) % np.uint64(n_entities)).astype(np.int64), ents)
        heads = np.where(tail_side, triples[:, :1], ents)
        tails = np.where(tail_side, ents, triples[:, 2:])
        ccodes = (heads * n_relations + triples[:, 1:2]) * n_entities + tails
        pending = known.contains(ccodes)
    return tail_side, ents


def _sample_index(tail_side, ents, n_entities):
    """Flat ``row * n_entities + entity`` indices of tail and head corruptions."""
    b = len(ents)
    flat = np.arange(b)[:, None] * n_entities + ents
    return flat[tail_side], flat[~tail_side]


def _dense(flat, values, b, n_entities):
    return np.bincount(flat, weights=values, minlength=b * n_entities).reshape(b, n_entities)


def corruption_weights(tail_side, ents, n_entities):
    """Per-row counts of sampled tail and head replacements, each ``(b, n_entities)``."""
    ft, fh = _sample_index(tail_side, ents, n_entities)
    b = len(ents)
    return _dense(ft, None, b, n_entities), _dense(fh, None, b, n_entities)


def corrupted_triples(pos, tail_side, ents):
    """Explicit ``(b, k, 3)`` corrupted triples (reference form for tests)."""
    neg = np.repeat(pos[:, None, :], ents.shape[1], axis=1)
    neg[..., 0] = np.where(tail_side, pos[:, None, 0], ents)
    neg[..., 2] = np.where(tail_side, ents, pos[:, None, 2])
    return neg


# --- losses -----------------------------------------------------------------
# Both losses score every entity as a replacement and weight the sampled
# corruptions by their multiplicity, which equals the per-negative sum while
# turning the gathers into two dense matrix products.

def _pairwise_dist(Q, E):
    sq = (Q * Q).sum(1)[:, None] - 2.0 * Q @ E.T + (E * E).sum(1)[None, :]
    return np.sqrt(np.maximum(sq, 1e-18))


def transe_loss_and_grad(E, R, pos, tail_side, ents, margin):
    """Margin ranking loss ``mean(relu(margin + d(pos) - d(neg)))`` with
    ``d = ||h + r - t||_2``; returns ``(loss, dE, dR)``."""
    b, k = ents.shape
    n_e = len(E)
    w_tail, w_head = corruption_weights(tail_side, ents, n_e)
    h, r, t = E[pos[:, 0]], R[pos[:, 1]], E[pos[:, 2]]
    diff = h + r - t
    d_p = np.linalg.norm(diff, axis=1)
    q_tail = h + r  # tail corruption: ||q_tail - e||
    q_head = t - r  # head corruption: ||e - q_head||
    d_tail = _pairwise_dist(q_tail, E)
    d_head = _pairwise_dist(q_head, E)
    v_tail = margin + d_p[:, None] - d_tail
    v_head = margin + d_p[:, None] - d_head
    a_tail = w_tail * (v_tail > 0) / (b * k)
    a_head = w_head * (v_head > 0) / (b * k)
    loss = float((a_tail * v_tail).sum() + (a_head * v_head).sum())
    dE = np.zeros_like(E)
    dR = np.zeros_like(R)
    # positive term: + coef * d_p
    coef = a_tail.sum(1) + a_head.sum(1)
    u = np.where(d_p[:, None] > 0, diff / np.where(d_p > 0, d_p, 1.0)[:, None], 0.0)
    g = coef[:, None] * u
    scatter_add(dE, pos[:, 0], g)
    scatter_add(dR, pos[:, 1], g)
    scatter_add(dE, pos[:, 2], -g)
    # negative terms: - a * ||q - e||
    for a, d, q, sign in ((a_tail, d_tail, q_tail, 1.0), (a_head, d_head, q_head, -1.0)):
        c = a / d
        dq = -(q * c.sum(1)[:, None] - c @ E)  # d/dq of -sum_e a ||q - e||
        dE += -(E * c.sum(0)[:, None] - c.T @ q)
        if sign > 0:  # q = h + r
            scatter_add(dE, pos[:, 0], dq)
            scatter_add(dR, pos[:, 1], dq)
        else:  # q = t - r
            scatter_add(dE, pos[:, 2], dq)
            scatter_add(dR, pos[:, 1], -dq)
    return loss, dE, dR


def distmult_loss_and_grad(E, R, pos, tail_side, ents, regularization=0.0):
    """Binary cross-entropy on positives and sampled negatives plus L2 on the
    embeddings of positive triples; returns ``(loss, dE, dR)``."""
    b, k = ents.shape
    n_e = len(E)
    ft, fh = _sample_index(tail_side, ents, n_e)
    h, r, t = E[pos[:, 0]], R[pos[:, 1]], E[pos[:, 2]]
    hr, rt = h * r, r * t
    s_p = (hr * t).sum(1)
    # scores of every replacement, nonlinearity only at the sampled ones
    s_t = (hr @ E.T).ravel()[ft]
    s_h = (rt @ E.T).ravel()[fh]
    reg = regularization / b
    loss = np.logaddexp(0.0, -s_p).sum() / b
    loss += (np.logaddexp(0.0, s_t).sum() + np.logaddexp(0.0, s_h).sum()) / (b * k)
    loss += reg * float((h * h).sum() + (r * r).sum() + (t * t).sum())
    gs_p = (-0.5 * (1.0 - np.tanh(0.5 * s_p)) / b)[:, None]  # -sigmoid(-s) / b
    g_tail = _dense(ft, 0.5 * (1.0 + np.tanh(0.5 * s_t)) / (b * k), b, n_e)
    g_head = _dense(fh, 0.5 * (1.0 + np.tanh(0.5 * s_h)) / (b * k), b, n_e)
    # s = <h * r, t>: route the positive term through hr, head negatives through rt
    d_hr = gs_p * t + g_tail @ E
    d_rt = g_head @ E
    dE = g_tail.T @ hr + g_head.T @ rt
    dR = np.zeros_like(R)
    scatter_add(dE, pos[:, 0], d_hr * r + 2 * reg * h)
    scatter_add(dE, pos[:, 2], (d_rt + gs_p * h) * r + 2 * reg * t)
    scatter_add(dR, pos[:, 1], d_hr * h + d_rt * t + 2 * reg * r)
    return float(loss), dE, dR


class _Adam:
    def __init__(self, shapes, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def _normalize_rows(a):
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    np.divide(a, norms, out=a, where=norms > 0)


def init_embeddings(kind, n_entities, n_relations, dimension, seed):
    rng = np.random.default_rng([seed, 0x5EED])
    if kind == "transe":
        bound = 6.0 / np.sqrt(dimension)
        E = rng.uniform(-bound, bound, (n_entities, dimension))
        R = rng.uniform(-bound, bound, (n_relations, dimension))
        _normalize_rows(R)
        _normalize_rows(E)
    else:
        scale = 1.0 / np.sqrt(dimension)
        E = rng.normal(0.0, scale, (n_entities, dimension))
        R = rng.normal(0.0, scale, (n_relations, dimension))
    return E, R


def train_with_history(graph, model_kind: str, config: TrainConfig):
    """Train on ``graph``'s train split; returns ``(store, epoch_losses)``."""
    kind = normalize_kind(model_kind)
    if kind == "conve":
        raise UnsupportedModelError(
            "ConvE training is not supported; train externally and load with import_embeddings"
        )
    triples = np.asarray(graph.split("train"), dtype=np.int64)
    if len(triples) == 0:
        raise ConfigError("train split is empty")
    n_e, n_r = graph.n_entities, graph.n_relations
    E, R = init_embeddings(kind, n_e, n_r, config.dimension, config.seed)
    codes = triple_codes(triples, n_e, n_r)
    known = KnownTriples(codes, n_e, n_r)
    if config.optimizer == "adam":
        opt = _Adam([E.shape, R.shape], config.learning_rate)
    else:
        opt = _SGD(config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        order = np.argsort(keyed_hash(config.seed, STREAM_ORDER, epoch, codes), kind="stable")
        side_all, ent_all = sample_corruptions(
            triples[order], codes[order], known, n_e, n_r, config.negatives, config.seed, epoch
        )
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            pos = triples[order[start:start + config.batch_size]]
            sl = slice(start, start + config.batch_size)
            if kind == "transe":
                if config.learning_rate > 0:
                    _normalize_rows(E)
                loss, dE, dR = transe_loss_and_grad(E, R, pos, side_all[sl], ent_all[sl], config.margin)
            else:
                loss, dE, dR = distmult_loss_and_grad(E, R, pos, side_all[sl], ent_all[sl], config.regularization)
            opt.step([E, R], [dE, dR])
            total += loss * len(pos)
        history.append(total / len(triples))
        if not (np.isfinite(E).all() and np.isfinite(R).all()):
            raise FloatingPointError(f"non-finite embeddings after epoch {epoch}")
    if kind == "transe" and config.learning_rate > 0:
        _normalize_rows(E)
    logger.debug("trained %s: first loss %.4f, last loss %.4f", kind, history[0], history[-1])
    store = EmbeddingStore(kind, graph.entities, graph.relations, E, R)
    return store, history


def train(graph, model_kind: str, config: TrainConfig) -> EmbeddingStore:
    return train_with_history(graph, model_kind, config)[0]


# Desk-scale settings calibrated on Kinship (about 10 s per train on one core).
DESK_CONFIGS = {
    "distmult": dict(dimension=64, epochs=50, learning_rate=0.05, negatives=32, batch_size=512, regularization=0.003),
    "transe": dict(dimension=128, epochs=50, learning_rate=0.003, negatives=32, batch_size=512, margin=1.0),
}


def desk_config(model_kind: str, **overrides) -> TrainConfig:
    """:class:`TrainConfig` with the desk preset of ``model_kind`` and ``overrides``."""
    kw = dict(DESK_CONFIGS.get(normalize_kind(model_kind), {}))
    kw.update(overrides)
    return TrainConfig(**kw)

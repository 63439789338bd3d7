"""Tabular view of a clause table: frequencies, labels and kernel weights."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DegenerateLabelsError


# relevance at or below this counts as zero (round-off of exact cancellations)
POSITIVE_EPS = 1e-12


def kernel_weight(v_p, v_i, sigma: float) -> np.ndarray | float:
    """``exp(-||v_p - v_i||^2 / sigma^2)``; ``v_i`` may hold one vector per row."""
    if not sigma > 0:
        raise ConfigError(f"kernel width must be positive, got {sigma}")
    v_i = np.asarray(v_i, dtype=np.float64)
    d2 = ((v_i - np.asarray(v_p, dtype=np.float64)) ** 2).sum(axis=-1)
    out = np.exp(-d2 / sigma ** 2)
    return float(out) if np.ndim(out) == 0 else out


def median_sigma(vectors) -> float:
    """Median pairwise distance among the distinct rows of ``vectors`` (1.0 if undefined)."""
    v = np.unique(np.asarray(vectors, dtype=np.float64), axis=0)
    if len(v) < 2:
        return 1.0
    sq = (v * v).sum(1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * v @ v.T
    iu = np.triu_indices(len(v), k=1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    return med if med > 0 else 1.0


def gamma_from(X, y) -> np.ndarray:
    """Frequency co-factor per column: +1 when the positive rows' summed
    frequency is at least the negative rows', else -1."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    pos = X[y > 0].sum(0)
    neg = X[y < 0].sum(0)
    return np.where(pos >= neg, 1.0, -1.0)


def gamma(clause_key: str, table) -> int:
    pos = sum(r.frequencies.get(clause_key, 0.0) for r in table.rows if r.label > 0)
    neg = sum(r.frequencies.get(clause_key, 0.0) for r in table.rows if r.label < 0)
    return 1 if pos >= neg else -1


@dataclass
class DesignMatrix:
    """Rows are entity pairs, columns clause keys (sorted), values frequencies."""

    X: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    features: list[str]
    sigma: float = 1.0
    labels: dict = field(default_factory=dict)  # clause key -> display string

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def check_labels(self) -> None:
        if not ((self.y > 0).any() and (self.y < 0).any()):
            raise DegenerateLabelsError("surrogate needs both positive and negative rows")

    def gammas(self) -> np.ndarray:
        return gamma_from(self.X, self.y)


def design_matrix(table, row_embeddings, query, sigma: float | None = None) -> DesignMatrix:
    """Build the matrix of ``table`` with ``alpha_i = kernel_weight(query, row_embeddings[i], sigma)``.

    ``sigma`` defaults to :func:`median_sigma` over the row embeddings.
    """
    features = table.vocabulary
    col = {k: j for j, k in enumerate(features)}
    X = np.zeros((len(table.rows), len(features)))
    for i, row in enumerate(table.rows):
        for k, f in row.frequencies.items():
            X[i, col[k]] = f
    y = np.array([row.label for row in table.rows], dtype=np.float64)
    emb = np.asarray(row_embeddings, dtype=np.float64).reshape(len(table.rows), -1)
    if sigma is None:
        sigma = median_sigma(emb)
    alpha = kernel_weight(query, emb, sigma) if len(emb) else np.zeros(0)
    alpha = np.atleast_1d(alpha)
    for row, a in zip(table.rows, alpha):
        row.weight = float(a)
    return DesignMatrix(X, y, alpha, features, float(sigma), {k: str(table.clauses[k]) for k in features})


@dataclass
class SurrogateReport:
    """Relevance per clause and the descending ranking (ties by clause key)."""

    method: str
    features: list[str]
    scores: np.ndarray
    gammas: np.ndarray
    labels: dict = field(default_factory=dict)
    converged: bool = True
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.gammas = np.asarray(self.gammas, dtype=np.float64)
        # features are sorted keys, so the column index is the key order
        self.order = np.lexsort((np.arange(len(self.features)), -self.scores)) if len(self.features) else np.zeros(0, int)

    @property
    def ranking(self) -> list[tuple[str, float]]:
        return [(self.features[j], float(self.scores[j])) for j in self.order]

    def score_of(self, key: str) -> float:
        return float(self.scores[self.features.index(key)])

    def top(self, n: int, positive_only: bool = True) -> list[tuple[str, float]]:
        out = []
        for key, s in self.ranking:
            if len(out) >= n:
                break
            if positive_only and not s > POSITIVE_EPS:
                break
            out.append((key, s))
        return out

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "info": self.info,
            "clauses": [
                {
                    "rank": r + 1,
                    "key": self.features[j],
                    "clause": self.labels.get(self.features[j], self.features[j]),
                    "score": float(self.scores[j]),
                    "gamma": int(self.gammas[j]),
                }
                for r, j in enumerate(self.order)
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

"""Surrogate models ranking clauses by relevance to a prediction."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .design import (
    DesignMatrix,
    SurrogateReport,
    design_matrix,
    gamma,
    gamma_from,
    kernel_weight,
    median_sigma,
)
from .forest import fit_mdi
from .linear import fit_hsic_lasso, fit_klasso, klasso_weights, nonneg_lasso_cd

METHODS = ("mdi", "klasso", "hsic")


def row_embeddings(table, pairs, negative_embeddings: str = "inherit", index=None) -> np.ndarray:
    """Embedding per table row.

    Positives use their source triple. Negatives inherit their source
    positive's embedding, or with ``negative_embeddings="model"`` embed the
    corrupted triple through the model behind ``index``.
    """
    out = []
    for row in table.rows:
        if row.label > 0 or negative_embeddings == "inherit":
            out.append(pairs.positives[row.source].embedding)
        elif negative_embeddings == "model":
            if index is None:
                raise ConfigError("negative_embeddings='model' needs a TrainIndex")
            out.append(index.embed((row.pair[0], pairs.relation, row.pair[1])))
        else:
            raise ConfigError(f"unknown negative embedding mode {negative_embeddings!r}")
    return np.array(out)


def rank_clauses(table, pairs, method: str = "hsic", params: dict | None = None, sigma: float | None = None,
                 negative_embeddings: str = "inherit", index=None) -> SurrogateReport:
    """Assemble the design matrix of ``table`` and fit surrogate ``method``.

    ``params`` is passed to the fit: ``n_trees``, ``max_features``,
    ``bootstrap``, ``seed`` (mdi); ``beta`` (klasso); ``lam`` (hsic).
    """
    method = method.lower()
    if method not in METHODS:
        raise ConfigError(f"unknown surrogate {method!r}; expected one of {METHODS}")
    emb = row_embeddings(table, pairs, negative_embeddings, index)
    matrix = design_matrix(table, emb, pairs.query, sigma)
    params = dict(params or {})
    if method == "mdi":
        report = fit_mdi(matrix, **params)
    elif method == "klasso":
        report = fit_klasso(matrix, **params)
    else:
        report = fit_hsic_lasso(matrix, **params)
    report.info["sigma"] = matrix.sigma
    return report


__all__ = [
    "METHODS",
    "DesignMatrix",
    "SurrogateReport",
    "design_matrix",
    "fit_hsic_lasso",
    "fit_klasso",
    "fit_mdi",
    "gamma",
    "gamma_from",
    "kernel_weight",
    "klasso_weights",
    "median_sigma",
    "nonneg_lasso_cd",
    "rank_clauses",
    "row_embeddings",
]

"""Kernel-weighted ridge (K-Lasso) and nonnegative HSIC-Lasso surrogates."""
from __future__ import annotations

import logging
import warnings

import numpy as np

from ..errors import ConfigError, SingularSystemError
from .design import DesignMatrix, SurrogateReport

logger = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


# --- K-Lasso ----------------------------------------------------------------

def klasso_weights(X, y, alpha, beta: float) -> np.ndarray:
    """Minimiser of ``sum_i alpha_i (y_i - x_i.w)^2 + beta ||w||^2``.

    Solved through the normal equations, or through their dual form
    ``w = C^T (C C^T + beta I)^{-1} z`` on the ``sqrt(alpha)``-scaled rows when
    there are more columns than rows.
    """
    if beta < 0:
        raise ConfigError("ridge strength beta must be >= 0")
    X = np.asarray(X, dtype=np.float64)
    s = np.sqrt(np.asarray(alpha, dtype=np.float64))
    C = X * s[:, None]
    z = np.asarray(y, dtype=np.float64) * s
    n, F = C.shape
    if F == 0:
        return np.zeros(0)
    if beta == 0:
        if np.linalg.matrix_rank(C) < F:
            raise SingularSystemError("weighted design is rank deficient; use a ridge strength beta > 0")
        return np.linalg.solve(C.T @ C, C.T @ z)
    if F <= n:
        return np.linalg.solve(C.T @ C + beta * np.eye(F), C.T @ z)
    return C.T @ np.linalg.solve(C @ C.T + beta * np.eye(n), z)


def fit_klasso(matrix: DesignMatrix, beta: float = 1.0) -> SurrogateReport:
    """Signed ridge weight per clause; no frequency co-factor is applied."""
    matrix.check_labels()
    w = klasso_weights(matrix.X, matrix.y, matrix.alpha, beta)
    g = matrix.gammas()
    abs_rank = [matrix.features[j] for j in np.lexsort((np.arange(len(w)), -np.abs(w)))]
    return SurrogateReport("klasso", matrix.features, w, g, matrix.labels,
                           info={"beta": beta, "abs_ranking": abs_rank})


# --- HSIC-Lasso ---------------------------------------------------------------

def median_bandwidths(X, chunk_elems: int = 4_000_000) -> np.ndarray:
    """Median of the nonzero pairwise distances within each column (0 if none)."""
    X = np.asarray(X, dtype=np.float64)
    n, F = X.shape
    iu, ju = np.triu_indices(n, k=1)
    out = np.zeros(F)
    if len(iu) == 0:
        return out
    step = max(1, chunk_elems // len(iu))
    for f0 in range(0, F, step):
        D = np.sort(np.abs(X[iu, f0:f0 + step] - X[ju, f0:f0 + step]), axis=0)
        nz = (D > 0).sum(axis=0)
        first = len(iu) - nz
        cols = np.flatnonzero(nz)
        lo = first[cols] + (nz[cols] - 1) // 2
        hi = first[cols] + nz[cols] // 2
        out[f0 + cols] = 0.5 * (D[lo, cols] + D[hi, cols])
    return out


def label_gram(y) -> np.ndarray:
    """Normalised delta kernel ``1/n_c`` for rows sharing class ``c``, else 0."""
    y = np.asarray(y)
    L = np.zeros((len(y), len(y)))
    for c in np.unique(y):
        m = y == c
        L[np.ix_(m, m)] = 1.0 / m.sum()
    return L


def _center(K):
    return K - K.mean(-2, keepdims=True) - K.mean(-1, keepdims=True) + K.mean((-2, -1), keepdims=True)


def hsic_design(X, y, chunk_elems: int = 4_000_000):
    """Vectorised centered, unit-Frobenius Gram matrices.

    Returns ``(Phi, l, active)``: column ``k`` of ``Phi`` holds the upper
    triangle of feature ``k``'s centered Gram (off-diagonal entries scaled by
    sqrt 2, so dot products equal Frobenius products), ``l`` the same for the
    label Gram, and ``active`` the boolean mask of features with a nonzero
    Gram (constant columns drop out). Feature kernels are Gaussian with the
    median-heuristic bandwidth; the label kernel is the normalised delta.
    """
    X = np.asarray(X, dtype=np.float64)
    n, F = X.shape
    bw = median_bandwidths(X, chunk_elems)
    iu, ju = np.triu_indices(n)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    L = _center(label_gram(y))[iu, ju] * scale
    L /= np.linalg.norm(L) or 1.0
    cand = np.flatnonzero(bw > 0)
    Phi = np.empty((len(iu), len(cand)))
    step = max(1, chunk_elems // max(1, n * n))
    for c0 in range(0, len(cand), step):
        cols = cand[c0:c0 + step]
        # kernel values need no more than single precision; the solver runs in double
        x = X[:, cols].T.astype(np.float32)  # (c, n)
        inv = (1.0 / (2.0 * bw[cols] ** 2)).astype(np.float32)
        K = np.exp(-np.square(x[:, :, None] - x[:, None, :]) * inv[:, None, None])
        Phi[:, c0:c0 + len(cols)] = (_center(K)[:, iu, ju] * scale.astype(np.float32)).T
    norms = np.linalg.norm(Phi, axis=0)
    keep = norms > 1e-12
    Phi = Phi[:, keep] / norms[keep]
    active = np.zeros(F, dtype=bool)
    active[cand[keep]] = True
    return Phi, L, active


def nonneg_lasso_cd(Phi, target, lam: float, tol: float = 1e-8, max_sweeps: int = 10_000,
                    kkt_slack: float = 1e-12, ftol: float = 1e-12):
    """Nonnegative lasso ``min 0.5 ||target - Phi w||^2 + lam * sum(w)``, ``w >= 0``.

    Cyclic coordinate descent with soft-thresholding, run over a working set
    of the nonzero coordinates plus those a full sweep would move away from
    zero (``Phi_k . r > lam + kkt_slack``); one matrix-vector product
    replaces such a sweep. The slack keeps round-off on duplicate columns
    from re-admitting them forever. A working-set pass ends when a sweep
    changes no coordinate by ``tol`` or lowers the objective by less than
    ``ftol`` relative (nearly collinear Grams leave a flat valley along which
    coordinates drift without gain); the fit has converged when no
    coordinate outside the working set would then move. Returns ``(w,
    converged, objective after every sweep)``; the objective never increases.
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    F = Phi.shape[1]
    w = np.zeros(F)
    r = np.array(target, dtype=np.float64)
    sq = (Phi * Phi).sum(axis=0)

    def objective():
        return 0.5 * float(r @ r) + lam * float(w.sum())

    history = [objective()]
    work: list[int] = []
    sweeps = 0
    while sweeps < max_sweeps:
        grad = Phi.T @ r
        viol = np.flatnonzero((w == 0) & (grad > lam + kkt_slack) & (sq > 0))
        if len(viol) == 0:
            return w, True, history
        work = sorted(set(np.flatnonzero(w > 0).tolist()) | set(viol.tolist()))
        cols = Phi[:, work]
        while sweeps < max_sweeps:
            delta = 0.0
            for j, k in enumerate(work):
                old = w[k]
                new = max(0.0, old + (cols[:, j] @ r - lam) / sq[k])
                if new != old:
                    r -= (new - old) * cols[:, j]
                    w[k] = new
                    delta = max(delta, abs(new - old))
            sweeps += 1
            obj = objective()
            if obj > history[-1] + 1e-10 * max(1.0, abs(history[-1])):
                raise AssertionError(f"nonnegative lasso objective increased: {history[-1]} -> {obj}")
            flat = history[-1] - obj <= ftol * max(1.0, abs(obj))
            history.append(obj)
            if delta < tol or flat:
                break
            # coordinates back at zero leave; the gradient check re-admits them
            keep = [j for j, k in enumerate(work) if w[k] > 0]
            if len(keep) < len(work):
                work = [work[j] for j in keep]
                cols = cols[:, keep]
    return w, False, history


def fit_hsic_lasso(matrix: DesignMatrix, lam: float = 1e-3, tol: float = 1e-8,
                   max_sweeps: int = 10_000) -> SurrogateReport:
    """Relevance ``gamma_c * w_c`` with ``w`` the nonnegative HSIC-Lasso weights."""
    if not lam > 0:
        raise ConfigError("HSIC-Lasso sparsity strength must be > 0")
    matrix.check_labels()
    Phi, target, active = hsic_design(matrix.X, matrix.y)
    wa, converged, history = nonneg_lasso_cd(Phi, target, lam, tol, max_sweeps)
    if not converged:
        warnings.warn(f"HSIC-Lasso stopped after {max_sweeps} sweeps without converging", ConvergenceWarning)
    w = np.zeros(len(matrix.features))
    w[active] = wa
    g = matrix.gammas()
    return SurrogateReport("hsic", matrix.features, g * w, g, matrix.labels, converged=converged,
                           info={"lambda": lam, "sweeps": len(history) - 1, "objective": history[-1],
                                 "weights": w.tolist()})

"""Mean decrease in impurity from a forest of weighted Gini trees.

Class proportions at a node use the summed instance weights, so a row with
kernel weight 0.2 counts a fifth of a row at the query itself. The node
share ``N_d / N`` is likewise a share of weight mass.
"""
from __future__ import annotations

import numpy as np

from .design import DesignMatrix, SurrogateReport


def gini(w_pos: float, w_neg: float) -> float:
    total = w_pos + w_neg
    if total <= 0:
        return 0.0
    p = w_pos / total
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def best_split(X, pos, w, features):
    """Best threshold split of the node rows over ``features``.

    ``X`` is ``(n, F)``, ``pos`` a boolean label vector and ``w`` the row
    weights. Returns ``(gain, feature, threshold)`` with the largest strictly
    positive impurity decrease, or ``None``. Ties go to the earlier feature in
    ``features`` and then the lower threshold.
    """
    features = np.asarray(features)
    if len(features) == 0:
        return None
    W = w.sum()
    wp = (w * pos).sum()
    parent = gini(wp, W - wp)
    V = X[:, features]
    order = np.argsort(V, axis=0, kind="stable")
    vs = np.take_along_axis(V, order, axis=0)
    ws = w[order]
    ps = ws * pos[order]
    left_w = np.cumsum(ws, axis=0)[:-1]
    left_p = np.cumsum(ps, axis=0)[:-1]
    right_w = W - left_w
    right_p = wp - left_p
    valid = (vs[1:] > vs[:-1]) & (left_w > 0) & (right_w > 0)
    if not valid.any():
        return None
    with np.errstate(invalid="ignore", divide="ignore"):
        ql = left_p / left_w
        qr = right_p / right_w
        child = (left_w * 2 * ql * (1 - ql) + right_w * 2 * qr * (1 - qr)) / W
    gain = np.where(valid, parent - child, -np.inf)
    # first maximum in feature order, then position; gains equal up to
    # round-off (same row partition, different summation order) count as ties
    flat_gain = gain.T.ravel()
    top = flat_gain.max()
    flat = np.flatnonzero(flat_gain >= top - 1e-12 * max(1.0, abs(top)))[0]
    j, i = divmod(flat, gain.shape[0])
    g = gain[i, j]
    if not g > 1e-15:
        return None
    return float(g), int(features[j]), float(0.5 * (vs[i, j] + vs[i + 1, j]))


def grow_tree(X, pos, w, rng, max_features, max_depth=None, min_weight=0.0):
    """Grow one tree and return ``(importance per feature, node list)``.

    A node tries ``max_features`` random features first; if none of them
    yields a positive gain the remaining features are searched too, so a
    split is only missed when no feature separates the node.
    """
    n, F = X.shape
    importance = np.zeros(F)
    W_root = w.sum()
    nodes = []
    stack = [(np.flatnonzero(w > 0), 0)]
    while stack:
        idx, depth = stack.pop()
        wn, pn = w[idx], pos[idx]
        wp = (wn * pn).sum()
        node = {"n": len(idx), "weight": float(wn.sum()), "pos": float(wp), "depth": depth}
        nodes.append(node)
        if len(idx) < 2 or wp <= 0 or wp >= wn.sum() or (max_depth is not None and depth >= max_depth):
            continue
        if wn.sum() <= min_weight:
            continue
        perm = rng.permutation(F)
        Xn = X[idx]
        split = best_split(Xn, pn, wn, perm[:max_features])
        if split is None and max_features < F:
            split = best_split(Xn, pn, wn, perm[max_features:])
        if split is None:
            continue
        gain, f, thr = split
        importance[f] += gain * wn.sum() / W_root
        node.update(feature=f, threshold=thr, gain=gain)
        left = Xn[:, f] <= thr
        stack.append((idx[~left], depth + 1))
        stack.append((idx[left], depth + 1))
    return importance, nodes


def _n_features(setting, F):
    if setting is None or setting == "all":
        return F
    if setting == "sqrt":
        return max(1, int(np.sqrt(F)))
    if isinstance(setting, float):
        return max(1, int(setting * F))
    return max(1, min(int(setting), F))


def fit_mdi(matrix: DesignMatrix, n_trees: int = 50, max_features="sqrt", bootstrap: bool = True,
            max_depth=None, seed: int = 0) -> SurrogateReport:
    """Relevance ``gamma_c * mean_trees(sum_nodes dGini * N_d / N)`` per clause."""
    matrix.check_labels()
    X, y, alpha = matrix.X, matrix.y, matrix.alpha
    n, F = X.shape
    pos = y > 0
    m = _n_features(max_features, F)
    imp = np.zeros(F)
    for tree in range(n_trees):
        rng = np.random.default_rng([seed, tree])
        if bootstrap:
            counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
            w = alpha * counts
        else:
            w = alpha.astype(np.float64)
        if F:
            imp += grow_tree(X, pos, w, rng, m, max_depth)[0]
    imp /= max(n_trees, 1)
    g = matrix.gammas()
    return SurrogateReport(
        "mdi", matrix.features, g * imp, g, matrix.labels,
        info={"n_trees": n_trees, "max_features": m, "bootstrap": bootstrap, "seed": seed,
              "importance": imp.tolist()},
    )

"""Remove-and-retrain faithfulness protocol, random baselines and runtime benchmark.

One repetition trains a model, picks validation triples the model ranks
first in both directions, asks each method for a removal set per triple,
retrains on the training split without the pooled removal set and ranks the
same triples again. Filtering always uses the original graph.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import KGExplainError, NotEnoughTestPointsError
from .explainer import ExplainConfig, Explainer
from .graph import KnowledgeGraph, SchemaMap, Triple
from .models import TrainConfig, evaluate_ranking, train
from .models.ranking import FilterIndex, RankMetrics, rank_triple
from .surrogates import METHODS as SURROGATES

logger = logging.getLogger(__name__)

DEFAULT_TEST_POINTS = 30
DEFAULT_REPETITIONS = 5


class IsolatedAnchorsWarning(UserWarning):
    pass


# --- test points ----------------------------------------------------------------

def select_test_points(store, graph: KnowledgeGraph, n: int = DEFAULT_TEST_POINTS,
                       filters: FilterIndex | None = None, split: str = "valid") -> list[Triple]:
    """``n`` validation triples ranked first on both sides, largest margin first.

    Equal margins keep the split's id order.
    """
    filters = filters or FilterIndex(graph)
    aligned = store.aligned_to(graph)
    ids = np.asarray(graph.split(split))
    qualifying = []
    for i, (h, r, t) in enumerate(ids.tolist()):
        hr, tr, margin = rank_triple(aligned, h, r, t, filters)
        if hr == 1 and tr == 1:
            qualifying.append((-margin, (h, r, t), i))
    if len(qualifying) < n:
        raise NotEnoughTestPointsError(n, len(qualifying))
    qualifying.sort()
    seen, out = set(), []
    for _, key, _ in qualifying:
        if key not in seen:  # duplicated split rows
            seen.add(key)
            out.append(graph.to_triple(key))
        if len(out) == n:
            break
    if len(out) < n:
        raise NotEnoughTestPointsError(n, len(out))
    return out


# --- random baselines ---------------------------------------------------------------

def _walk_from(adj, start, length, rng, used=None):
    """Random edge-simple walk of ``length`` edges from ``start`` or None."""
    node, path, used = start, [], set(used or ())
    for _ in range(length):
        options = [(r, v, o) for r, v, o in adj[node]
                   if ((node, r, v) if o else (v, r, node)) not in used]
        if not options:
            return None
        r, v, o = options[rng.integers(len(options))]
        edge = (node, r, v) if o else (v, r, node)
        used.add(edge)
        path.append(edge)
        node = v
    return path


def baseline_global_random(graph: KnowledgeGraph, predicted=None, length: int = 1, seed: int = 0,
                           max_tries: int = 1000) -> set[Triple]:
    """Triples of a random connected path of ``length`` edges in the train split.

    The path starts with a uniform train triple and is extended from its
    tail by uniform adjacent edges; dead ends are retried.
    """
    train = np.asarray(graph.split("train"))
    if len(train) == 0:
        return set()
    rng = np.random.default_rng(seed)
    adj = graph.adjacency("train")
    for _ in range(max_tries):
        h, r, t = (int(x) for x in train[rng.integers(len(train))])
        rest = _walk_from(adj, t, length - 1, rng, used={(h, r, t)})
        if rest is not None:
            return {graph.to_triple(e) for e in [(h, r, t)] + rest}
    raise KGExplainError(f"no connected path of length {length} found in {max_tries} attempts")


def baseline_local_random(graph: KnowledgeGraph, predicted, length: int = 1, seed: int = 0,
                          max_tries: int = 1000) -> set[Triple]:
    """Triples of a random path of ``length`` edges starting at the predicted head or tail."""
    predicted = Triple(*predicted)
    h, _, t = graph.to_ids(predicted)
    adj = graph.adjacency("train")
    anchors = [a for a in dict.fromkeys((h, t)) if adj[a]]
    if not anchors:
        warnings.warn(f"anchors of {predicted} have no train edges", IsolatedAnchorsWarning)
        return set()
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        start = anchors[rng.integers(len(anchors))]
        path = _walk_from(adj, start, length, rng)
        if path is not None:
            return {graph.to_triple(e) for e in path}
    raise KGExplainError(f"no path of length {length} from the anchors of {predicted}")


def incident_edges(graph: KnowledgeGraph, predicted) -> set[Triple]:
    """Every train triple touching the predicted head or tail (diagnostic bound)."""
    h, _, t = graph.to_ids(predicted)
    adj = graph.adjacency("train")
    out = set()
    for a in {h, t}:
        for r, v, o in adj[a]:
            out.add(graph.to_triple((a, r, v) if o else (v, r, a)))
    return out


# --- methods ------------------------------------------------------------------------

@dataclass
class MethodContext:
    """What a removal method may use: the original graph, model and settings."""

    graph: KnowledgeGraph
    store: object
    schema: SchemaMap
    explain_config: ExplainConfig
    path_length: int
    _explainers: dict = field(default_factory=dict)

    def explainer(self, method: str) -> Explainer:
        if method not in self._explainers:
            cfg = replace(self.explain_config, method=method)
            self._explainers[method] = Explainer(self.graph, self.store, self.schema, cfg)
        return self._explainers[method]


MethodFn = Callable[[MethodContext, Triple, int], set]
METHOD_REGISTRY: dict[str, MethodFn] = {}


def register_method(name: str, fn: MethodFn) -> None:
    """Add a removal method ``fn(context, predicted, seed) -> set of Triple``."""
    METHOD_REGISTRY[name] = fn


def _surrogate_method(tag):
    def run(ctx: MethodContext, predicted, seed):
        return ctx.explainer(tag).explain(predicted).removal_set
    return run


for _tag in SURROGATES:
    register_method(_tag, _surrogate_method(_tag))
register_method("global-random", lambda ctx, p, seed: baseline_global_random(ctx.graph, p, ctx.path_length, seed))
register_method("local-random", lambda ctx, p, seed: baseline_local_random(ctx.graph, p, ctx.path_length, seed))
register_method("retraining", lambda ctx, p, seed: set())
register_method("incident", lambda ctx, p, seed: incident_edges(ctx.graph, p))


# --- protocol ------------------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolConfig:
    model_kind: str = "distmult"
    train_config: TrainConfig = field(default_factory=TrainConfig)
    explain_config: ExplainConfig = field(default_factory=ExplainConfig)
    n_test: int = DEFAULT_TEST_POINTS
    repetitions: int = DEFAULT_REPETITIONS
    seed: int = 0
    path_length: int = 1
    pooled: bool = True
    dataset: str = "dataset"
    jobs: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_config"] = self.train_config.to_dict()
        return d


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class ProtocolRun:
    method: str
    model_kind: str
    repetition: int
    seeds: dict
    test_points: list[Triple]
    removal_sizes: list[int]
    removed: int
    pre: RankMetrics
    post: RankMetrics
    seconds: dict
    filter_hash_pre: str
    filter_hash_post: str
    removal_in_train: bool
    failures: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "method": self.method,
            "model": self.model_kind,
            "repetition": self.repetition,
            "seeds": self.seeds,
            "mrr_pre": self.pre.mrr,
            "hits1_pre": self.pre.hits_at_1,
            "mrr_post": self.post.mrr,
            "hits1_post": self.post.hits_at_1,
            "|E|": self.removed,
            "removal_sizes": self.removal_sizes,
            "test_points": [list(t) for t in self.test_points],
            "ranks_post": [list(r) for r in self.post.ranks],
            "filter_hash_pre": self.filter_hash_pre,
            "filter_hash_post": self.filter_hash_post,
            "removal_in_train": self.removal_in_train,
            "partial": self.partial,
            "failures": self.failures,
        }
        if timing:
            d["seconds"] = self.seconds
        return d


def _removal_sets(ctx, method, points, seed):
    fn = METHOD_REGISTRY[method]
    sets, failures = [], {}
    for i, p in enumerate(points):
        try:
            sets.append(set(fn(ctx, p, derive_seed(seed, i))))
        except KGExplainError as exc:
            failures[i] = f"{type(exc).__name__}: {exc}"
            sets.append(set())
    return sets, failures


def run_repetition(graph: KnowledgeGraph, methods, config: ProtocolConfig, repetition: int = 0,
                   schema: SchemaMap | None = None) -> dict[str, ProtocolRun]:
    """One repetition for every method in ``methods``, sharing the original model and P."""
    schema = schema or SchemaMap()
    for m in methods:
        if m not in METHOD_REGISTRY:
            raise KGExplainError(f"unknown method {m!r}; registered: {sorted(METHOD_REGISTRY)}")
    seeds = {
        "train": derive_seed(config.seed, repetition, 0),
        "retrain": derive_seed(config.seed, repetition, 1),
        "method": derive_seed(config.seed, repetition, 2),
    }
    filters = FilterIndex(graph)
    hash_pre = filters.digest()
    t0 = time.perf_counter()
    store = train(graph, config.model_kind, replace(config.train_config, seed=seeds["train"]))
    t_train = time.perf_counter() - t0
    points = select_test_points(store, graph, config.n_test, filters)
    pre = evaluate_ranking(store, points, graph, filters)
    ex_cfg = replace(config.explain_config, seed=seeds["method"])
    ctx = MethodContext(graph, store, schema, ex_cfg, config.path_length)
    # method retrains reuse the original seed so only the ablation differs; the
    # retraining baseline measures seed variance and gets a fresh one
    same_seed = replace(config.train_config, seed=seeds["train"])
    fresh_seed = replace(config.train_config, seed=seeds["retrain"])
    train_ids = graph.id_set("train")
    runs = {}
    for method in methods:
        t0 = time.perf_counter()
        sets, failures = _removal_sets(ctx, method, points, seeds["method"])
        t_explain = time.perf_counter() - t0
        in_train = all(graph.to_ids(x) in train_ids for s in sets for x in s)
        t_retrain = t_eval = 0.0
        retrain_cfg = fresh_seed if method == "retraining" else same_seed
        if config.pooled:
            pooled = set().union(*sets) if sets else set()
            t0 = time.perf_counter()
            ablated = graph.remove_triples(pooled)
            new = train(ablated, config.model_kind, retrain_cfg)
            t_retrain = time.perf_counter() - t0
            t0 = time.perf_counter()
            post = evaluate_ranking(new, points, graph, filters)
            t_eval = time.perf_counter() - t0
            removed = len(pooled)
        else:
            ranks = []
            for p, s in zip(points, sets):
                t0 = time.perf_counter()
                new = train(graph.remove_triples(s), config.model_kind, retrain_cfg)
                t_retrain += time.perf_counter() - t0
                t0 = time.perf_counter()
                ranks += evaluate_ranking(new, [p], graph, filters).ranks
                t_eval += time.perf_counter() - t0
            post = RankMetrics.from_ranks(ranks)
            removed = len(set().union(*sets)) if sets else 0
        runs[method] = ProtocolRun(
            method=method,
            model_kind=config.model_kind,
            repetition=repetition,
            seeds=seeds,
            test_points=points,
            removal_sizes=[len(s) for s in sets],
            removed=removed,
            pre=pre,
            post=post,
            seconds={"train": t_train, "explain": t_explain, "retrain": t_retrain, "eval": t_eval},
            filter_hash_pre=hash_pre,
            filter_hash_post=filters.digest(),
            removal_in_train=in_train,
            failures=failures,
        )
        logger.info("rep %d %s: |E|=%d post mrr %.3f hits1 %.3f", repetition, method, removed,
                    post.mrr, post.hits_at_1)
    return runs


def run_protocol(graph: KnowledgeGraph, methods, config: ProtocolConfig,
                 schema: SchemaMap | None = None) -> dict[str, "ProtocolReport"]:
    """All repetitions for ``methods`` (a name or list); one report per method."""
    if isinstance(methods, str):
        methods = [methods]
    reps = range(config.repetitions)
    if config.jobs > 1 and config.repetitions > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_repetition, [graph] * len(reps), [methods] * len(reps),
                                    [config] * len(reps), reps, [schema] * len(reps)))
    else:
        results = [run_repetition(graph, methods, config, r, schema) for r in reps]
    return {m: ProtocolReport(config.dataset, config.model_kind, m, [res[m] for res in results], config)
            for m in methods}


@dataclass
class ProtocolReport:
    dataset: str
    model_kind: str
    method: str
    runs: list[ProtocolRun]
    config: ProtocolConfig | None = None

    def aggregate(self) -> dict:
        keys = {"mrr_pre": lambda r: r.pre.mrr, "hits1_pre": lambda r: r.pre.hits_at_1,
                "mrr_post": lambda r: r.post.mrr, "hits1_post": lambda r: r.post.hits_at_1,
                "|E|": lambda r: r.removed}
        mean = {k: float(np.mean([f(r) for r in self.runs])) for k, f in keys.items()}
        std = {k: float(np.std([f(r) for r in self.runs])) for k, f in keys.items()}
        return {"mean": mean, "std": std}

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model_kind,
            "method": self.method,
            "runs": [r.to_dict(timing) for r in self.runs],
            "aggregate": self.aggregate(),
        }

    def to_json(self, timing: bool = True, **kw) -> str:
        return json.dumps(self.to_dict(timing), **kw)


def reports_to_csv(reports) -> str:
    """One summary line per report: means and standard deviations."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "model", "method", "runs", "mrr_post_mean", "mrr_post_std",
                "hits1_post_mean", "hits1_post_std", "removed_mean"])
    for rep in reports:
        a = rep.aggregate()
        w.writerow([rep.dataset, rep.model_kind, rep.method, len(rep.runs),
                    f"{a['mean']['mrr_post']:.4f}", f"{a['std']['mrr_post']:.4f}",
                    f"{a['mean']['hits1_post']:.4f}", f"{a['std']['hits1_post']:.4f}",
                    f"{a['mean']['|E|']:.1f}"])
    return buf.getvalue()


# --- runtime ---------------------------------------------------------------------

def runtime_bench(graph: KnowledgeGraph, store, methods, n_explanations: int = 40, runs: int = 1,
                  triples=None, schema: SchemaMap | None = None, explain_config: ExplainConfig | None = None,
                  clock=time.perf_counter) -> dict:
    """Wall-clock seconds per method to explain ``n_explanations`` triples.

    ``methods`` holds surrogate names or callables ``fn(triple)``. Triples
    default to the first validation triples. Each run builds a fresh
    explainer, so index construction is part of the measurement.
    """
    schema = schema or SchemaMap()
    explain_config = explain_config or ExplainConfig()
    if triples is None:
        triples = graph.triples("valid")[:n_explanations]
    triples = list(triples)[:n_explanations]
    report = {"n_explanations": len(triples), "runs": runs, "methods": {}}
    for m in methods:
        name = m if isinstance(m, str) else getattr(m, "__name__", "callable")
        times, failures = [], 0
        for _ in range(runs):
            t0 = clock()
            if isinstance(m, str):
                ex = Explainer(graph, store, schema, replace(explain_config, method=m))
                fn = ex.explain
            else:
                fn = m
            for p in triples:
                try:
                    fn(p)
                except KGExplainError:
                    failures += 1
            times.append(clock() - t0)
        report["methods"][name] = {"seconds": times, "mean": float(np.mean(times)),
                                   "std": float(np.std(times)), "failures": failures}
    return report

"""Command-line entry point: ``kgexplain {train,explain,evaluate,bench}``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then explicit flags. Every command writes its resolved
configuration to ``<out>/config.txt``. Failures print one JSON line on stderr
and exit with 1 (configuration) or 2 (data).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import harness
from .config import METHOD_CHOICES, RunConfig, read_config_file, resolve
from .datasets import DEFAULT_MAX_WALK_LEN, guess_dataset_name, load_kinship
from .errors import ConfigError, DataError, KGExplainError
from .explainer import ExplainConfig, Explainer
from .graph import Triple, load_dataset, load_schema, write_stats
from .models import (
    MODEL_KINDS,
    desk_config,
    evaluate_ranking,
    export_embeddings,
    import_embeddings,
    train_with_history,
)
from .surrogates import METHODS as SURROGATES

logger = logging.getLogger("kgexplain")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_common(p):
    a = p.add_argument
    a("--config", help="key = value file; flags override it")
    a("--dataset-dir", help="directory with train/valid/test files, or 'kinship' for the bundled set")
    a("--schema", help="entity<TAB>class file")
    a("--model", choices=MODEL_KINDS)
    a("--embeddings", help="embedding file to use instead of training")
    a("--method", choices=METHOD_CHOICES)
    a("--k", type=int)
    a("--max-walk-len", type=int)
    a("--top-clauses", type=int)
    a("--grounding-limit", type=int)
    a("--sigma", type=float)
    a("--beta", type=float)
    a("--lam", type=float)
    a("--seed", type=int)
    a("--jobs", type=int)
    a("--out", help="output directory")
    a("--dimension", type=int)
    a("--epochs", type=int)
    a("--learning-rate", type=float)
    a("--negatives", type=int)
    a("--batch-size", type=int)
    a("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgexplain", description="Explain and evaluate link predictions of KGE models.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    p = sub.add_parser("train", help="train a model and export its embeddings")
    _add_common(p)
    p = sub.add_parser("explain", help="explain one or more predicted triples")
    _add_common(p)
    p.add_argument("--triple", help="head,relation,tail")
    p.add_argument("--triples-file", help="TSV file of triples to explain")
    p = sub.add_parser("evaluate", help="run the remove-and-retrain protocol")
    _add_common(p)
    p.add_argument("--n-test", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--path-length", type=int)
    p = sub.add_parser("bench", help="time a batch of explanations")
    _add_common(p)
    p.add_argument("--n-explanations", type=int)
    p.add_argument("--bench-runs", type=int)
    return parser


_NOT_CONFIG = {"config", "command", "verbose"}


def load_config(args) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    file_values = read_config_file(args.config) if args.config else {}
    cfg = resolve(file_values, flags)
    if not cfg.dataset_dir:
        raise ConfigError("--dataset-dir is required")
    if not cfg.dataset:
        cfg.dataset = guess_dataset_name(cfg.dataset_dir) or Path(cfg.dataset_dir).name
    default_len = DEFAULT_MAX_WALK_LEN.get(cfg.dataset, 1)
    if cfg.max_walk_len == 0:
        cfg.max_walk_len = default_len
    if cfg.path_length == 0:
        cfg.path_length = default_len
    return cfg


def train_config(cfg: RunConfig):
    overrides = {"seed": cfg.seed}
    for name in ("dimension", "epochs", "negatives", "batch_size"):
        if getattr(cfg, name) > 0:
            overrides[name] = getattr(cfg, name)
    for name in ("learning_rate", "margin"):
        if getattr(cfg, name) > 0:
            overrides[name] = getattr(cfg, name)
    if cfg.regularization >= 0:
        overrides["regularization"] = cfg.regularization
    return desk_config(cfg.model, **overrides)


def explain_config(cfg: RunConfig, method: str | None = None) -> ExplainConfig:
    method = method or cfg.method
    params = {"mdi": {"n_trees": cfg.n_trees}, "klasso": {"beta": cfg.beta}, "hsic": {"lam": cfg.lam}}
    return ExplainConfig(k=cfg.k, max_walk_len=cfg.max_walk_len, method=method, top_clauses=cfg.top_clauses,
                         grounding_limit=cfg.grounding_limit, seed=cfg.seed, sigma=cfg.sigma or None,
                         method_params=params.get(method, {}))


def load_graph(cfg: RunConfig):
    path = Path(cfg.dataset_dir)
    if not path.exists() and cfg.dataset_dir.lower() == "kinship":
        graph = load_kinship()
    elif not path.is_dir():
        raise DataError(f"dataset directory not found: {path}")
    else:
        graph = load_dataset(path)
    schema = load_schema(cfg.schema or None, graph=graph)
    logger.info("loaded %r", graph)
    return graph, schema


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.txt")
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _store(cfg: RunConfig, graph, out: Path):
    """Embeddings from ``cfg.embeddings``, ``<out>/embeddings.tsv`` or a fresh training run."""
    for candidate in (cfg.embeddings, out / "embeddings.tsv"):
        if candidate and Path(candidate).exists():
            logger.info("using embeddings %s", candidate)
            return import_embeddings(candidate, graph)
    if cfg.embeddings:
        raise DataError(f"embedding file not found: {cfg.embeddings}")
    logger.info("no embeddings found, training %s", cfg.model)
    store, _ = train_with_history(graph, cfg.model, train_config(cfg))
    return store


def cmd_train(cfg: RunConfig) -> int:
    graph, _ = load_graph(cfg)
    out = _out(cfg)
    tc = train_config(cfg)
    t0 = time.perf_counter()
    store, history = train_with_history(graph, cfg.model, tc)
    seconds = time.perf_counter() - t0
    export_embeddings(store, out / "embeddings.tsv")
    metrics = evaluate_ranking(store, graph.triples("valid"), graph)
    write_stats(graph, out / "graph_stats.json")
    _write_json(out / "train_metrics.json", {
        "model": cfg.model, "train_config": tc.to_dict(), "seconds": seconds, "loss": history,
        "valid": {"mrr": metrics.mrr, "hits1": metrics.hits_at_1},
    })
    logger.info("trained %s in %.1fs, valid MRR %.3f Hits@1 %.3f", cfg.model, seconds, metrics.mrr,
                metrics.hits_at_1)
    return 0


def _parse_triple(text: str) -> Triple:
    parts = [p.strip() for p in (text.split("\t") if "\t" in text else text.split(","))]
    if len(parts) != 3:
        raise ConfigError(f"triple must be head,relation,tail: {text!r}")
    return Triple(*parts)


def cmd_explain(cfg: RunConfig) -> int:
    if cfg.method not in SURROGATES:
        raise ConfigError(f"explain needs a surrogate method {SURROGATES}, got {cfg.method!r}")
    triples = []
    if cfg.triple:
        triples.append(_parse_triple(cfg.triple))
    if cfg.triples_file:
        path = Path(cfg.triples_file)
        if not path.exists():
            raise DataError(f"triples file not found: {path}")
        triples += [_parse_triple(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not triples:
        raise ConfigError("give --triple or --triples-file")
    graph, schema = load_graph(cfg)
    for t in triples:
        graph.to_ids(t)  # fail on unknown identifiers before any training
    out = _out(cfg)
    store = _store(cfg, graph, out)
    explainer = Explainer(graph, store, schema, explain_config(cfg))
    results = []
    for i, t in enumerate(triples):
        res = explainer.explain(t)
        stem = out / f"explanation_{i}"
        stem.with_suffix(".json").write_text(res.to_json(indent=2) + "\n", encoding="utf-8")
        stem.with_suffix(".txt").write_text(res.to_text(), encoding="utf-8")
        stem.with_suffix(".dot").write_text(res.to_dot(), encoding="utf-8")
        results.append(res.to_dict())
        logger.info("explained %s (%d/%d)", tuple(t), i + 1, len(triples))
    _write_json(out / "explanations.json", results)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    graph, schema = load_graph(cfg)
    out = _out(cfg)
    method = cfg.method
    pc = harness.ProtocolConfig(
        model_kind=cfg.model,
        train_config=train_config(cfg),
        explain_config=explain_config(cfg, method if method in SURROGATES else "hsic"),
        n_test=cfg.n_test,
        repetitions=cfg.repetitions,
        seed=cfg.seed,
        path_length=cfg.path_length,
        pooled=cfg.pooled,
        dataset=cfg.dataset,
        jobs=cfg.jobs,
    )
    reports = harness.run_protocol(graph, [method], pc, schema)
    for m, rep in reports.items():
        (out / f"protocol_{m}.json").write_text(rep.to_json(indent=2) + "\n", encoding="utf-8")
        agg = rep.aggregate()["mean"]
        logger.info("%s: post MRR %.3f Hits@1 %.3f", m, agg["mrr_post"], agg["hits1_post"])
    (out / "summary.csv").write_text(harness.reports_to_csv(reports.values()), encoding="utf-8")
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    if cfg.method not in SURROGATES:
        raise ConfigError(f"bench times surrogate methods {SURROGATES}, got {cfg.method!r}")
    graph, schema = load_graph(cfg)
    out = _out(cfg)
    store = _store(cfg, graph, out)
    report = harness.runtime_bench(graph, store, [cfg.method], cfg.n_explanations, cfg.bench_runs,
                                   schema=schema, explain_config=explain_config(cfg))
    report.update(dataset=cfg.dataset, model=cfg.model)
    _write_json(out / "bench.json", report)
    m = report["methods"][cfg.method]
    logger.info("%s: %.2fs +- %.2fs for %d explanations", cfg.method, m["mean"], m["std"],
                report["n_explanations"])
    return 0


COMMANDS = {"train": cmd_train, "explain": cmd_explain, "evaluate": cmd_evaluate, "bench": cmd_bench}


def _fail(exc: Exception, code: int) -> int:
    msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    print(json.dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise ConfigError("missing command: one of train, explain, evaluate, bench")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                            format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        return _fail(exc, 1)
    except (DataError, KGExplainError) as exc:
        return _fail(exc, 2)
    except OSError as exc:
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())

"""Flat ``key = value`` run configuration with flag > file > default precedence."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .models import MODEL_KINDS

METHOD_CHOICES = ("mdi", "klasso", "hsic", "global-random", "local-random", "retraining", "incident")


@dataclass
class RunConfig:
    dataset_dir: str = ""
    dataset: str = ""  # name used for per-dataset defaults; guessed from the directory
    schema: str = ""
    model: str = "distmult"
    embeddings: str = ""  # existing embedding file; trained when empty
    method: str = "hsic"
    k: int = 40
    max_walk_len: int = 0  # 0 = per-dataset default
    top_clauses: int = 5
    grounding_limit: int = 10
    sigma: float = 0.0  # 0 = median heuristic
    beta: float = 1.0
    lam: float = 1e-3
    n_trees: int = 50
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    # training
    dimension: int = 0  # 0 = desk preset of the model kind
    epochs: int = 0
    learning_rate: float = 0.0
    margin: float = 0.0
    negatives: int = 0
    batch_size: int = 0
    regularization: float = -1.0
    # protocol and benchmark
    n_test: int = 30
    repetitions: int = 5
    path_length: int = 0
    pooled: bool = True
    n_explanations: int = 40
    bench_runs: int = 1
    triple: str = ""  # "head,relation,tail" (tab also accepted)
    triples_file: str = ""
    extra: dict = field(default_factory=dict, repr=False)

    def validate(self) -> "RunConfig":
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.method not in METHOD_CHOICES:
            raise ConfigError(f"method must be one of {METHOD_CHOICES}, got {self.method!r}")
        for name in ("k", "top_clauses", "grounding_limit", "n_test", "repetitions", "jobs", "n_explanations",
                     "bench_runs", "n_trees"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("max_walk_len", "dimension", "epochs", "negatives", "batch_size", "path_length"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.beta < 0 or self.lam <= 0 or self.sigma < 0:
            raise ConfigError("beta must be >= 0, lam > 0, sigma >= 0")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}

    def dump(self, path) -> None:
        """Write the resolved configuration in the same ``key = value`` format."""
        lines = [f"{k} = {json.dumps(v) if isinstance(v, bool) else v}" for k, v in self.to_dict().items()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_FIELDS = {f.name: f for f in fields(RunConfig) if f.name != "extra"}


def _coerce(name: str, raw):
    f = _FIELDS.get(name)
    if f is None:
        raise ConfigError(f"unknown config key {name!r}")
    kind = type(getattr(RunConfig(), name))
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {text!r}") from None
    return text


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{no}: expected key = value")
        key = key.strip().replace("-", "_")
        out[key] = _coerce(key, value.strip())
    return out


def resolve(file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Defaults, then the file, then explicitly given flags."""
    merged = {}
    for src in (file_values or {}, flag_values or {}):
        for k, v in src.items():
            if v is not None:
                merged[k] = _coerce(k, v)
    return RunConfig(**merged).validate()

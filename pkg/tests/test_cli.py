import json

import pytest

from kgexplain.cli import build_parser, load_config, main
from kgexplain.config import RunConfig, read_config_file, resolve
from kgexplain.errors import ConfigError
from kgexplain.graph import write_triples

from fixtures import symmetric_toy

FAST = ["--model", "distmult", "--dimension", "16", "--epochs", "30", "--batch-size", "64", "--k", "10"]


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    g = symmetric_toy()
    write_triples(g, d / "train.txt", "train")
    write_triples(g, d / "valid.txt", "valid")
    (d / "test.txt").write_text("", encoding="utf-8")
    return d


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


def read_kv(path):
    return dict(line.split(" = ", 1) for line in path.read_text().splitlines())


def test_train_explain_evaluate_bench(toy_dir, tmp_path):
    out = tmp_path / "run"
    common = ["--dataset-dir", str(toy_dir), "--out", str(out)] + FAST
    assert main(["train"] + common) == 0
    for name in ("embeddings.tsv", "graph_stats.json", "train_metrics.json", "config.txt"):
        assert (out / name).exists()
    metrics = json.loads((out / "train_metrics.json").read_text())
    assert len(metrics["loss"]) == 30 and metrics["valid"]["mrr"] > 0.5

    assert main(["explain", "--triple", "b0,married,a0", "--method", "klasso"] + common) == 0
    res = json.loads((out / "explanation_0.json").read_text())
    assert res["predicted"] == ["b0", "married", "a0"]
    assert res["modalities"]["instance"]["entries"][0]["groundings"] == [[["a0", "married", "b0"]]]
    assert (out / "explanation_0.txt").read_text().startswith("prediction: married(b0,a0)")
    assert (out / "explanation_0.dot").read_text().startswith("digraph")

    triples = tmp_path / "triples.tsv"
    triples.write_text("b0\tmarried\ta0\nb1\tmarried\ta1\n")
    assert main(["explain", "--triples-file", str(triples), "--method", "hsic"] + common) == 0
    assert len(json.loads((out / "explanations.json").read_text())) == 2

    ev = tmp_path / "eval"
    assert main(["evaluate", "--dataset-dir", str(toy_dir), "--out", str(ev), "--method", "local-random",
                 "--n-test", "3", "--repetitions", "1"] + FAST) == 0
    proto = json.loads((ev / "protocol_local-random.json").read_text())
    assert proto["runs"][0]["mrr_pre"] == 1.0 and proto["runs"][0]["removal_in_train"]
    assert (ev / "summary.csv").read_text().startswith("dataset,model,method")

    assert main(["bench", "--method", "mdi", "--n-explanations", "3"] + common) == 0
    bench = json.loads((out / "bench.json").read_text())
    assert bench["n_explanations"] == 3 and bench["methods"]["mdi"]["failures"] == 0


def test_precedence_flag_over_file_over_default(toy_dir, tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nk = 12\ntop_clauses = 7\nmethod = mdi\n\nbeta = 0.5  # inline\n")
    args = build_parser().parse_args(["train", "--config", str(cfg_file), "--dataset-dir", str(toy_dir),
                                      "--k", "20"])
    cfg = load_config(args)
    assert cfg.k == 20  # flag
    assert cfg.top_clauses == 7 and cfg.method == "mdi" and cfg.beta == 0.5  # file
    assert cfg.grounding_limit == RunConfig().grounding_limit  # default
    assert cfg.max_walk_len == 1  # per-dataset default for unknown names


def test_dataset_defaults():
    cfg = load_config(build_parser().parse_args(["train", "--dataset-dir", "/data/WN18RR"]))
    assert cfg.dataset == "wn18rr" and cfg.max_walk_len == 3 and cfg.path_length == 3
    cfg = load_config(build_parser().parse_args(["train", "--dataset-dir", "/data/FB15k-237", "--max-walk-len", "1"]))
    assert cfg.max_walk_len == 1 and cfg.path_length == 2


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense line\n")
    with pytest.raises(ConfigError, match="expected key = value"):
        read_config_file(bad)
    bad.write_text("colour = blue\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        read_config_file(bad)
    bad.write_text("k = many\n")
    with pytest.raises(ConfigError, match="invalid value"):
        read_config_file(bad)
    with pytest.raises(ConfigError):
        resolve({}, {"lam": 0.0})
    assert resolve({"pooled": "false"}).pooled is False


def test_config_dump_round_trip(toy_dir, tmp_path):
    out = tmp_path / "o"
    assert main(["train", "--dataset-dir", str(toy_dir), "--out", str(out), "--seed", "9"] + FAST) == 0
    values = read_config_file(out / "config.txt")
    again = resolve(values)
    assert again.seed == 9 and again.dimension == 16 and again.dataset_dir == str(toy_dir)


@pytest.mark.parametrize("argv,code", [
    ([], 1),
    (["train"], 1),  # no dataset
    (["train", "--dataset-dir", "X", "--k", "0"], 1),
    (["train", "--dataset-dir", "X", "--model", "rescal"], 1),
    (["explain", "--dataset-dir", "X"], 1),  # nothing to explain
    (["train", "--dataset-dir", "/nonexistent/dir"], 2),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    err = _error(capsys)
    assert err["exit_code"] == code and err["message"]


def test_data_errors(toy_dir, tmp_path, capsys):
    out = ["--dataset-dir", str(toy_dir), "--out", str(tmp_path)] + FAST
    assert main(["explain", "--triple", "nobody,married,a0"] + out) == 2
    assert "nobody" in _error(capsys)["message"]
    assert not (tmp_path / "embeddings.tsv").exists()  # failed before training
    assert main(["explain", "--triple", "a,b"] + out) == 1
    assert main(["explain", "--triple", "b0,married,a0", "--method", "local-random"] + out) == 1
    assert main(["explain", "--triple", "b0,married,a0", "--embeddings", str(tmp_path / "none.tsv")] + out) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["train", "--dataset-dir", str(empty), "--out", str(tmp_path)]) == 2
    capsys.readouterr()


def test_kinship_alias(tmp_path):
    assert main(["train", "--dataset-dir", "kinship", "--out", str(tmp_path), "--epochs", "1",
                 "--dimension", "8"]) == 0
    stats = json.loads((tmp_path / "graph_stats.json").read_text())
    assert stats["entities"] == 104

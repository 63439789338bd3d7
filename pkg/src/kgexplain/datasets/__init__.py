"""Bundled benchmark data.

Kinship (Alyawarra kinship terms, standard train/valid/test split) is shipped
with the package; larger benchmarks are loaded from a directory with
:func:`kgexplain.graph.load_dataset`.
"""
from importlib import resources

from ..graph import KnowledgeGraph, load_dataset

# per-dataset maximal walk / baseline path lengths
DEFAULT_MAX_WALK_LEN = {"kinship": 1, "fb15k-237": 2, "wn18rr": 3}


def kinship_dir():
    return resources.files(__package__) / "kinship"


def load_kinship() -> KnowledgeGraph:
    with resources.as_file(kinship_dir()) as path:
        return load_dataset(path)


def guess_dataset_name(path) -> str | None:
    name = str(path).rstrip("/").rsplit("/", 1)[-1].lower().replace("_", "-")
    if "kinship" in name:
        return "kinship"
    if "wn18rr" in name:
        return "wn18rr"
    if "fb15k" in name:
        return "fb15k-237"
    return None

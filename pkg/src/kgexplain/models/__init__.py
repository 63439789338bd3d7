from .ranking import FilterIndex, RankMetrics, evaluate_ranking
from .scoring import conve_combine, score, triple_embedding, triple_embeddings_ids
from .store import (
    MODEL_KINDS,
    ConvEParams,
    EmbeddingStore,
    default_reshape,
    export_embeddings,
    import_embeddings,
)
from .training import DESK_CONFIGS, TrainConfig, desk_config, train, train_with_history

__all__ = [
    "MODEL_KINDS",
    "ConvEParams",
    "EmbeddingStore",
    "FilterIndex",
    "RankMetrics",
    "DESK_CONFIGS",
    "TrainConfig",
    "desk_config",
    "conve_combine",
    "default_reshape",
    "evaluate_ranking",
    "export_embeddings",
    "import_embeddings",
    "score",
    "train",
    "train_with_history",
    "triple_embedding",
    "triple_embeddings_ids",
]

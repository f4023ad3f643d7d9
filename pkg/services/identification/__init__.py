"""
identification - gallery/probe protocol, Rank@K, CMC, retrieval and evaluation artifacts
"""

from .embedding_store import plot_cmc, read_embedding_dump, write_cmc_csv, write_embedding_dump, write_summary
from .evaluation import IdentificationReport, embed_manifest, evaluate_identification
from .metrics import CMCResult, cmc, match_positions, rank_at_k, similarities
from .protocol import LabeledEmbedding, Trial, build_protocol, group_by_identity
from .retrieval import RetrievalHit, retrieve

__all__ = [
    "LabeledEmbedding",
    "Trial",
    "build_protocol",
    "group_by_identity",
    "similarities",
    "match_positions",
    "rank_at_k",
    "CMCResult",
    "cmc",
    "RetrievalHit",
    "retrieve",
    "IdentificationReport",
    "embed_manifest",
    "evaluate_identification",
    "write_embedding_dump",
    "read_embedding_dump",
    "write_summary",
    "write_cmc_csv",
    "plot_cmc",
]

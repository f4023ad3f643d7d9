"""Top-K cosine retrieval over a gallery of labelled embeddings."""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .metrics import similarities
from .protocol import LabeledEmbedding


@dataclass
class RetrievalHit:
    rank: int
    source: str
    identity: str
    similarity: float
    correct: Optional[bool]

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "source": self.source,
            "identity": self.identity,
            "similarity": round(self.similarity, 6),
            "correct": self.correct,
        }


def retrieve(
    query: LabeledEmbedding,
    gallery: Sequence[LabeledEmbedding],
    top_k: int = 5,
    known_identity: bool = True,
) -> List[RetrievalHit]:
    """
    Rank the gallery by similarity to `query`; ties keep gallery order.

    Args:
        query: Query embedding
        gallery: Searched embeddings
        top_k: Hits returned (clamped to the gallery size)
        known_identity: Flag hits as correct/incorrect using query.identity

    Returns:
        Hits in descending similarity
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    sims = similarities(query, gallery)
    order = np.argsort(-sims, kind="stable")[:top_k]
    return [
        RetrievalHit(
            rank=r,
            source=gallery[i].source,
            identity=gallery[i].identity,
            similarity=float(sims[i]),
            correct=(gallery[i].identity == query.identity) if known_identity else None,
        )
        for r, i in enumerate(order, start=1)
    ]

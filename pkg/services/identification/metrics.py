"""
Rank@K and CMC.

Similarity is the inner product of unit vectors. Gallery ties
are broken by insertion order (distractors first, match last),
so the match's 1-based position in the sorted gallery is

    1 + #{distractors with similarity >= match similarity}
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .protocol import LabeledEmbedding, Trial


def similarities(probe: LabeledEmbedding, gallery: Sequence[LabeledEmbedding]) -> np.ndarray:
    if not gallery:
        return np.zeros(0)
    return np.stack([g.vector for g in gallery]) @ probe.vector


def match_positions(trials: Sequence[Trial]) -> np.ndarray:
    """1-based sorted position of the correct gallery entry, one per trial."""
    cache: Dict[int, np.ndarray] = {}
    positions = np.empty(len(trials), dtype=np.int64)
    for t, trial in enumerate(trials):
        key = id(trial.distractors)
        if key not in cache:
            cache[key] = (
                np.stack([d.vector for d in trial.distractors])
                if len(trial.distractors)
                else np.zeros((0, trial.probe.vector.size))
            )
        distractor_sims = cache[key] @ trial.probe.vector
        match_sim = float(trial.match.vector @ trial.probe.vector)
        positions[t] = 1 + int(np.count_nonzero(distractor_sims >= match_sim))
    return positions


def rank_at_k(trials: Sequence[Trial], K: int) -> float:
    """
    Fraction of trials whose match is within the top K.

    K larger than a trial's gallery is clamped to the gallery size.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not trials:
        raise ValueError("No trials to score")
    positions = match_positions(trials)
    sizes = np.array([t.gallery_size for t in trials])
    return float(np.mean(positions <= np.minimum(K, sizes)))


@dataclass
class CMCResult:
    """
    Cumulative match characteristic.

    Attributes:
        ranks: ranks[k - 1] is Rank@k
        num_probes: Number of trials scored
    """

    ranks: np.ndarray
    num_probes: int

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=np.float64)
        if np.any(np.diff(self.ranks) < 0):
            raise ValueError("CMC ranks must be non-decreasing in k")
        if self.ranks.size and (self.ranks[0] < 0 or self.ranks[-1] > 1):
            raise ValueError("CMC ranks must lie in [0, 1]")

    @property
    def k_max(self) -> int:
        return int(self.ranks.size)

    def rank(self, k: int) -> float:
        """Rank@k; k beyond the curve reads its last value."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        return float(self.ranks[min(k, self.k_max) - 1])

    def to_rows(self) -> List[Dict[str, float]]:
        return [{"k": k, "identification_rate": float(r)} for k, r in enumerate(self.ranks, start=1)]


def cmc(trials: Sequence[Trial], K_max: int) -> CMCResult:
    if K_max < 1:
        raise ValueError(f"K_max must be >= 1, got {K_max}")
    if not trials:
        raise ValueError("No trials to score")
    positions = match_positions(trials)
    ranks = [float(np.mean(positions <= k)) for k in range(1, K_max + 1)]
    return CMCResult(ranks=np.array(ranks), num_probes=len(trials))

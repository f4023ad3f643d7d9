"""
Identification protocol.

For every identity with m >= 2 images and every held-in image g of it:
    gallery = distractors (in order) followed by g
    probes  = the other m - 1 images of that identity

so each (probe, gallery) trial holds exactly one same-identity
gallery entry. m is the probe multiplicity of an identity.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

NORM_TOLERANCE = 1e-6


@dataclass
class LabeledEmbedding:
    """
    Unit-norm embedding of one image.

    Attributes:
        identity: Identity label
        vector: 1-D float vector with L2 norm 1 +- 1e-6
        source: Image path the vector came from
    """

    identity: str
    vector: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1 or self.vector.size == 0:
            raise ValueError(f"Embedding of {self.source or self.identity} must be a non-empty 1-D vector")
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"Embedding of {self.source or self.identity} has norm {norm:.8f}, expected 1")

    @classmethod
    def normalized(cls, identity: str, vector, source: str = "") -> "LabeledEmbedding":
        vector = np.asarray(vector, dtype=np.float64)
        norm = np.linalg.norm(vector)
        if norm == 0 or not np.isfinite(norm):
            raise ValueError(f"Cannot normalise embedding of {source or identity} (norm {norm})")
        return cls(identity=str(identity), vector=vector / norm, source=source)


@dataclass
class Trial:
    """One probe searched against distractors + its single held-in match."""

    probe: LabeledEmbedding
    match: LabeledEmbedding
    distractors: Sequence[LabeledEmbedding]

    @property
    def gallery(self) -> List[LabeledEmbedding]:
        return list(self.distractors) + [self.match]

    @property
    def gallery_size(self) -> int:
        return len(self.distractors) + 1

    @property
    def match_index(self) -> int:
        return len(self.distractors)


def group_by_identity(embeddings: Sequence[LabeledEmbedding]) -> Dict[str, List[LabeledEmbedding]]:
    """Group in order of first appearance."""
    groups: Dict[str, List[LabeledEmbedding]] = {}
    for e in embeddings:
        groups.setdefault(e.identity, []).append(e)
    return groups


def build_protocol(
    probe_pool: Union[Mapping[str, Sequence[LabeledEmbedding]], Sequence[LabeledEmbedding]],
    distractors: Sequence[LabeledEmbedding],
    excluded: Optional[List[str]] = None,
) -> List[Trial]:
    """
    Enumerate all (probe, gallery) trials.

    Args:
        probe_pool: Embeddings grouped by identity (or a flat list to group)
        distractors: Gallery filler, none sharing a probe identity
        excluded: If given, receives the identities skipped for having < 2 images

    Returns:
        Trials ordered by identity, then held-in image, then probe image

    Example:
        >>> len(build_protocol({"a": [e1, e2, e3]}, distractors=ten_others))
        6
    """
    groups = probe_pool if isinstance(probe_pool, Mapping) else group_by_identity(probe_pool)
    distractor_ids = {d.identity for d in distractors}
    overlap = sorted(distractor_ids & set(groups))
    if overlap:
        raise ValueError(f"Distractor set shares identities with the probe pool: {overlap}")

    distractors = list(distractors)
    trials: List[Trial] = []
    for identity, images in groups.items():
        if len(images) < 2:
            print(f"[Eval] ⚠️ Identity {identity} has {len(images)} image(s); excluded from the protocol")
            if excluded is not None:
                excluded.append(identity)
            continue
        for held_in, match in enumerate(images):
            for j, probe in enumerate(images):
                if j != held_in:
                    trials.append(Trial(probe=probe, match=match, distractors=distractors))
    return trials

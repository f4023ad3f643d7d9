"""
Embedding extraction and the end-to-end identification evaluation.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from services.data_pipeline import DatasetManifest, IdentityImageDataset, make_loader

from .metrics import CMCResult, cmc, match_positions
from .protocol import LabeledEmbedding, build_protocol, group_by_identity


@dataclass
class IdentificationReport:
    summary: Dict[str, float]
    cmc: CMCResult
    excluded_identities: List[str] = field(default_factory=list)


@torch.no_grad()
def embed_manifest(
    model: torch.nn.Module,
    manifest: DatasetManifest,
    resize: int,
    crop: int,
    batch_size: int = 64,
    device: str = "cpu",
    num_workers: int = 0,
) -> List[LabeledEmbedding]:
    """
    Embed every image of a manifest with the eval transform.

    `model.embed` must return unit-normalised rows; they are
    re-normalised in float64 before wrapping.
    """
    model.eval()
    dataset = IdentityImageDataset(manifest, train=False, resize=resize, crop=crop)
    loader = make_loader(dataset, batch_size=batch_size, shuffle=False, num_workers=num_workers)
    embeddings: List[LabeledEmbedding] = []
    for images, _, indices in tqdm(loader, desc=f"[Eval] embedding {manifest.split}", leave=False):
        vectors = model.embed(images.to(device)).cpu().double().numpy()
        for vector, index in zip(vectors, indices.tolist()):
            embeddings.append(
                LabeledEmbedding.normalized(
                    manifest.identity_name(index), vector, source=manifest.samples[index][0]
                )
            )
    return embeddings


def evaluate_identification(
    probes: Sequence[LabeledEmbedding],
    distractors: Sequence[LabeledEmbedding],
    ks: Sequence[int] = (1, 5, 10),
    k_max: Optional[int] = None,
) -> IdentificationReport:
    """
    Run the protocol and score it.

    Args:
        probes: Probe-pool embeddings (grouped by identity internally)
        distractors: Distractor embeddings
        ks: Ranks reported in the summary as rank{k}
        k_max: CMC length; defaults to the gallery size (at least max(ks))

    Returns:
        IdentificationReport whose summary has exactly rank{k} for k in ks plus num_probes
    """
    if not ks or min(ks) < 1:
        raise ValueError(f"ks must be non-empty positive ranks, got {list(ks)}")
    excluded: List[str] = []
    trials = build_protocol(group_by_identity(probes), distractors, excluded=excluded)
    if excluded:
        print(f"[Eval] ⚠️ {len(excluded)} identity(ies) skipped for having < 2 probe images")
    if not trials:
        raise ValueError("No identity has >= 2 probe images; nothing to evaluate")

    if k_max is None:
        k_max = max(len(distractors) + 1, max(ks))
    curve = cmc(trials, k_max)
    positions = match_positions(trials)
    summary: Dict[str, float] = {f"rank{k}": float(np.mean(positions <= k)) for k in ks}
    summary["num_probes"] = len(trials)
    print(f"[Eval] ✅ {len(trials)} probes: " + ", ".join(f"Rank@{k}={summary[f'rank{k}']:.4f}" for k in ks))
    return IdentificationReport(summary=summary, cmc=curve, excluded_identities=excluded)

"""
Stage schedule and total loss.

    zeta = zeta_cls + lambda * sum(active stage jigsaw terms)

A stage term is the batch mean of ||X_hat - X_out||_F^2, optionally divided by
C'_s x M x M (jigsaw.reduction = mean).

Stage modes:
  - stage_wise_progressive: stage (iteration mod S) + 1, one term per iteration
  - single_stage:           always the configured stage
  - simultaneous:           all S stages every iteration
  - disabled:               no jigsaw term (also used when lambda == 0)
"""

import math
from typing import Dict, List, Mapping, Optional, Sequence, Union

import torch

from core.errors import NumericAbort

JigsawTerms = Union[Mapping[int, torch.Tensor], Sequence[torch.Tensor]]


def progressive_stage_selector(iteration: int, S: int) -> int:
    """1-based stage whose jigsaw is active at `iteration`."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    return iteration % S + 1


def active_stages(
    stage_mode: str,
    iteration: int,
    S: int,
    stage: Optional[int] = None,
    lambda_weight: float = 0.1,
) -> List[int]:
    """Stages whose jigsaw loss is computed at this iteration (ascending)."""
    if stage_mode == "disabled" or lambda_weight == 0.0:
        return []
    if stage_mode == "stage_wise_progressive":
        return [progressive_stage_selector(iteration, S)]
    if stage_mode == "single_stage":
        if stage is None or not 1 <= stage <= S:
            raise ValueError(f"single_stage mode needs a stage in [1, {S}], got {stage}")
        return [stage]
    if stage_mode == "simultaneous":
        return list(range(1, S + 1))
    raise ValueError(f"Unknown stage_mode: {stage_mode}")


def stage_term(per_sample: torch.Tensor, target_size: int, reduction: str = "sum") -> torch.Tensor:
    """
    Batch term of one stage from its per-sample squared-Frobenius losses.

    "sum" keeps the batch mean as is; "mean" also divides by the number of
    target entries, giving a mean squared error per entry.
    """
    if reduction not in ("sum", "mean"):
        raise ValueError(f"Unknown reduction: {reduction}")
    term = per_sample.mean()
    return term / target_size if reduction == "mean" else term


def _as_items(jigsaw_losses: JigsawTerms) -> Dict[int, torch.Tensor]:
    if isinstance(jigsaw_losses, Mapping):
        return {int(k): torch.as_tensor(v) for k, v in jigsaw_losses.items()}
    return {i: torch.as_tensor(v) for i, v in enumerate(jigsaw_losses, start=1)}


def total_loss(
    cls_loss: torch.Tensor,
    jigsaw_losses: JigsawTerms,
    lambda_weight: float,
) -> torch.Tensor:
    """
    Combine the classification loss with the active jigsaw terms.

    Args:
        cls_loss: Scalar classification loss
        jigsaw_losses: {stage: scalar} or a plain list of scalars
        lambda_weight: Trade-off factor lambda >= 0

    Returns:
        Scalar total loss; exactly `cls_loss` when lambda == 0 or no term is active

    Raises:
        NumericAbort: any non-finite input, naming the offending stage
    """
    cls_loss = torch.as_tensor(cls_loss)
    if not math.isfinite(lambda_weight) or lambda_weight < 0:
        raise ValueError(f"lambda must be finite and >= 0, got {lambda_weight}")
    if not torch.isfinite(cls_loss).all():
        raise NumericAbort("Non-finite classification loss", {"term": "loss_cls", "value": float(cls_loss.detach())})

    terms = _as_items(jigsaw_losses)
    for stage, term in terms.items():
        if not torch.isfinite(term).all():
            raise NumericAbort(
                f"Non-finite jigsaw loss at stage {stage}",
                {"term": "loss_jig", "stage": stage, "value": float(term.detach())},
            )
        if (term < 0).any():
            raise ValueError(f"Jigsaw loss at stage {stage} is negative: {float(term.detach())}")

    if lambda_weight == 0.0 or not terms:
        return cls_loss
    return cls_loss + lambda_weight * torch.stack(list(terms.values())).sum()

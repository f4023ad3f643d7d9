"""
core/graph_jigsaw/jigsaw_decoder.py
-------------------------------------------------
Jigsaw decoding: recover the layout from encoded nodes
with attention-weighted graph propagation, and score it
against the pooled stage output.

  logits_ij = LeakyReLU_0.2(a · [W^a z_i ‖ W^a z_j] + c)
  α_ij      = softmax over the lattice neighbours of i
  decode    = T_dec propagation layers with α in place
              of the normalised adjacency (last layer affine)
  ζ_jig     = ||decode - P(X_out)||_F^2, target detached

Attention is computed once from the encoded nodes and
reused by every decode layer.
-------------------------------------------------
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from .jigsaw_encoder import JigsawEncoder, encode, propagate
from .shuffled_graph import (
    Permutation,
    PooledGrid,
    StageFeatureMap,
    StageKind,
    build_shuffled_graph,
    pool_to_grid,
    sample_permutation,
)

LEAKY_SLOPE = 0.2


@dataclass
class JigsawRecord:
    """Per-stage bundle produced by one jigsaw run."""

    stage_index: int
    shuffled_input: PooledGrid
    target: PooledGrid
    reconstruction: torch.Tensor
    loss: torch.Tensor
    permutation: Optional[Permutation] = None


class JigsawDecoder(nn.Module):
    """
    Learnable parameters of the jigsaw decoding.

    Args:
        in_channels: Width d' of the encoded node features
        out_channels: Channel count C'_s of the stage output (the target)
        iterations: Number of decode layers T_dec
        attention_dim: Width d_a of the attention projection (defaults to d')
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        iterations: int = 1,
        attention_dim: Optional[int] = None,
    ):
        super().__init__()
        if iterations < 1:
            raise ValueError(f"Decoder needs at least one iteration, got {iterations}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.iterations = iterations
        self.attention_dim = attention_dim or in_channels

        bound = 1.0 / math.sqrt(in_channels)
        self.attention_proj = nn.Parameter(torch.empty(self.attention_dim, in_channels).uniform_(-bound, bound))
        self.scorer = nn.Linear(2 * self.attention_dim, 1)
        nn.init.uniform_(self.scorer.weight, -1.0 / math.sqrt(2 * self.attention_dim), 1.0 / math.sqrt(2 * self.attention_dim))
        nn.init.zeros_(self.scorer.bias)

        widths = [in_channels] * iterations + [out_channels]
        self.weights = nn.ParameterList()
        for d_in, d_out in zip(widths[:-1], widths[1:]):
            limit = 1.0 / math.sqrt(d_in)
            self.weights.append(nn.Parameter(torch.empty(d_out, d_in).uniform_(-limit, limit)))
        self.biases = nn.ParameterList([nn.Parameter(torch.zeros(d)) for d in widths[1:]])

    def forward(self, z: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        """Decode (…, d', N) encodings into (…, C', M, M) reconstructions."""
        attn = normalize_attention(attention_logits(z, self), adjacency)
        return decode(z, attn, self)


# ------------------------------------------------------------
# OPERATIONS
# ------------------------------------------------------------

def attention_logits(z: torch.Tensor, params: JigsawDecoder) -> torch.Tensor:
    """
    Pairwise attention logits between encoded nodes.

    The single-layer scorer on the concatenation [h_i ‖ h_j] splits
    into a source term a_1·h_i and a destination term a_2·h_j, so the
    (N, N) matrix is built without materialising the pairs.

    Args:
        z: (d', N) or (B, d', N) encoded node features

    Returns:
        (N, N) or (B, N, N) logits; generally asymmetric
    """
    if z.shape[-2] != params.in_channels:
        raise ValueError(f"Decoder expects {params.in_channels}-dim encodings, got {z.shape[-2]}")
    h = params.attention_proj @ z
    a_src, a_dst = params.scorer.weight[0].split(params.attention_dim)
    src = torch.einsum("d,...dn->...n", a_src, h)
    dst = torch.einsum("d,...dn->...n", a_dst, h)
    scores = src.unsqueeze(-1) + dst.unsqueeze(-2) + params.scorer.bias[0]
    return F.leaky_relu(scores, negative_slope=LEAKY_SLOPE)


def normalize_attention(logits: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
    """
    Softmax of each row over the node's lattice neighbours only.

    Non-neighbours are excluded before normalisation and are exactly
    zero afterwards; rows are shifted by their max before exp().
    """
    if logits.shape[-2:] != adjacency.shape:
        raise ValueError(f"Logits {tuple(logits.shape)} do not match adjacency {tuple(adjacency.shape)}")
    support = adjacency > 0
    empty = torch.nonzero(~support.any(dim=-1)).flatten().tolist()
    if empty:
        raise ValueError(f"Attention undefined for nodes without neighbours: {empty}")
    masked = logits.masked_fill(~support, float("-inf"))
    shifted = masked - masked.amax(dim=-1, keepdim=True).detach()
    weights = shifted.exp() * support
    return weights / weights.sum(dim=-1, keepdim=True)


def decode(z: torch.Tensor, attn: torch.Tensor, params: JigsawDecoder) -> torch.Tensor:
    """
    Attention-weighted deconvolution back to the M x M grid.

    Hidden layers use ReLU; the final layer is affine so
    reconstructions can match negative targets.

    Returns:
        (C', M, M) or (B, C', M, M) reconstruction in row-major order
    """
    h = z
    last = len(params.weights) - 1
    for t, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = propagate(h, attn, w, b)
        if t < last:
            h = F.relu(h)
    M = math.isqrt(h.shape[-1])
    if M * M != h.shape[-1]:
        raise ValueError(f"{h.shape[-1]} nodes do not form a square grid")
    return h.reshape(*h.shape[:-1], M, M)


def jigsaw_loss(reconstruction: torch.Tensor, target: Union[PooledGrid, torch.Tensor]) -> torch.Tensor:
    """
    Squared Frobenius distance; the target is treated as a constant.

    Example:
        >>> jigsaw_loss(torch.ones(2, 2, 2), torch.zeros(2, 2, 2))
        tensor(8.)
    """
    target_data = target.data if isinstance(target, PooledGrid) else target
    if reconstruction.shape != target_data.shape:
        raise ValueError(f"Reconstruction {tuple(reconstruction.shape)} does not match target {tuple(target_data.shape)}")
    return (reconstruction - target_data.detach()).pow(2).sum()


def run_stage_jigsaw(
    x_in: StageFeatureMap,
    x_out: StageFeatureMap,
    M: int,
    enc: JigsawEncoder,
    dec: JigsawDecoder,
    rng: Optional[torch.Generator] = None,
    permutation: Optional[Permutation] = None,
) -> JigsawRecord:
    """
    Full jigsaw pipeline for one sample at one stage.

    Args:
        x_in: Stage input (kind=stage_input)
        x_out: Stage output of the same stage (kind=stage_output)
        M: Grid side length
        enc, dec: Stage encoder / decoder parameters
        rng: Random source for the permutation draw
        permutation: Explicit permutation (skips the draw)

    Returns:
        JigsawRecord with the reconstruction and its loss
    """
    if x_in.kind is not StageKind.STAGE_INPUT or x_out.kind is not StageKind.STAGE_OUTPUT:
        raise ValueError("run_stage_jigsaw needs a stage_input and a stage_output feature map")
    if x_in.stage_index != x_out.stage_index:
        raise ValueError(f"Stage mismatch: input from stage {x_in.stage_index}, output from {x_out.stage_index}")

    p = permutation if permutation is not None else sample_permutation(M, rng)
    graph = build_shuffled_graph(x_in, M, p)
    target = pool_to_grid(x_out, M)

    reconstruction = dec(encode(graph, enc), graph.adjacency)
    return JigsawRecord(
        stage_index=x_in.stage_index,
        shuffled_input=PooledGrid(graph.attributes.reshape(-1, M, M)),
        target=target,
        reconstruction=reconstruction,
        loss=jigsaw_loss(reconstruction, target),
        permutation=p,
    )

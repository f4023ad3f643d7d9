"""
core/graph_jigsaw/jigsaw_encoder.py
-------------------------------------------------
Jigsaw encoding: T_enc rounds of neighbour aggregation
over the shuffled graph,

    z_i <- ReLU(W · Σ_j Â_ij z_j + b),   Â = D^-1/2 A D^-1/2

Node features are laid out as (d, N) columns, or
(B, d, N) for a batch of graphs sharing one adjacency.
-------------------------------------------------
"""

import math
from typing import List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .shuffled_graph import ShuffledGraph, normalize_adjacency


def propagate(z: torch.Tensor, weights: torch.Tensor, w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    Affine graph propagation  out[:, i] = w · Σ_j weights[i, j] z[:, j] + b.

    Args:
        z: (d_in, N) or (B, d_in, N) node features
        weights: (N, N) propagation matrix (normalised adjacency or attention),
                 or (B, N, N) for per-sample matrices
        w: (d_out, d_in) projection
        b: (d_out,) bias
    """
    if z.shape[-1] != weights.shape[-1] or weights.shape[-1] != weights.shape[-2]:
        raise ValueError(f"Node features {tuple(z.shape)} do not match propagation matrix {tuple(weights.shape)}")
    if w.shape[-1] != z.shape[-2]:
        raise ValueError(f"Projection {tuple(w.shape)} does not match feature width {z.shape[-2]}")
    if b.shape[-1] != w.shape[0]:
        raise ValueError(f"Bias {tuple(b.shape)} does not match projection {tuple(w.shape)}")
    aggregated = z @ weights.transpose(-1, -2)
    return w @ aggregated + b[:, None]


def gcn_layer(z: torch.Tensor, a_hat: torch.Tensor, w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    One encoding iteration: ReLU(w · Σ_j a_hat[i, j] z[:, j] + b).

    Example:
        >>> a_hat = normalize_adjacency(grid_adjacency(2))
        >>> gcn_layer(torch.ones(3, 4), a_hat, torch.eye(3), torch.zeros(3))
        tensor([[1., 1., 1., 1.], ...])
    """
    return F.relu(propagate(z, a_hat, w, b))


def _fan_in_uniform(d_out: int, d_in: int) -> nn.Parameter:
    bound = 1.0 / math.sqrt(d_in)
    return nn.Parameter(torch.empty(d_out, d_in).uniform_(-bound, bound))


class JigsawEncoder(nn.Module):
    """
    Learnable parameters of the jigsaw encoding (W^(t), b^(t) for t = 1..T_enc).

    Hidden widths default to the stage's input channel count, so
    d_0 = ... = d_T = C_s.

    Example:
        >>> encoder = JigsawEncoder(in_channels=16, iterations=1)
        >>> z = encoder(graph.attributes, graph.adjacency)   # (16, M²)
    """

    def __init__(self, in_channels: int, iterations: int = 1, widths: Optional[Sequence[int]] = None):
        super().__init__()
        if iterations < 1:
            raise ValueError(f"Encoder needs at least one iteration, got {iterations}")
        widths = list(widths) if widths is not None else [in_channels] * iterations
        if len(widths) != iterations:
            raise ValueError(f"Expected {iterations} hidden widths, got {len(widths)}")

        self.in_channels = in_channels
        self.iterations = iterations
        self.widths: List[int] = [in_channels] + widths
        self.weights = nn.ParameterList(
            [_fan_in_uniform(d_out, d_in) for d_in, d_out in zip(self.widths[:-1], self.widths[1:])]
        )
        self.biases = nn.ParameterList([nn.Parameter(torch.zeros(d)) for d in self.widths[1:]])

    @property
    def out_channels(self) -> int:
        return self.widths[-1]

    def forward(self, attributes: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        if attributes.shape[-2] != self.in_channels:
            raise ValueError(f"Encoder expects {self.in_channels} input channels, got {attributes.shape[-2]}")
        a_hat = normalize_adjacency(adjacency)
        z = attributes
        for w, b in zip(self.weights, self.biases):
            z = gcn_layer(z, a_hat, w, b)
        return z


def encode(g: ShuffledGraph, params: JigsawEncoder) -> torch.Tensor:
    """
    Encode a shuffled graph.

    Returns:
        (d_T, M²) encoded node features; after t iterations a node's
        receptive field is its t-hop grid neighbourhood
    """
    return params(g.attributes, g.adjacency)

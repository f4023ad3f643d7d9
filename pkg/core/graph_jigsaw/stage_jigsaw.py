"""
core/graph_jigsaw/stage_jigsaw.py
-------------------------------------------------
Training-time attachment of the jigsaw to every
backbone stage.

StageJigsaw runs the encode/attend/decode pipeline on
a whole batch with an independent permutation per
sample. GraphJigsaw holds one StageJigsaw per stage and
is never consulted at inference time.
-------------------------------------------------
"""

from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from core.errors import ConfigError

from .jigsaw_decoder import JigsawDecoder, JigsawRecord
from .jigsaw_encoder import JigsawEncoder
from .shuffled_graph import Permutation, PooledGrid, adaptive_grid_pool, grid_adjacency, sample_permutation, shuffle_nodes


class StageJigsaw(nn.Module):
    """
    Encoder/decoder pair for one stage.

    Args:
        stage_index: 1-based stage number
        in_channels: C_s, channels of the stage input
        out_channels: C'_s, channels of the stage output
        M: Grid side length
        t_enc, t_dec: Encode / decode iterations
    """

    def __init__(
        self,
        stage_index: int,
        in_channels: int,
        out_channels: int,
        M: int = 3,
        t_enc: int = 1,
        t_dec: int = 1,
        attention_dim: Optional[int] = None,
    ):
        super().__init__()
        self.stage_index = stage_index
        self.M = M
        self.out_channels = out_channels
        self.encoder = JigsawEncoder(in_channels, iterations=t_enc)
        self.decoder = JigsawDecoder(self.encoder.out_channels, out_channels, iterations=t_dec, attention_dim=attention_dim)
        self.register_buffer("adjacency", grid_adjacency(M), persistent=False)

    @property
    def target_size(self) -> int:
        """Entries of one reconstruction target, C'_s x M x M."""
        return self.out_channels * self.M * self.M

    def forward(
        self,
        x_in: torch.Tensor,
        x_out: torch.Tensor,
        generator: Optional[torch.Generator] = None,
        permutations: Optional[Sequence[Permutation]] = None,
    ) -> Tuple[torch.Tensor, JigsawRecord]:
        """
        Args:
            x_in: (B, C, H, W) stage inputs
            x_out: (B, C', H', W') stage outputs
            generator: Random source for the per-sample permutations
            permutations: Explicit per-sample permutations (skips the draw)

        Returns:
            (B,) per-sample squared-Frobenius losses and the record of sample 0
        """
        batch = x_in.shape[0]
        n = self.M * self.M
        if permutations is None:
            permutations = [sample_permutation(self.M, generator) for _ in range(batch)]
        if len(permutations) != batch:
            raise ValueError(f"Got {len(permutations)} permutations for a batch of {batch}")
        forward = torch.stack([p.forward for p in permutations])

        pooled = adaptive_grid_pool(x_in, self.M).reshape(batch, -1, n)
        shuffled = shuffle_nodes(pooled, forward)
        target = adaptive_grid_pool(x_out, self.M).detach()

        adjacency = self.adjacency.to(dtype=x_in.dtype)
        encoded = self.encoder(shuffled, adjacency)
        reconstruction = self.decoder(encoded, adjacency)

        losses = (reconstruction - target).pow(2).flatten(1).sum(dim=1)
        record = JigsawRecord(
            stage_index=self.stage_index,
            shuffled_input=PooledGrid(shuffled[0].detach().reshape(-1, self.M, self.M)),
            target=PooledGrid(target[0]),
            reconstruction=reconstruction[0].detach(),
            loss=losses[0].detach(),
            permutation=permutations[0],
        )
        return losses, record


class GraphJigsaw(nn.Module):
    """
    One StageJigsaw per backbone stage.

    Example:
        >>> jigsaw = GraphJigsaw.from_backbone(backbone_config, M=3)
        >>> losses, record = jigsaw.stage(2)(x_in, x_out, generator)
    """

    def __init__(
        self,
        in_channels: Sequence[int],
        out_channels: Sequence[int],
        M: int = 3,
        t_enc: int = 1,
        t_dec: int = 1,
        attention_dim: Optional[int] = None,
    ):
        super().__init__()
        if len(in_channels) != len(out_channels):
            raise ConfigError("GraphJigsaw needs one input and one output width per stage")
        if M < 2:
            raise ConfigError(f"jigsaw.M must be >= 2, got {M}")
        self.M = M
        self.stages = nn.ModuleList(
            [
                StageJigsaw(s + 1, c_in, c_out, M=M, t_enc=t_enc, t_dec=t_dec, attention_dim=attention_dim)
                for s, (c_in, c_out) in enumerate(zip(in_channels, out_channels))
            ]
        )

    @classmethod
    def from_backbone(cls, config, M: int = 3, t_enc: int = 1, t_dec: int = 1, attention_dim: Optional[int] = None) -> "GraphJigsaw":
        jigsaw = cls(config.stage_input_channels(), list(config.stage_widths), M=M, t_enc=t_enc, t_dec=t_dec, attention_dim=attention_dim)
        jigsaw.check_fits(config.stage_shapes())
        return jigsaw

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def stage(self, stage_index: int) -> StageJigsaw:
        if not 1 <= stage_index <= self.num_stages:
            raise ValueError(f"Stage index {stage_index} outside [1, {self.num_stages}]")
        return self.stages[stage_index - 1]

    def check_fits(self, stage_shapes: List[Dict[str, Tuple[int, int]]]) -> None:
        """Reject grid sizes larger than any stage's input or output map."""
        for s, shapes in enumerate(stage_shapes, start=1):
            for side, (h, w) in shapes.items():
                if self.M > min(h, w):
                    raise ConfigError(
                        f"jigsaw.M={self.M} does not fit stage {s} {side} of size {h}x{w}; "
                        "lower M or raise the input resolution"
                    )

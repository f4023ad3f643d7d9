"""
core/graph_jigsaw/shuffled_graph.py
-------------------------------------------------
Jigsaw puzzle construction on a stage feature map:

  1. pool the stage input to an M x M grid
  2. shuffle the grid cells with a random permutation
  3. define the 4-neighbourhood lattice graph over the
     shuffled cells (the "shuffled graph")

Conventions:
  - Row-major positions everywhere: p = i * M + j
  - Pooling bin b covers rows [floor(b*H/M), floor((b+1)*H/M))
  - Adjacency has no diagonals and no self-loops
-------------------------------------------------
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import torch


class StageKind(str, Enum):
    """Which side of a backbone stage a feature map was captured on."""

    STAGE_INPUT = "stage_input"
    STAGE_OUTPUT = "stage_output"


# ------------------------------------------------------------
# DOMAIN TYPES
# ------------------------------------------------------------

@dataclass
class StageFeatureMap:
    """
    A (C, H, W) feature tensor tagged with its stage index.

    Example:
        >>> x = StageFeatureMap(torch.randn(16, 56, 56), stage_index=1)
        >>> x.kind
        <StageKind.STAGE_INPUT: 'stage_input'>
    """

    data: torch.Tensor
    stage_index: int
    kind: StageKind = StageKind.STAGE_INPUT

    def __post_init__(self):
        if self.data.dim() != 3 or min(self.data.shape) < 1:
            raise ValueError(f"StageFeatureMap expects a non-empty (C, H, W) tensor, got {tuple(self.data.shape)}")
        if self.stage_index < 1:
            raise ValueError(f"stage_index must be >= 1, got {self.stage_index}")
        if not torch.isfinite(self.data).all():
            raise ValueError(f"Stage {self.stage_index} feature map contains non-finite entries")
        self.kind = StageKind(self.kind)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass
class PooledGrid:
    """A (C, M, M) grid obtained by adaptive average pooling."""

    data: torch.Tensor

    def __post_init__(self):
        if self.data.dim() != 3 or self.data.shape[1] != self.data.shape[2]:
            raise ValueError(f"PooledGrid expects a (C, M, M) tensor, got {tuple(self.data.shape)}")
        if self.data.shape[1] < 2:
            raise ValueError("PooledGrid needs M >= 2 (a 1x1 grid admits no puzzle)")

    @property
    def M(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass
class Permutation:
    """
    Bijection on the M*M row-major grid positions.

    `forward[q]` is the input position whose cell lands at output
    position q; `inverse` undoes it.
    """

    forward: torch.Tensor
    inverse: torch.Tensor

    def __post_init__(self):
        n = self.forward.numel()
        expected = torch.arange(n, device=self.forward.device)
        if not torch.equal(torch.sort(self.forward).values, expected):
            raise ValueError("Permutation.forward is not a bijection on [0, n)")
        if not torch.equal(self.inverse[self.forward], expected):
            raise ValueError("Permutation.inverse does not invert forward")

    @classmethod
    def from_forward(cls, forward: torch.Tensor) -> "Permutation":
        forward = torch.as_tensor(forward, dtype=torch.long)
        return cls(forward=forward, inverse=torch.argsort(forward))

    @classmethod
    def identity(cls, M: int) -> "Permutation":
        return cls.from_forward(torch.arange(M * M))

    @property
    def size(self) -> int:
        return self.forward.numel()

    def inverted(self) -> "Permutation":
        return Permutation(forward=self.inverse.clone(), inverse=self.forward.clone())

    def compose(self, other: "Permutation") -> "Permutation":
        """
        Return self ∘ other, so that
        shuffle_grid(g, p1.compose(p2)) == shuffle_grid(shuffle_grid(g, p2), p1).
        """
        if other.size != self.size:
            raise ValueError(f"Cannot compose permutations of sizes {self.size} and {other.size}")
        return Permutation.from_forward(other.forward[self.forward])


@dataclass
class ShuffledGraph:
    """
    The shuffled graph G = (V, A, Z).

    Attributes:
        adjacency: (M², M²) binary lattice adjacency
        attributes: (C, M²) node features; column i is shuffled position i
        permutation: generating permutation, kept for diagnostics only
        M: grid side length
    """

    adjacency: torch.Tensor
    attributes: torch.Tensor
    permutation: Permutation
    M: int

    @property
    def num_nodes(self) -> int:
        return self.M * self.M

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum().item()) // 2

    def is_connected(self) -> bool:
        n = self.num_nodes
        reach = torch.eye(n, dtype=torch.float64) + self.adjacency.to(torch.float64).cpu()
        return bool((torch.linalg.matrix_power(reach, n - 1) > 0).all())

    def validate(self) -> None:
        """Check the structural invariants; raise ValueError on the first violation."""
        a = self.adjacency
        if a.shape != (self.num_nodes, self.num_nodes):
            raise ValueError(f"adjacency shape {tuple(a.shape)} does not match M={self.M}")
        if not torch.equal(a, a.T):
            raise ValueError("adjacency is not symmetric")
        if torch.diagonal(a).any():
            raise ValueError("adjacency has self-loops")
        if not ((a == 0) | (a == 1)).all():
            raise ValueError("adjacency is not binary")
        if self.num_edges != 2 * self.M * (self.M - 1):
            raise ValueError(f"expected {2 * self.M * (self.M - 1)} edges, got {self.num_edges}")
        if self.attributes.shape[1] != self.num_nodes:
            raise ValueError("attributes must have one column per node")
        if not self.is_connected():
            raise ValueError("shuffled graph is not connected")


# ------------------------------------------------------------
# OPERATIONS
# ------------------------------------------------------------

def _bin_matrix(size: int, M: int, dtype: torch.dtype, device: torch.device) -> torch.Tensor:
    """(M, size) averaging matrix; row b averages [floor(b*size/M), floor((b+1)*size/M))."""
    weights = torch.zeros(M, size, dtype=dtype, device=device)
    for b in range(M):
        start, stop = (b * size) // M, ((b + 1) * size) // M
        weights[b, start:stop] = 1.0 / (stop - start)
    return weights


def adaptive_grid_pool(x: torch.Tensor, M: int) -> torch.Tensor:
    """
    Average-pool the last two dims of `x` (..., H, W) to (..., M, M).

    Bins partition the rows/columns into M contiguous ranges whose sizes
    differ by at most one. Differentiable; works on batches.
    """
    if M < 2:
        raise ValueError(f"Grid size M must be >= 2, got {M}")
    H, W = x.shape[-2], x.shape[-1]
    if M > min(H, W):
        raise ValueError(f"Grid size M={M} exceeds feature map size {H}x{W}; a puzzle cell would be empty")
    rows = _bin_matrix(H, M, x.dtype, x.device)
    cols = _bin_matrix(W, M, x.dtype, x.device)
    return torch.einsum("ih,...hw,jw->...ij", rows, x, cols)


def pool_to_grid(x: StageFeatureMap, M: int) -> PooledGrid:
    """
    Adaptive average pooling of a stage feature map to an M x M grid.

    Args:
        x: Stage feature map (C, H, W)
        M: Grid side length, 2 <= M <= min(H, W)

    Returns:
        PooledGrid of shape (C, M, M)

    Example:
        >>> x = StageFeatureMap(torch.arange(16.).view(1, 4, 4), stage_index=1)
        >>> pool_to_grid(x, 2).data
        tensor([[[ 2.5000,  4.5000],
                 [10.5000, 12.5000]]])
    """
    return PooledGrid(adaptive_grid_pool(x.data, M))


def sample_permutation(M: int, rng: Optional[torch.Generator] = None) -> Permutation:
    """
    Draw a uniformly random permutation of the M*M grid positions.

    Args:
        M: Grid side length (>= 2)
        rng: Seeded torch.Generator; successive calls on the same
             generator reproduce the same sequence

    Returns:
        Permutation with its inverse
    """
    if M < 2:
        raise ValueError(f"Grid size M must be >= 2, got {M}")
    forward = torch.randperm(M * M, generator=rng)
    return Permutation.from_forward(forward)


def shuffle_nodes(flat: torch.Tensor, forward: torch.Tensor) -> torch.Tensor:
    """
    Move node columns of `flat` (..., C, N): output column q = input column forward[q].

    `forward` is (N,) for a shared permutation or (B, N) for one permutation
    per sample of a (B, C, N) batch.
    """
    if forward.shape[-1] != flat.shape[-1]:
        raise ValueError(f"Permutation covers {forward.shape[-1]} positions, grid has {flat.shape[-1]}")
    if forward.dim() == 1:
        return flat.index_select(-1, forward.to(flat.device))
    index = forward.to(flat.device).unsqueeze(1).expand(-1, flat.shape[1], -1)
    return torch.gather(flat, -1, index)


def shuffle_grid(g: PooledGrid, p: Permutation) -> PooledGrid:
    """
    Apply one spatial permutation to every channel of a grid.

    Example:
        >>> g = PooledGrid(torch.tensor([[[1., 2.], [3., 4.]]]))
        >>> shuffle_grid(g, Permutation.from_forward(torch.tensor([3, 2, 1, 0]))).data
        tensor([[[4., 3.],
                 [2., 1.]]])
    """
    if p.size != g.M * g.M:
        raise ValueError(f"Permutation of size {p.size} does not match a {g.M}x{g.M} grid")
    flat = g.data.reshape(g.channels, g.M * g.M)
    return PooledGrid(shuffle_nodes(flat, p.forward).reshape(g.channels, g.M, g.M))


@lru_cache(maxsize=None)
def _lattice(M: int) -> torch.Tensor:
    idx = torch.arange(M * M)
    rows, cols = idx // M, idx % M
    manhattan = (rows[:, None] - rows[None, :]).abs() + (cols[:, None] - cols[None, :]).abs()
    return manhattan == 1


def grid_adjacency(M: int, dtype: Optional[torch.dtype] = None) -> torch.Tensor:
    """
    4-neighbourhood adjacency of the M x M row-major grid.

    Returns:
        (M², M²) symmetric 0/1 matrix with a zero diagonal
    """
    if M < 2:
        raise ValueError(f"Grid size M must be >= 2, got {M}")
    return _lattice(M).to(dtype or torch.get_default_dtype())


def build_shuffled_graph(x: StageFeatureMap, M: int, p: Permutation) -> ShuffledGraph:
    """
    Pool, shuffle and flatten a stage input into its shuffled graph.

    The adjacency depends only on M; the permutation only moves the
    node attributes.
    """
    shuffled = shuffle_grid(pool_to_grid(x, M), p)
    return ShuffledGraph(
        adjacency=grid_adjacency(M, dtype=x.data.dtype).to(x.data.device),
        attributes=shuffled.data.reshape(shuffled.channels, M * M),
        permutation=p,
        M=M,
    )


def normalize_adjacency(a: torch.Tensor) -> torch.Tensor:
    """
    Symmetric degree normalisation D^{-1/2} A D^{-1/2}.

    Args:
        a: Symmetric, non-negative adjacency; every node needs degree >= 1

    Returns:
        Normalised adjacency with the same zero pattern
    """
    if a.dim() != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"Adjacency must be square, got {tuple(a.shape)}")
    if (a < 0).any():
        raise ValueError("Adjacency must be non-negative")
    if not torch.allclose(a, a.T):
        raise ValueError("Adjacency must be symmetric")
    degree = a.sum(dim=1)
    isolated = torch.nonzero(degree <= 0).flatten().tolist()
    if isolated:
        raise ValueError(f"Normalisation undefined for zero-degree nodes {isolated}")
    return a / torch.sqrt(degree[:, None] * degree[None, :])

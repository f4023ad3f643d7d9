"""
GraphJigsaw - jigsaw puzzles on intermediate feature maps
==========================================================

Stage feature map -> pooled M x M grid -> shuffled graph
-> graph-convolutional encoding -> masked-attention decoding
-> squared-Frobenius loss against the pooled stage output.
"""

from .jigsaw_decoder import (
    JigsawDecoder,
    JigsawRecord,
    attention_logits,
    decode,
    jigsaw_loss,
    normalize_attention,
    run_stage_jigsaw,
)
from .jigsaw_encoder import JigsawEncoder, encode, gcn_layer
from .shuffled_graph import (
    Permutation,
    PooledGrid,
    ShuffledGraph,
    StageFeatureMap,
    StageKind,
    build_shuffled_graph,
    grid_adjacency,
    normalize_adjacency,
    pool_to_grid,
    sample_permutation,
    shuffle_grid,
)
from .stage_jigsaw import GraphJigsaw, StageJigsaw

__all__ = [
    'StageFeatureMap', 'StageKind', 'PooledGrid', 'Permutation', 'ShuffledGraph',
    'pool_to_grid', 'sample_permutation', 'shuffle_grid', 'grid_adjacency',
    'build_shuffled_graph', 'normalize_adjacency',
    'JigsawEncoder', 'gcn_layer', 'encode',
    'JigsawDecoder', 'JigsawRecord', 'attention_logits', 'normalize_attention',
    'decode', 'jigsaw_loss', 'run_stage_jigsaw',
    'StageJigsaw', 'GraphJigsaw',
]

"""
core package - GraphJigsaw model components
"""

from .backbone import BackboneConfig, JigsawClassifier, ResidualBackbone, StageCapture
from .graph_jigsaw import GraphJigsaw

__all__ = ["BackboneConfig", "ResidualBackbone", "JigsawClassifier", "StageCapture", "GraphJigsaw"]

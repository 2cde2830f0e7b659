"""
DeskAIA Interaction Module
"""
from .block import FeatureSet, BlockParams, block_forward, attention_map
from .structure import IAStack, TraceEntry, build, dense_query, dense_weights, ia_forward, classify

"""Quantization-agnostic optimizations: constant folding, DCE and fusion."""

from .dce import dead_code_elimination
from .fold import fold_constants
from .fuse import check_regions, fuse_ops, region_is_convex

__all__ = ["check_regions", "dead_code_elimination", "fold_constants", "fuse_ops", "region_is_convex"]

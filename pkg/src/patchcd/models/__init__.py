from .attention import CrossAttention, FeedForward
from .backbone import ResidualEncoder, temporal_difference
from .decoder import PyramidDecoder
from .memory import BidirectionalAttentionBlock, MemoryTransformer, init_memory_prototypes
from .network import ChangeDetectionNetwork, ChangeMapHead, build_model
from .pooling import pool_patch_max, pool_pyramid_average
from .tokens import TokenMap

__all__ = [
    "BidirectionalAttentionBlock",
    "ChangeDetectionNetwork",
    "ChangeMapHead",
    "CrossAttention",
    "FeedForward",
    "MemoryTransformer",
    "PyramidDecoder",
    "ResidualEncoder",
    "TokenMap",
    "build_model",
    "init_memory_prototypes",
    "pool_patch_max",
    "pool_pyramid_average",
    "temporal_difference",
]

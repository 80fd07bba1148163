from deskdet.nn.blocks import (
    BlockSpec,
    BottleneckParams,
    C2fParams,
    ConvBlockParams,
    ConvParams,
    CSPParams,
    SPPFParams,
    block_forward,
    block_param_count,
    bottleneck_forward,
    build_block,
    c2f_forward,
    cbs_forward,
    conv_forward,
    csp_forward,
    sppf_forward,
)
from deskdet.nn.module import Module

__all__ = [
    "BlockSpec",
    "BottleneckParams",
    "C2fParams",
    "CSPParams",
    "ConvBlockParams",
    "ConvParams",
    "Module",
    "SPPFParams",
    "block_forward",
    "block_param_count",
    "bottleneck_forward",
    "build_block",
    "c2f_forward",
    "cbs_forward",
    "conv_forward",
    "csp_forward",
    "sppf_forward",
]

from deskdet.attention.bra import (
    BraParams,
    RoutingIndex,
    bra_forward,
    region_merge,
    region_partition,
    topk_routing,
)
from deskdet.attention.factory import AttentionParams, AttentionSpec, attention_forward, build_attention
from deskdet.attention.gates import (
    CAParams,
    CBAMParams,
    ECAParams,
    SEParams,
    ca_forward,
    ca_gates,
    cbam_forward,
    cbam_gates,
    eca_forward,
    eca_gate,
    eca_kernel_size,
    se_forward,
    se_gate,
)

__all__ = [
    "AttentionParams",
    "AttentionSpec",
    "BraParams",
    "CAParams",
    "CBAMParams",
    "ECAParams",
    "RoutingIndex",
    "SEParams",
    "attention_forward",
    "bra_forward",
    "build_attention",
    "ca_forward",
    "ca_gates",
    "cbam_forward",
    "cbam_gates",
    "eca_forward",
    "eca_gate",
    "eca_kernel_size",
    "region_merge",
    "region_partition",
    "se_forward",
    "se_gate",
    "topk_routing",
]

from deskdet.neck.executor import NeckExecutor, build_neck
from deskdet.neck.fusion import FusionNodeParams, fuse_concat, fuse_weighted
from deskdet.neck.graph import ChannelPlan, NeckGraph, NeckNode, infer_shapes
from deskdet.neck.presets import build_preset, preset_bgf, preset_bifpn, preset_fpn_panet

__all__ = [
    "ChannelPlan",
    "FusionNodeParams",
    "NeckExecutor",
    "NeckGraph",
    "NeckNode",
    "build_neck",
    "build_preset",
    "fuse_concat",
    "fuse_weighted",
    "infer_shapes",
    "preset_bgf",
    "preset_bifpn",
    "preset_fpn_panet",
]

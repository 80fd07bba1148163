import logging
from enum import StrEnum
from typing import Self

import numpy as np

from deskdet.exceptions import UnsupportedOptionError

BN_EPS = 1e-3
BN_MOMENTUM = 0.03
BOX_EPS = 1e-7
FUSION_EPS = 1e-4
DEFAULT_REG_MAX = 16

EVAL_CONF_THRESHOLD = 0.001
PREDICT_CONF_THRESHOLD = 0.25
NMS_IOU_THRESHOLD = 0.7
MAX_DETECTIONS = 300

COCO_IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_SAMPLES = 101

CHECKPOINT_VERSION = 1


class _Option(StrEnum):
    @classmethod
    def from_string(cls, value: "str | Self") -> Self:
        """Convert a string to a member, ignoring case and surrounding whitespace."""
        if isinstance(value, cls):
            return value

        formatted_value = value.strip().lower()
        try:
            return cls(formatted_value)
        except ValueError as exc:
            supported = [member.value for member in cls]
            raise UnsupportedOptionError(value, supported) from exc


class Precision(_Option):
    """Floating point precision of tensors."""

    FLOAT32 = "float32"
    FLOAT64 = "float64"

    @property
    def dtype(self) -> np.dtype[np.floating]:
        return np.dtype(np.float32) if self is Precision.FLOAT32 else np.dtype(np.float64)


class PyramidLevel(_Option):
    """Feature pyramid level; Pn is downsampled by 2**n."""

    P2 = "p2"
    P3 = "p3"
    P4 = "p4"
    P5 = "p5"

    @property
    def index(self) -> int:
        return int(self.value[1:])

    @property
    def stride(self) -> int:
        return 2**self.index

    @classmethod
    def from_stride(cls, stride: int) -> "PyramidLevel":
        for level in cls:
            if level.stride == stride:
                return level
        supported = [str(level.stride) for level in cls]
        raise UnsupportedOptionError(str(stride), supported)


class BlockKind(_Option):
    """Composite convolution blocks."""

    CBS = "cbs"
    C2F = "c2f"
    CSP = "csp"
    SPPF = "sppf"


class AttentionKind(_Option):
    """Attention modules that can be placed in the neck."""

    BRA = "bra"
    SE = "se"
    ECA = "eca"
    CBAM = "cbam"
    CA = "ca"
    NONE = "none"

    @property
    def code(self) -> str:
        """Single letter used in ablation tables."""
        return _ATTENTION_CODES[self]


_ATTENTION_CODES = {
    AttentionKind.SE: "S",
    AttentionKind.ECA: "E",
    AttentionKind.CBAM: "C",
    AttentionKind.CA: "A",
    AttentionKind.BRA: "B",
    AttentionKind.NONE: "-",
}


class NeckOp(_Option):
    """Node operations of a neck graph."""

    TAP = "tap"
    IDENTITY = "identity"
    CBS = "cbs"
    CSP = "csp"
    C2F = "c2f"
    UPSAMPLE = "upsample"
    DOWNSAMPLE = "downsample"
    CONCAT = "concat"
    WEIGHTED_SUM = "weighted_sum"
    BRA = "bra"
    SE = "se"
    ECA = "eca"
    CBAM = "cbam"
    CA = "ca"

    @classmethod
    def for_attention(cls, kind: AttentionKind) -> "NeckOp":
        return cls.IDENTITY if kind is AttentionKind.NONE else cls(kind.value)

    @property
    def is_attention(self) -> bool:
        return self in {NeckOp.BRA, NeckOp.SE, NeckOp.ECA, NeckOp.CBAM, NeckOp.CA}


class NeckPreset(_Option):
    """Built-in neck topologies."""

    FPN_PANET = "fpn-panet"
    BIFPN = "bifpn"
    BGF = "bgf"


class IoULossKind(_Option):
    """Box regression loss variants."""

    IOU = "iou"
    GIOU = "giou"
    DIOU = "diou"
    CIOU = "ciou"
    EIOU = "eiou"
    SIOU = "siou"
    WIOU = "wiou"


class ClsLossKind(_Option):
    """Classification loss variants."""

    BCE = "bce"
    VARIFOCAL = "varifocal"


class ImageFormat(_Option):
    """Binary netpbm image formats."""

    PGM = "pgm"
    PPM = "ppm"

    @property
    def magic(self) -> bytes:
        return b"P5" if self is ImageFormat.PGM else b"P6"

    @property
    def channels(self) -> int:
        return 1 if self is ImageFormat.PGM else 3


class LogLevel(_Option):
    """Levels of the deskdet logger."""

    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"

    @property
    def number(self) -> int:
        return logging.getLevelNamesMapping()[self.value.upper()]


class AblationAxis(_Option):
    """Ablation sweeps exposed by the CLI."""

    ATTENTION = "attention"
    NECK = "neck"
    LOSS = "loss"
    ARCHITECTURE = "architecture"

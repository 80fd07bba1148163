"""Custom exceptions for the deskdet package."""

from collections.abc import Sequence
from pathlib import Path


class DeskdetError(Exception):
    """Base class for every error raised by deskdet."""


class UnsupportedOptionError(DeskdetError):
    """Exception raised when a string does not name a supported enum member."""

    def __init__(self, value: str, supported: list[str]) -> None:
        """Initialize the exception.

        Args:
            value: The value that was requested
            supported: List of supported values

        """
        self.value = value
        self.supported = supported

        message = f"'{value}' is not a supported option. Supported options: {', '.join(supported)}"

        super().__init__(message)


class ShapeMismatchError(DeskdetError):
    """Exception raised when operand shapes are incompatible for an op."""


class NonFiniteError(DeskdetError):
    """Exception raised when an op produces NaN or Inf values."""

    def __init__(self, op: str) -> None:
        """Initialize the exception.

        Args:
            op: Name of the op whose output was not finite

        """
        self.op = op

        super().__init__(f"Non-finite values produced by op '{op}'")


class GradGraphError(DeskdetError):
    """Exception raised when a gradient graph is misused."""


class GraphConsumedError(GradGraphError):
    """Exception raised when backward is run twice on the same graph without a reset."""

    def __init__(self) -> None:
        """Initialize the exception."""
        super().__init__("backward already ran on this graph; call reset() before running it again")


class NonScalarLossError(GradGraphError):
    """Exception raised when backward or grad_check receives a non-scalar output."""

    def __init__(self, shape: tuple[int, ...]) -> None:
        """Initialize the exception.

        Args:
            shape: Shape of the offending output

        """
        self.shape = shape

        super().__init__(f"Expected a scalar loss, got shape {shape}")


class NonDeterministicFunctionError(DeskdetError):
    """Exception raised when grad_check sees two different outputs for the same inputs."""

    def __init__(self, first: float, second: float) -> None:
        """Initialize the exception.

        Args:
            first: Output of the first evaluation
            second: Output of the second evaluation

        """
        self.first = first
        self.second = second

        super().__init__(f"Function is not deterministic: {first!r} != {second!r}")


class StateDictMismatchError(DeskdetError):
    """Exception raised when a state dict does not fit a module."""

    def __init__(self, missing: Sequence[str], unexpected: Sequence[str], wrong_shape: Sequence[str]) -> None:
        """Initialize the exception.

        Args:
            missing: Keys the module expects but the state dict lacks
            unexpected: Keys in the state dict the module does not know
            wrong_shape: Keys present in both but with different shapes

        """
        self.missing = list(missing)
        self.unexpected = list(unexpected)
        self.wrong_shape = list(wrong_shape)

        parts = []
        if self.missing:
            parts.append(f"missing: {', '.join(self.missing)}")
        if self.unexpected:
            parts.append(f"unexpected: {', '.join(self.unexpected)}")
        if self.wrong_shape:
            parts.append(f"wrong shape: {', '.join(self.wrong_shape)}")

        super().__init__(f"State dict does not match module ({'; '.join(parts)})")


class BlockConfigError(DeskdetError):
    """Exception raised when a block is configured with inconsistent widths or repeats."""


class RegionDivisibilityError(DeskdetError):
    """Exception raised when a feature map cannot be split into S x S regions."""

    def __init__(self, height: int, width: int, regions: int, node_id: str | None = None) -> None:
        """Initialize the exception.

        Args:
            height: Height of the feature map
            width: Width of the feature map
            regions: Region grid size S
            node_id: Optional neck node the map belongs to

        """
        self.height = height
        self.width = width
        self.regions = regions
        self.node_id = node_id

        where = f" at node '{node_id}'" if node_id else ""
        message = f"Feature map {height}x{width}{where} is not divisible into {regions}x{regions} regions"

        super().__init__(message)


class RoutingError(DeskdetError):
    """Exception raised when region routing is asked for an impossible number of regions."""


class NeckGraphError(DeskdetError):
    """Base class for neck graph validation failures."""


class GraphStructureError(NeckGraphError):
    """Exception raised for unknown ids, duplicate ids or wrong input arity."""


class CycleError(NeckGraphError):
    """Exception raised when the neck graph has a cycle."""

    def __init__(self, node_ids: Sequence[str]) -> None:
        """Initialize the exception.

        Args:
            node_ids: Nodes that could not be ordered

        """
        self.node_ids = list(node_ids)

        super().__init__(f"Neck graph has a cycle through: {', '.join(self.node_ids)}")


class SpatialMismatchError(NeckGraphError):
    """Exception raised when feature maps disagree on spatial size."""

    def __init__(self, node_id: str, expected: tuple[int, int], got: tuple[int, int]) -> None:
        """Initialize the exception.

        Args:
            node_id: Node where the mismatch was found
            expected: Expected (height, width)
            got: Actual (height, width)

        """
        self.node_id = node_id
        self.expected = expected
        self.got = got

        super().__init__(f"Spatial mismatch at node '{node_id}': expected {expected}, got {got}")


class ChannelMismatchError(NeckGraphError):
    """Exception raised when channel counts disagree."""

    def __init__(self, node_id: str, reason: str) -> None:
        """Initialize the exception.

        Args:
            node_id: Node where the mismatch was found
            reason: Description of the mismatch

        """
        self.node_id = node_id
        self.reason = reason

        super().__init__(f"Channel mismatch at node '{node_id}': {reason}")


class AnchorConfigError(DeskdetError):
    """Exception raised when strides do not tile the input size."""


class MissingLossStateError(DeskdetError):
    """Exception raised when a stateful regression loss is called without its state."""

    def __init__(self, variant: str) -> None:
        """Initialize the exception.

        Args:
            variant: The loss variant that needs state

        """
        self.variant = variant

        super().__init__(f"Loss variant '{variant}' requires a running state")


class DflTargetRangeError(DeskdetError):
    """Exception raised when a DFL target distance falls outside the bin range."""

    def __init__(self, low: float, high: float, reg_max: int) -> None:
        """Initialize the exception.

        Args:
            low: Smallest target seen
            high: Largest target seen
            reg_max: Largest bin index

        """
        self.low = low
        self.high = high
        self.reg_max = reg_max

        super().__init__(f"DFL targets must lie in [0, {reg_max}], got range [{low}, {high}]")


class FileFormatError(DeskdetError):
    """Base class for errors in the on-disk formats."""


class ImageFormatError(FileFormatError):
    """Exception raised when a PGM/PPM file cannot be parsed."""

    def __init__(self, path: str | Path, reason: str) -> None:
        """Initialize the exception.

        Args:
            path: The offending file
            reason: What is wrong with it

        """
        self.path = str(path)
        self.reason = reason

        super().__init__(f"{self.path}: {reason}")


class LabelFormatError(FileFormatError):
    """Exception raised when a YOLO label line is invalid."""

    def __init__(self, path: str | Path, line_no: int, reason: str) -> None:
        """Initialize the exception.

        Args:
            path: The offending file
            line_no: 1-based line number
            reason: What is wrong with the line

        """
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason

        super().__init__(f"{self.path}:{line_no}: {reason}")


class DetectionFormatError(FileFormatError):
    """Exception raised when a detection file line is invalid."""

    def __init__(self, path: str | Path, line_no: int, reason: str) -> None:
        """Initialize the exception.

        Args:
            path: The offending file
            line_no: 1-based line number
            reason: What is wrong with the line

        """
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason

        super().__init__(f"{self.path}:{line_no}: {reason}")


class CheckpointFormatError(FileFormatError):
    """Exception raised when a checkpoint file is malformed."""


class DatasetError(DeskdetError):
    """Exception raised when a dataset descriptor is inconsistent with the files on disk."""


class CheckpointMismatchError(DeskdetError):
    """Exception raised when resuming from a checkpoint written for a different configuration."""

    def __init__(self, field: str) -> None:
        """Initialize the exception.

        Args:
            field: Name of the configuration that differs

        """
        self.field = field

        super().__init__(f"Checkpoint was written with a different {field}; refusing to resume")


class NonFiniteLossError(DeskdetError):
    """Exception raised when a loss component becomes NaN or Inf during training."""

    def __init__(self, component: str, step: int | None = None) -> None:
        """Initialize the exception.

        Args:
            component: The loss component that failed (box, cls or dfl)
            step: Training step, when known

        """
        self.component = component
        self.step = step

        where = f" at step {step}" if step is not None else ""
        super().__init__(f"Non-finite '{component}' loss{where}")

"""Binary netpbm images: PGM (P5, grayscale) and PPM (P6, RGB), maxval 255."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from deskdet.constants import ImageFormat
from deskdet.exceptions import ImageFormatError
from deskdet.tensor import Tensor

MAXVAL = 255
_WHITESPACE = b" \t\r\n\v\f"


def _header(data: bytes, path: Path) -> tuple[ImageFormat, int, int, int]:
    """Parse magic, width, height and maxval; return them with the payload offset."""
    magic = data[:2]
    formats = {fmt.magic: fmt for fmt in ImageFormat}
    if magic not in formats:
        raise ImageFormatError(path, f"unsupported magic number {magic!r}, expected P5 or P6")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:  # noqa: PLR2004
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos : pos + 1] != b"#":
            pos += 1
        token = data[start:pos]
        if not token:
            raise ImageFormatError(path, "truncated header")
        if not token.isdigit():
            raise ImageFormatError(path, f"malformed header field {token!r}")
        fields.append(int(token))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ImageFormatError(path, "header must end with a single whitespace byte")
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ImageFormatError(path, f"invalid size {width}x{height}")
    if maxval != MAXVAL:
        raise ImageFormatError(path, f"unsupported maxval {maxval}, only {MAXVAL} is supported")
    return formats[magic], width, height, pos + 1


def read_pnm(path: str | Path) -> np.ndarray:
    """Pixels as uint8, [H,W] for PGM and [H,W,3] for PPM."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(path, f"cannot read file ({exc.strerror})") from exc
    fmt, width, height, offset = _header(data, path)
    expected = width * height * fmt.channels
    payload = data[offset : offset + expected]
    if len(payload) < expected:
        raise ImageFormatError(path, f"truncated payload: expected {expected} bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width) if fmt is ImageFormat.PGM else (height, width, 3)
    return pixels.reshape(shape).copy()


def read_image_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the header only."""
    path = Path(path)
    with path.open("rb") as f:
        head = f.read(512)
    _, width, height, _ = _header(head, path)
    return width, height


def write_pnm(path: str | Path, pixels: np.ndarray) -> None:
    """Write uint8 pixels; [H,W] becomes PGM and [H,W,3] PPM."""
    array = np.asarray(pixels)
    if array.dtype != np.uint8:
        msg = f"pixels must be uint8, got {array.dtype}"
        raise ValueError(msg)
    if array.ndim == 2:  # noqa: PLR2004
        fmt = ImageFormat.PGM
    elif array.ndim == 3 and array.shape[2] == 3:  # noqa: PLR2004
        fmt = ImageFormat.PPM
    else:
        msg = f"cannot store pixels of shape {array.shape} as PGM or PPM"
        raise ValueError(msg)
    height, width = array.shape[:2]
    header = fmt.magic + f"\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(array).tobytes())


def resize_nearest(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour resize sampling source pixel floor((i + 0.5) * src / dst)."""
    src_h, src_w = pixels.shape[:2]
    rows = np.minimum(((np.arange(height) + 0.5) * src_h / height).astype(np.int64), src_h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * src_w / width).astype(np.int64), src_w - 1)
    return pixels[rows[:, None], cols[None, :]]


def to_planes(pixels: np.ndarray, channels: int = 3) -> np.ndarray:
    """uint8 pixels to float [C,H,W] in [0,1], replicating grayscale or averaging RGB to ``channels``."""
    planes = pixels[None] if pixels.ndim == 2 else np.moveaxis(pixels, 2, 0)  # noqa: PLR2004
    values = planes.astype(np.float64) / MAXVAL
    if values.shape[0] == 1 and channels == 3:  # noqa: PLR2004
        return np.repeat(values, 3, axis=0)
    if values.shape[0] == 3 and channels == 1:  # noqa: PLR2004
        return values.mean(axis=0, keepdims=True)
    return values


def load_image(path: str | Path, channels: int = 3, size: int | None = None) -> Tensor:
    """[C,H,W] tensor scaled to [0,1].

    Grayscale is replicated when ``channels`` is 3 and RGB is averaged when it is 1. With
    ``size`` the image is nearest-resized to size x size first.
    """
    pixels = read_pnm(path)
    if size is not None and pixels.shape[:2] != (size, size):
        pixels = resize_nearest(pixels, size, size)
    return Tensor(to_planes(pixels, channels))

"""Pixel-grid primitives shared by the whole pipeline.

Image buffers with binary PGM/PPM IO, joint color quantization, integral
images for O(1) rectangle sums, and axis-aligned box arithmetic. All
coordinates are 0-based; boxes are (x, y, w, h) with half-open extents
[x, x+w) x [y, y+h).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class ImageError(Exception):
    """Base class for image decoding failures."""


class ImageFormatError(ImageError):
    """Malformed header or unsupported format."""


class TruncatedImageError(ImageError):
    """Pixel payload ends before width*height*channels samples."""


# ---------------------------------------------------------------------------
# boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class BoundingBox:
    """Axis-aligned pixel box. May extend outside any image; clipping is
    always explicit."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box dims must be >= 1, got {self.w}x{self.h}")

    @property
    def x2(self) -> int:
        """Exclusive right edge."""
        return self.x + self.w

    @property
    def y2(self) -> int:
        """Exclusive bottom edge."""
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    def scaled(self, factor: float, min_dim: int = 1) -> "BoundingBox":
        """Scale about the center with integer-rounded extents."""
        nw = max(min_dim, int(round(self.w * factor)))
        nh = max(min_dim, int(round(self.h * factor)))
        return BoundingBox(self.x + (self.w - nw) // 2,
                           self.y + (self.h - nh) // 2, nw, nh)

    def astuple(self) -> tuple[int, int, int, int]:
        return self.x, self.y, self.w, self.h


def intersect(a: BoundingBox, b: BoundingBox) -> BoundingBox | None:
    """Intersection box, or None when the boxes are disjoint."""
    x1 = max(a.x, b.x)
    y1 = max(a.y, b.y)
    x2 = min(a.x2, b.x2)
    y2 = min(a.y2, b.y2)
    if x2 <= x1 or y2 <= y1:
        return None
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


def intersection_area(a: BoundingBox, b: BoundingBox) -> int:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def union_area(a: BoundingBox, b: BoundingBox) -> int:
    return a.area + b.area - intersection_area(a, b)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union by closed-form rectangle algebra."""
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / union_area(a, b)


def clip_box(box: BoundingBox, width: int, height: int) -> BoundingBox | None:
    """Clip to the [0,width) x [0,height) grid; None if nothing remains."""
    return intersect(box, BoundingBox(0, 0, width, height))


# ---------------------------------------------------------------------------
# image buffers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageBuffer:
    """8-bit image. Gray data is (h, w) uint8, RGB is (h, w, 3) uint8."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dims must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        expect = (self.height, self.width) if self.channels == 1 \
            else (self.height, self.width, 3)
        if self.data.shape != expect or self.data.dtype != np.uint8:
            raise ValueError(f"data must be uint8 with shape {expect}")
        self.data.setflags(write=False)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        if arr.ndim == 2:
            return cls(arr.shape[1], arr.shape[0], 1, arr)
        if arr.ndim == 3 and arr.shape[2] == 3:
            return cls(arr.shape[1], arr.shape[0], 3, arr)
        raise ValueError(f"unsupported array shape {arr.shape}")

    def luminance(self) -> np.ndarray:
        """Float gray plane (Rec.601 weights for RGB)."""
        if self.channels == 1:
            return self.data.astype(np.float64)
        d = self.data.astype(np.float64)
        return 0.299 * d[:, :, 0] + 0.587 * d[:, :, 1] + 0.114 * d[:, :, 2]

    def crop(self, box: BoundingBox) -> "ImageBuffer":
        clipped = clip_box(box, self.width, self.height)
        if clipped is None:
            raise ValueError("crop box lies fully outside the image")
        sub = self.data[clipped.y:clipped.y2, clipped.x:clipped.x2]
        return ImageBuffer.from_array(np.ascontiguousarray(sub))


def _read_pnm_header(blob: bytes, path: str):
    """Tokenize a P5/P6 header, honoring '#' comments."""
    pos = 2  # past the magic
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if pos == start:
            raise ImageFormatError(f"{path}: header ends prematurely")
        tok = blob[start:pos]
        if not tok.isdigit():
            raise ImageFormatError(f"{path}: non-numeric header field {tok!r}")
        fields.append(int(tok))
    pos += 1  # single whitespace byte after maxval
    return fields[0], fields[1], fields[2], pos


def load_image(path: str) -> ImageBuffer:
    """Load a binary PGM (P5) or PPM (P6) image; PNG/JPEG via Pillow when
    it is installed.

    Raises FileNotFoundError for missing files, ImageFormatError for bad
    headers, TruncatedImageError for short pixel payloads.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    magic = blob[:2]
    if magic in (b"P5", b"P6"):
        width, height, maxval, pos = _read_pnm_header(blob, path)
        if width < 1 or height < 1:
            raise ImageFormatError(f"{path}: bad dimensions {width}x{height}")
        if maxval != 255:
            raise ImageFormatError(f"{path}: only maxval 255 is supported")
        channels = 1 if magic == b"P5" else 3
        need = width * height * channels
        payload = blob[pos:pos + need]
        if len(payload) < need:
            raise TruncatedImageError(
                f"{path}: expected {need} pixel bytes, got {len(payload)}")
        arr = np.frombuffer(payload, dtype=np.uint8, count=need)
        shape = (height, width) if channels == 1 else (height, width, 3)
        return ImageBuffer.from_array(arr.reshape(shape))
    try:
        from PIL import Image
    except ImportError:
        raise ImageFormatError(
            f"{path}: not a P5/P6 file and Pillow is not installed "
            "(install topg[images] for PNG/JPEG)") from None
    try:
        with Image.open(path) as img:
            img = img.convert("L") if img.mode in ("1", "L", "I;16") \
                else img.convert("RGB")
            return ImageBuffer.from_array(np.asarray(img))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc


def save_image(image: ImageBuffer, path: str) -> None:
    """Write binary PGM for gray, PPM for RGB."""
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(image.data.tobytes())
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------

def quantize_pixel(pixel, bins: int) -> int:
    """Bin index of one pixel: floor(c*bins/256) per channel, joint index
    b_r*bins^2 + b_g*bins + b_b for RGB."""
    if not 2 <= bins <= 256:
        raise ValueError(f"bins must be in [2, 256], got {bins}")
    if np.isscalar(pixel) or isinstance(pixel, (int, np.integer)):
        return int(pixel) * bins // 256
    r, g, b = (int(v) for v in pixel)
    return (r * bins // 256) * bins * bins + (g * bins // 256) * bins \
        + (b * bins // 256)


def quantize_image(image: ImageBuffer, bins: int) -> np.ndarray:
    """Per-pixel bin indices as an int32 (h, w) grid."""
    if not 2 <= bins <= 256:
        raise ValueError(f"bins must be in [2, 256], got {bins}")
    d = image.data.astype(np.int32)
    if image.channels == 1:
        return d * bins // 256
    q = d * bins // 256
    return q[:, :, 0] * bins * bins + q[:, :, 1] * bins + q[:, :, 2]


def histogram_cells(bins: int, channels: int) -> int:
    return bins ** 3 if channels == 3 else bins


# ---------------------------------------------------------------------------
# integral images
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegralImage:
    """Cumulative-sum table, one row/column of zeros on the top/left so
    entry (i, j) is the sum of all source values strictly above-left."""

    width: int
    height: int
    table: np.ndarray  # (height+1, width+1) float64

    def __post_init__(self):
        self.table.setflags(write=False)


def integral_image(values: np.ndarray) -> IntegralImage:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("integral_image expects a 2-d grid")
    h, w = values.shape
    table = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(values, axis=0), axis=1, out=table[1:, 1:])
    return IntegralImage(w, h, table)


def box_sum(integral: IntegralImage, box: BoundingBox) -> float:
    """Sum of source values inside the box, clipped to the grid. Zero for
    boxes fully outside."""
    clipped = clip_box(box, integral.width, integral.height)
    if clipped is None:
        return 0.0
    t = integral.table
    return float(t[clipped.y2, clipped.x2] - t[clipped.y, clipped.x2]
                 - t[clipped.y2, clipped.x] + t[clipped.y, clipped.x])

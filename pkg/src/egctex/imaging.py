"""Raster loading and the three pre-processing transforms.

Every transform preserves width and height and returns a fresh
:class:`ImageBuffer`; inputs are never modified.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff")


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit raster, shape ``(height, width)`` or ``(height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if not (px.ndim == 2 or (px.ndim == 3 and px.shape[2] == 3)):
            raise ValueError(f"expected 1 or 3 channels, got shape {px.shape}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def data(self) -> bytes:
        """Row-major, channel-interleaved bytes."""
        return self.pixels.tobytes()

    def channel(self, index: int) -> np.ndarray:
        if self.channels == 1:
            if index != 0:
                raise IndexError(index)
            return self.pixels
        return self.pixels[:, :, index]


def load_image(path) -> ImageBuffer:
    """Decode PNG/JPEG/TIFF into an 8-bit gray or RGB buffer."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "RGB"):
                converted = im
            elif im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                return ImageBuffer(np.clip(np.floor(arr / 257.0 + 0.5), 0, 255).astype(np.uint8))
            elif im.mode in ("1", "LA"):
                converted = im.convert("L")
            else:
                converted = im.convert("RGB")
            return ImageBuffer(np.array(converted, dtype=np.uint8))
    except (OSError, ValueError) as exc:
        raise ImageDecodeError(path, exc) from exc


class ImageDecodeError(Exception):
    def __init__(self, path, cause):
        super().__init__(f"cannot decode image {path}: {cause}")
        self.path = Path(path)


class ChannelError(ValueError):
    """Raised when a transform receives the wrong channel count."""


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """BT.601 luma, round-half-up, computed in exact integer arithmetic."""
    if img.channels != 3:
        raise ChannelError("to_grayscale expects a 3-channel image")
    px = img.pixels.astype(np.int64)
    luma = (299 * px[:, :, 0] + 587 * px[:, :, 1] + 114 * px[:, :, 2] + 500) // 1000
    return ImageBuffer(np.clip(luma, 0, 255).astype(np.uint8))


HUE_SPAN_DEGREES = 300


def _hsv_to_rgb_exact(hue: Fraction) -> tuple[int, int, int]:
    # s = v = 1, so chroma is 1 and the minimum component is 0
    sector = hue / 60
    k = int(sector)  # floor; hue >= 0
    x = 1 - abs(sector % 2 - 1)
    rgb = [
        (1, x, 0), (x, 1, 0), (0, 1, x), (0, x, 1), (x, 0, 1), (1, 0, x),
    ][k % 6]
    return tuple(int(Fraction(255) * c + Fraction(1, 2)) for c in rgb)


def _build_hsv_lut() -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    for g in range(256):
        lut[g] = _hsv_to_rgb_exact(Fraction(g * HUE_SPAN_DEGREES, 255))
    lut.setflags(write=False)
    return lut


HSV_LUT = _build_hsv_lut()


def pseudo_color_hsv(img: ImageBuffer) -> ImageBuffer:
    """Map gray level g to hue g*300/255 degrees at full saturation and value."""
    if img.channels != 1:
        raise ChannelError("pseudo_color_hsv expects a 1-channel image")
    return ImageBuffer(HSV_LUT[img.pixels])


class EdgeKind(str, enum.Enum):
    LAPLACIAN = "laplacian"
    SOBEL = "sobel"
    SCHARR = "scharr"


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.int64)
_SCHARR_X = np.array([[-3, 0, 3], [-10, 0, 10], [-3, 0, 3]], dtype=np.int64)
_LAPLACIAN = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.int64)


@dataclass(frozen=True)
class EdgeFilter:
    kind: EdgeKind

    def __post_init__(self):
        object.__setattr__(self, "kind", EdgeKind(self.kind))

    @property
    def kernels(self) -> tuple[np.ndarray, ...]:
        if self.kind is EdgeKind.LAPLACIAN:
            return (_LAPLACIAN,)
        gx = _SOBEL_X if self.kind is EdgeKind.SOBEL else _SCHARR_X
        return (gx, gx.T.copy())


def _edge_magnitude(plane: np.ndarray, filt: EdgeFilter) -> np.ndarray:
    plane = plane.astype(np.int64)
    # scipy's "mirror" mode is reflect-101 (dcb|abcd|cba)
    responses = [ndimage.correlate(plane, k, mode="mirror") for k in filt.kernels]
    if len(responses) == 1:
        return np.abs(responses[0])
    gx, gy = responses
    mag = np.sqrt((gx * gx + gy * gy).astype(np.float64))
    # sqrt of an integer is never exactly k + 0.5, so floor(x + 0.5) has no ties
    return np.floor(mag + 0.5).astype(np.int64)


def edge_enhance(img: ImageBuffer, filt: EdgeFilter) -> ImageBuffer:
    """Add the per-channel edge magnitude back onto the image, saturating at 255."""
    if not isinstance(filt, EdgeFilter):
        filt = EdgeFilter(filt)
    planes = [
        np.minimum(img.channel(c).astype(np.int64) + _edge_magnitude(img.channel(c), filt), 255)
        for c in range(img.channels)
    ]
    out = planes[0] if img.channels == 1 else np.stack(planes, axis=2)
    return ImageBuffer(out.astype(np.uint8))


PREPROCESSORS = ("grayscale", "hsv", "laplacian", "sobel", "scharr")


def apply_chain(img: ImageBuffer, chain) -> ImageBuffer:
    """Apply named transforms in order (names from ``PREPROCESSORS``)."""
    for step in chain:
        if step == "grayscale":
            img = to_grayscale(img)
        elif step == "hsv":
            img = pseudo_color_hsv(img)
        elif step in ("laplacian", "sobel", "scharr"):
            img = edge_enhance(img, EdgeFilter(step))
        else:
            raise ValueError(f"unknown preprocessing step {step!r}")
    return img

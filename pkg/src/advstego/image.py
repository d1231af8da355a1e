"""Grayscale image values, wet-pixel semantics and binary PGM I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import BoundsError, FormatError, TruncatedFileError, UnsupportedFormatError


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable 8-bit grayscale image stored as a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2-D grid, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.dtype.kind not in "iu" and not np.all(arr == np.round(arr)):
                raise ValueError("pixel values must be integers")
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_values(cls, width: int, height: int, values: Iterable[int]) -> GrayImage:
        values = list(values)
        if width < 1 or height < 1:
            raise ValueError("width and height must be positive")
        if len(values) != width * height:
            raise ValueError(f"expected {width * height} pixels, got {len(values)}")
        return cls(np.array(values, dtype=np.int64).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def size(self) -> int:
        return self.pixels.size

    def lsb(self) -> np.ndarray:
        """Row-major LSB vector."""
        return (self.pixels.ravel() & 1).astype(np.uint8)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


class PixelFlip(NamedTuple):
    row: int
    col: int
    direction: int


def wet_mask(img: GrayImage) -> np.ndarray:
    """Boolean grid, True where the pixel is 0 or 255 (one ±1 direction is blocked)."""
    return (img.pixels == 0) | (img.pixels == 255)


def apply_flips(img: GrayImage, flips: Iterable[PixelFlip]) -> GrayImage:
    flips = list(flips)
    if not flips:
        return img
    rows = np.array([f.row for f in flips])
    cols = np.array([f.col for f in flips])
    dirs = np.array([f.direction for f in flips])
    if np.any((dirs != 1) & (dirs != -1)):
        raise ValueError("flip direction must be +1 or -1")
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= img.height or cols.max() >= img.width:
        raise IndexError("flip position outside the image")
    return apply_changes(img, rows * img.width + cols, dirs)


def apply_changes(img: GrayImage, positions: np.ndarray, directions: np.ndarray) -> GrayImage:
    """Add ``directions`` (each ±1) at row-major ``positions``; returns a new image."""
    positions = np.asarray(positions, dtype=np.int64)
    directions = np.asarray(directions, dtype=np.int64)
    if positions.shape != directions.shape:
        raise ValueError("positions and directions differ in length")
    if len(np.unique(positions)) != len(positions):
        raise ValueError("duplicate flip position")
    flat = img.pixels.ravel().astype(np.int64)
    flat[positions] += directions
    if positions.size and (flat[positions].min() < 0 or flat[positions].max() > 255):
        bad = positions[(flat[positions] < 0) | (flat[positions] > 255)][0]
        raise BoundsError(f"flip at index {bad} leaves [0, 255]")
    return GrayImage(flat.reshape(img.shape))


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("PGM header ended early")
    return data[start:pos], pos


def decode_pgm(data: bytes) -> GrayImage:
    if data[:2] != b"P5":
        raise FormatError(f"not a binary PGM (magic {data[:2]!r})")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise FormatError(f"bad PGM header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval {maxval} not supported (only 255)")
    if width < 1 or height < 1:
        raise FormatError("PGM dimensions must be positive")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise TruncatedFileError("missing raster after PGM header")
    pos += 1
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise TruncatedFileError(f"PGM raster truncated: {len(raster)} of {width * height} bytes")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def encode_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()


def load_pgm(path: str | os.PathLike) -> GrayImage:
    with open(path, "rb") as f:
        return decode_pgm(f.read())


def save_pgm(img: GrayImage, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(img))

"""Containers and reshapes for hyperspectral data.

A scene lives in two equivalent layouts:

* :class:`HsiCube` -- a (bands, rows, cols) array, the shape filters work on.
* :class:`PixelMatrix` -- a (channels, pixels) array, the shape the solvers
  work on, with one column per pixel.

The column ordering is fixed once and used everywhere, including the binary
cube file format: pixel ``n = col * rows + row``, i.e. pixels walk down each
spatial column before moving to the next one.  Both reshapes are pure
relabelings, so a round trip reproduces the input bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = ["HsiCube", "PixelMatrix", "fold", "unfold"]


def _as_readonly_f64(values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="C")
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite (no NaN or Inf)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HsiCube:
    """Hyperspectral image cube, shape (bands, rows, cols).

    Values are copied to a read-only float64 array; NaN/Inf are rejected.
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly_f64(self.values, "cube", 3))

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def rows(self) -> int:
        return self.values.shape[1]

    @property
    def cols(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class PixelMatrix:
    """Per-pixel data matrix, shape (channels, pixels), one column per pixel.

    Args:
        values: (channels, pixels) array, any finite reals.
        spatial_rows: rows of the image the columns came from.
        spatial_cols: cols of the image; rows * cols must equal pixels.
    """

    values: np.ndarray
    spatial_rows: int
    spatial_cols: int

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly_f64(self.values, "matrix", 2))
        if self.spatial_rows < 1 or self.spatial_cols < 1:
            raise ShapeError("spatial dimensions must be positive")
        if self.spatial_rows * self.spatial_cols != self.values.shape[1]:
            raise ShapeError(
                f"{self.values.shape[1]} columns cannot fill a "
                f"{self.spatial_rows}x{self.spatial_cols} image"
            )

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def pixels(self) -> int:
        return self.values.shape[1]


def unfold(cube: HsiCube) -> PixelMatrix:
    """Flatten a cube to a (bands, pixels) matrix, pixel n = col*rows + row."""
    b, r, c = cube.values.shape
    flat = cube.values.transpose(0, 2, 1).reshape(b, r * c)
    return PixelMatrix(flat, r, c)


def fold(matrix: PixelMatrix) -> HsiCube:
    """Reshape a pixel matrix back into a (channels, rows, cols) cube.

    Inverse of :func:`unfold`; also accepts any object with ``values``,
    ``spatial_rows`` and ``spatial_cols`` attributes (abundance maps fold
    the same way band by band).
    """
    r, c = matrix.spatial_rows, matrix.spatial_cols
    ch = matrix.values.shape[0]
    stack = matrix.values.reshape(ch, c, r).transpose(0, 2, 1)
    return HsiCube(stack)

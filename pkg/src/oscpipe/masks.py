"""Run-length encoded binary masks.

Runs are counted over the row-major raster of an ``height x width`` grid and
alternate background/foreground, starting with background. A leading zero run
is how a mask that starts on a foreground pixel is written; no other run may
be zero, so each mask has exactly one encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


class MaskError(ValueError):
    """Malformed run-length mask or incompatible mask shapes."""


@dataclass(frozen=True)
class PixelMask:
    height: int
    width: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        validate_runs(self.height, self.width, self.runs)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @cached_property
    def area(self) -> int:
        return sum(self.runs[1::2])

    @cached_property
    def _grid(self) -> np.ndarray:
        flat = np.repeat(np.arange(len(self.runs)) % 2 == 1, self.runs)
        grid = flat.reshape(self.height, self.width)
        grid.setflags(write=False)
        return grid

    def to_array(self) -> np.ndarray:
        """Decoded boolean grid (read-only view)."""
        return self._grid

    def is_empty(self) -> bool:
        return self.area == 0

    @classmethod
    def empty(cls, height: int, width: int) -> "PixelMask":
        return cls(height, width, (height * width,))

    @classmethod
    def from_array(cls, grid) -> "PixelMask":
        return rle_encode(grid)

    @classmethod
    def from_box(cls, height: int, width: int, top: int, left: int, bottom: int, right: int) -> "PixelMask":
        """Mask of the half-open box rows [top, bottom) x cols [left, right)."""
        grid = np.zeros((height, width), dtype=bool)
        grid[top:bottom, left:right] = True
        return rle_encode(grid)


def validate_runs(height: int, width: int, runs: Sequence[int]) -> None:
    if height <= 0 or width <= 0:
        raise MaskError(f"mask dimensions must be positive, got {height}x{width}")
    if len(runs) == 0:
        raise MaskError("mask has no runs")
    if any(r < 0 for r in runs):
        raise MaskError("negative run length")
    total = sum(runs)
    if total != height * width:
        raise MaskError(f"runs sum to {total}, expected {height}x{width}={height * width}")
    for i, r in enumerate(runs[1:], start=1):
        if r == 0:
            raise MaskError(f"zero-length run at position {i}; only the first run may be zero")


def rle_encode(grid) -> PixelMask:
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] == 0 or grid.shape[1] == 0:
        raise MaskError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    flat = grid.ravel().astype(bool)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return PixelMask(grid.shape[0], grid.shape[1], tuple(runs))


def rle_decode(mask: PixelMask) -> np.ndarray:
    return mask.to_array().copy()


def _check_shapes(a: PixelMask, b: PixelMask) -> None:
    if a.shape != b.shape:
        raise MaskError(f"mask dimensions differ: {a.shape} vs {b.shape}")


def mask_area(a: PixelMask) -> int:
    return a.area


def mask_intersection(a: PixelMask, b: PixelMask) -> PixelMask:
    _check_shapes(a, b)
    return rle_encode(a.to_array() & b.to_array())


def mask_union(a: PixelMask, b: PixelMask) -> PixelMask:
    _check_shapes(a, b)
    return rle_encode(a.to_array() | b.to_array())


def mask_difference(a: PixelMask, b: PixelMask) -> PixelMask:
    _check_shapes(a, b)
    return rle_encode(a.to_array() & ~b.to_array())


def intersection_area(a: PixelMask, b: PixelMask) -> int:
    _check_shapes(a, b)
    return int(np.count_nonzero(a.to_array() & b.to_array()))


def union_area(a: PixelMask, b: PixelMask) -> int:
    _check_shapes(a, b)
    return int(np.count_nonzero(a.to_array() | b.to_array()))


def union_all(masks: Sequence[PixelMask], height: int, width: int) -> PixelMask:
    grid = np.zeros((height, width), dtype=bool)
    for m in masks:
        if m.shape != (height, width):
            raise MaskError(f"mask dimensions differ: {m.shape} vs {(height, width)}")
        grid |= m.to_array()
    return rle_encode(grid)

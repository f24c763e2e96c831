"""Point-feature sufficiency score and the Point / PointLine switch."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyCalibrationSet, EmptyImage


class SceneMode(enum.Enum):
    POINT = "Point"
    POINT_LINE = "PointLine"


@dataclass(frozen=True, eq=False)
class GridStats:
    rows: int
    cols: int
    counts: np.ndarray
    variances: np.ndarray

    @property
    def n_cells(self):
        return self.rows * self.cols

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class AwarenessConfig:
    c_base: float
    th: float
    grid_rows: int = 3
    grid_cols: int = 3

    def __post_init__(self):
        if not self.c_base >= 1:
            raise ValueError(f"c_base must be >= 1, got {self.c_base}")
        if not self.th > 0:
            raise ValueError(f"th must be > 0, got {self.th}")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid must have at least one row and column")


def grid_partition(image_size, points, rows=3, cols=3) -> GridStats:
    """Bucket pixels into a ``rows x cols`` grid.

    ``image_size`` is ``(width, height)``. A point on the right or bottom
    image border falls into the last cell.
    """
    width, height = image_size
    if width <= 0 or height <= 0:
        raise EmptyImage(f"image size {image_size} has no area")
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    px = np.asarray(points, dtype=float).reshape(-1, 2)
    counts, var = kernels.grid_stats(np.ascontiguousarray(px), float(width), float(height), int(rows), int(cols))
    return GridStats(rows, cols, counts, var)


def feature_quality(stats: GridStats, c_base: float) -> float:
    """Mean over cells of ``c/c_base + 1/(1 + sigma)``.

    The spread term only counts for cells holding two or more points, so an
    empty frame scores zero.
    """
    if not c_base >= 1:
        raise ValueError("c_base must be >= 1")
    total = 0.0
    for c, v in zip(stats.counts.tolist(), stats.variances.tolist()):
        total += c / c_base
        if c >= 2:
            total += 1.0 / (1.0 + math.sqrt(v))
    return total / stats.n_cells


def decide_mode(q: float, th: float) -> SceneMode:
    if not th > 0:
        raise ValueError("th must be > 0")
    return SceneMode.POINT if q >= th else SceneMode.POINT_LINE


def calibrate(stable_frames, grid_rows=None, grid_cols=None) -> AwarenessConfig:
    """Pick ``c_base`` then ``th`` as minima over a stable sequence."""
    frames = list(stable_frames)
    if not frames:
        raise EmptyCalibrationSet("calibration needs at least one frame")
    c_base = max(1.0, min(float(np.mean(f.counts)) for f in frames))
    th = min(feature_quality(f, c_base) for f in frames)
    if not th > 0:
        raise EmptyCalibrationSet("calibration frames contain no features")
    return AwarenessConfig(
        c_base=c_base,
        th=th,
        grid_rows=grid_rows or frames[0].rows,
        grid_cols=grid_cols or frames[0].cols,
    )

"""Two-stage dynamic feature removal: detection boxes, then epipolar checks.

Mask containment is boundary-inclusive; epipolar removal is strict
(``d > d_th``). A line goes when three or more of its five samples vote
against it, in either stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import instrument, kernels
from .lines import Line2D

DEFAULT_D_TH = 1.0
LINE_VOTES = 3


@dataclass(frozen=True)
class DynamicMask:
    """Axis-aligned boxes ``(u0, v0, u1, v1)``."""

    regions: tuple = ()

    def __post_init__(self):
        regs = tuple(tuple(float(x) for x in r) for r in self.regions)
        for r in regs:
            if len(r) != 4 or r[0] > r[2] or r[1] > r[3]:
                raise ValueError(f"bad rectangle {r}")
        object.__setattr__(self, "regions", regs)

    def contains(self, px):
        px = np.asarray(px, dtype=float).reshape(-1, 2)
        inside = np.zeros(len(px), dtype=bool)
        for u0, v0, u1, v1 in self.regions:
            inside |= (px[:, 0] >= u0) & (px[:, 0] <= u1) & (px[:, 1] >= v0) & (px[:, 1] <= v1)
        return inside


@dataclass(frozen=True, eq=False)
class FilterOutcome:
    retained: np.ndarray
    removed_by_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    removed_by_epipolar: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        for name in ("retained", "removed_by_mask", "removed_by_epipolar"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    @property
    def n_total(self):
        return len(self.retained) + len(self.removed_by_mask) + len(self.removed_by_epipolar)

    def counts(self):
        return len(self.retained), len(self.removed_by_mask), len(self.removed_by_epipolar)

    def is_partition_of(self, n):
        allidx = np.concatenate([self.retained, self.removed_by_mask, self.removed_by_epipolar])
        return len(allidx) == n and np.array_equal(np.sort(allidx), np.arange(n))


def _indices(flags):
    return np.flatnonzero(flags).astype(np.int64)


def mask_filter_points(points, mask: DynamicMask) -> FilterOutcome:
    inside = mask.contains(points)
    return FilterOutcome(retained=_indices(~inside), removed_by_mask=_indices(inside))


def line_mask_votes(lines, mask: DynamicMask):
    if not lines:
        return np.zeros(0, dtype=np.int64)
    samples = np.concatenate([l.samples for l in lines])
    return mask.contains(samples).reshape(len(lines), 5).sum(axis=1)


def mask_filter_lines(lines, mask: DynamicMask) -> FilterOutcome:
    instrument.bump(instrument.LINE_OPS, len(lines))
    bad = line_mask_votes(lines, mask) >= LINE_VOTES
    return FilterOutcome(retained=_indices(~bad), removed_by_mask=_indices(bad))


def point_epipolar_distances(xi, xj, F):
    xi = np.ascontiguousarray(np.asarray(xi, dtype=float).reshape(-1, 2))
    xj = np.ascontiguousarray(np.asarray(xj, dtype=float).reshape(-1, 2))
    return kernels.epipolar_distances(np.ascontiguousarray(F, dtype=float), xi, xj)


def epipolar_filter_points(matches, F, d_th=DEFAULT_D_TH) -> FilterOutcome:
    """``matches`` is (n, 2, 2): previous pixel then current pixel per row."""
    m = np.asarray(matches, dtype=float).reshape(-1, 2, 2)
    d = point_epipolar_distances(m[:, 0], m[:, 1], F)
    bad = d > d_th  # NaN (epipole) compares False and is kept
    return FilterOutcome(retained=_indices(~bad), removed_by_epipolar=_indices(bad))


def line_epipolar_violations(line_matches, F, d_th=DEFAULT_D_TH):
    if not line_matches:
        return np.zeros(0, dtype=np.int64)
    si = np.concatenate([a.samples for a, _ in line_matches])
    sj = np.concatenate([b.samples for _, b in line_matches])
    d = point_epipolar_distances(si, sj, F).reshape(len(line_matches), 5)
    return (d > d_th).sum(axis=1)


def epipolar_filter_lines(line_matches, F, d_th=DEFAULT_D_TH) -> FilterOutcome:
    """``line_matches`` pairs (previous Line2D, current Line2D) with samples
    in parameter correspondence."""
    instrument.bump(instrument.LINE_OPS, len(line_matches))
    bad = line_epipolar_violations(line_matches, F, d_th) >= LINE_VOTES
    return FilterOutcome(retained=_indices(~bad), removed_by_epipolar=_indices(bad))


def remove_dynamic_points(points, prev_points, mask: DynamicMask, F=None, d_th=DEFAULT_D_TH) -> FilterOutcome:
    """Stage 1 then stage 2 for points.

    ``prev_points`` holds the matched pixel in the other frame, NaN rows for
    unmatched features (those skip stage 2). ``F=None`` skips stage 2.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    inside = mask.contains(points)
    epi = np.zeros(n, dtype=bool)
    if F is not None and n:
        prev = np.asarray(prev_points, dtype=float).reshape(-1, 2)
        test = ~inside & np.all(np.isfinite(prev), axis=1)
        idx = np.flatnonzero(test)
        if len(idx):
            d = point_epipolar_distances(prev[idx], points[idx], F)
            epi[idx[d > d_th]] = True
    return FilterOutcome(
        retained=_indices(~inside & ~epi),
        removed_by_mask=_indices(inside),
        removed_by_epipolar=_indices(epi),
    )


def remove_dynamic_lines(lines, prev_lines, mask: DynamicMask, F=None, d_th=DEFAULT_D_TH) -> FilterOutcome:
    """Stage 1 then stage 2 for lines; ``prev_lines[k]`` is the matched
    previous-frame line (already direction-aligned) or ``None``."""
    n = len(lines)
    instrument.bump(instrument.LINE_OPS, n)
    masked = line_mask_votes(lines, mask) >= LINE_VOTES if n else np.zeros(0, dtype=bool)
    epi = np.zeros(n, dtype=bool)
    if F is not None and n:
        idx = [k for k in range(n) if not masked[k] and prev_lines[k] is not None]
        if idx:
            votes = line_epipolar_violations([(prev_lines[k], lines[k]) for k in idx], F, d_th)
            epi[np.asarray(idx)[votes >= LINE_VOTES]] = True
    return FilterOutcome(
        retained=_indices(~masked & ~epi),
        removed_by_mask=_indices(masked),
        removed_by_epipolar=_indices(epi),
    )


@dataclass(frozen=True, eq=False)
class RemovalResult:
    points: FilterOutcome
    lines: FilterOutcome


def run_removal(points, prev_points, mask, F=None, lines=(), prev_lines=(), d_th=DEFAULT_D_TH) -> RemovalResult:
    """Apply both stages to a frame's points and lines.

    Pass ``F=None`` when the frame pair has a degenerate baseline; only the
    mask stage runs then.
    """
    lines = list(lines)
    prev_lines = list(prev_lines) if prev_lines else [None] * len(lines)
    pts = remove_dynamic_points(points, prev_points, mask, F, d_th)
    lns = remove_dynamic_lines(lines, prev_lines, mask, F, d_th) if lines else FilterOutcome(np.zeros(0))
    return RemovalResult(pts, lns)


def align_line_direction(ref: Line2D, line: Line2D) -> Line2D:
    """Flip ``line`` so its start sits nearer to ``ref``'s start."""
    same = np.linalg.norm(line.start - ref.start) + np.linalg.norm(line.end - ref.end)
    flip = np.linalg.norm(line.end - ref.start) + np.linalg.norm(line.start - ref.end)
    return line.reversed() if flip < same else line

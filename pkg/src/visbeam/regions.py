"""Run-length encoded pixel sets on a fixed width x height grid.

A region is stored as three parallel int64 arrays ``rows``, ``starts`` and
``stops``; each entry is the half-open column run ``[start, stop)`` of one
image row. Runs are kept canonical: sorted by (row, start), non-empty,
non-overlapping and non-adjacent, so two regions holding the same pixels
compare equal.

Pixel ``(col, row)`` has its center at ``(col + 0.5, row + 0.5)``.
"""

from __future__ import annotations

import math

import numpy as np


def _expand_ranges(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flatten the integer ranges ``[lo_i, hi_i)``.

    Returns ``(owner, value)`` where ``owner`` is the index ``i`` each value
    came from.
    """
    counts = np.maximum(hi - lo, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    owner = np.repeat(np.arange(len(lo), dtype=np.int64), counts)
    offsets = np.cumsum(counts) - counts
    value = np.repeat(lo, counts) + (np.arange(total, dtype=np.int64) - np.repeat(offsets, counts))
    return owner, value


class PixelRegion:
    __slots__ = ("width", "height", "rows", "starts", "stops")

    def __init__(self, width: int, height: int, rows=(), starts=(), stops=()):
        if width <= 0 or height <= 0:
            raise ValueError(f"grid must be non-empty, got {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        rows = np.asarray(rows, dtype=np.int64).ravel()
        starts = np.asarray(starts, dtype=np.int64).ravel()
        stops = np.asarray(stops, dtype=np.int64).ravel()
        if not (len(rows) == len(starts) == len(stops)):
            raise ValueError("rows, starts and stops must have equal length")
        keep = stops > starts
        rows, starts, stops = rows[keep], starts[keep], stops[keep]
        if len(rows) and (
            rows.min() < 0 or rows.max() >= self.height or starts.min() < 0 or stops.max() > self.width
        ):
            raise ValueError("run outside the pixel grid")
        self.rows, self.starts, self.stops = self._canonical(rows, starts, stops)

    @staticmethod
    def _canonical(rows, starts, stops):
        if len(rows) == 0:
            return rows, starts, stops
        order = np.lexsort((starts, rows))
        rows, starts, stops = rows[order], starts[order], stops[order]
        # Running max of stops within each row; row offsets keep rows from mixing.
        stride = int(stops.max()) + 2
        run_max = np.maximum.accumulate(rows * stride + stops) - rows * stride
        # A new merged run begins on a new row or after a gap (touching runs merge).
        new_run = np.ones(len(rows), dtype=bool)
        new_run[1:] = (rows[1:] != rows[:-1]) | (starts[1:] > run_max[:-1])
        first = np.flatnonzero(new_run)
        return rows[first], starts[first], np.maximum.reduceat(run_max, first)

    # -- constructors -------------------------------------------------------

    @classmethod
    def empty(cls, width: int, height: int) -> PixelRegion:
        return cls(width, height)

    @classmethod
    def from_dense(cls, mask) -> PixelRegion:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("dense mask must be 2-D (height, width)")
        height, width = mask.shape
        padded = np.zeros((height, width + 2), dtype=np.int8)
        padded[:, 1:-1] = mask
        edges = np.diff(padded, axis=1)
        r_on, c_on = np.nonzero(edges == 1)
        r_off, c_off = np.nonzero(edges == -1)
        return cls(width, height, r_on, c_on, c_off)

    @classmethod
    def from_row_bounds(cls, width: int, height: int, rows, lo, hi) -> PixelRegion:
        """Pixels whose centers satisfy ``lo <= x < hi`` on each listed row.

        Bounds are real-valued pixel coordinates and are clipped to the grid.
        """
        rows = np.asarray(rows, dtype=np.int64)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        starts = np.clip(np.ceil(lo - 0.5), 0, width).astype(np.int64)
        stops = np.clip(np.ceil(hi - 0.5), 0, width).astype(np.int64)
        ok = (rows >= 0) & (rows < height)
        return cls(width, height, rows[ok], starts[ok], stops[ok])

    @classmethod
    def from_box(cls, width: int, height: int, bbox) -> PixelRegion:
        """Pixels whose centers fall in the half-open box ``[x1, x2) x [y1, y2)``."""
        x1, y1, x2, y2 = (float(v) for v in bbox)
        r0 = max(0, math.ceil(y1 - 0.5))
        r1 = min(height, math.ceil(y2 - 0.5))
        if r1 <= r0 or x2 <= x1:
            return cls(width, height)
        rows = np.arange(r0, r1)
        return cls.from_row_bounds(width, height, rows, np.full(len(rows), x1), np.full(len(rows), x2))

    # -- basic queries ------------------------------------------------------

    @property
    def area(self) -> int:
        return int((self.stops - self.starts).sum())

    def __len__(self) -> int:
        return self.area

    def __bool__(self) -> bool:
        return len(self.rows) > 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, PixelRegion):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.stops, other.stops)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"PixelRegion({self.width}x{self.height}, runs={len(self.rows)}, area={self.area})"

    def _check_grid(self, other: PixelRegion) -> None:
        if (self.width, self.height) != (other.width, other.height):
            raise ValueError(
                f"grid mismatch: {self.width}x{self.height} vs {other.width}x{other.height}"
            )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.height, self.width), dtype=bool)
        for r, a, b in zip(self.rows, self.starts, self.stops):
            out[r, a:b] = True
        return out

    def pixels(self) -> tuple[np.ndarray, np.ndarray]:
        """All member pixels as ``(rows, cols)`` index arrays, row-major order."""
        owner, cols = _expand_ranges(self.starts, self.stops)
        return self.rows[owner], cols

    def bounds(self) -> tuple[int, int, int, int] | None:
        """Tight pixel-edge box ``(x1, y1, x2, y2)``, or None when empty."""
        if not self:
            return None
        return (
            int(self.starts.min()),
            int(self.rows.min()),
            int(self.stops.max()),
            int(self.rows.max()) + 1,
        )

    def centroid(self) -> tuple[float, float]:
        """Mean pixel-center coordinate ``(cx, cy)``."""
        if not self:
            raise ValueError("centroid of an empty region")
        lengths = (self.stops - self.starts).astype(float)
        n = lengths.sum()
        # Sum of centers over a run [a, b) is (b - a) * (a + b) / 2.
        cx = (lengths * (self.starts + self.stops) / 2.0).sum() / n
        cy = (lengths * (self.rows + 0.5)).sum() / n
        return float(cx), float(cy)

    def contains(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if not self or rows.size == 0:
            return np.zeros(rows.shape, dtype=bool)
        # Runs are sorted by (row, start): locate the last run starting at or before (row, col).
        key_runs = self.rows * (self.width + 1) + self.starts
        key_pts = rows * (self.width + 1) + cols
        idx = np.searchsorted(key_runs, key_pts, side="right") - 1
        ok = idx >= 0
        idx_c = np.clip(idx, 0, None)
        return ok & (self.rows[idx_c] == rows) & (cols < self.stops[idx_c])

    # -- set algebra --------------------------------------------------------

    def _pairs(self, other: PixelRegion):
        lo = np.searchsorted(other.rows, self.rows, side="left")
        hi = np.searchsorted(other.rows, self.rows, side="right")
        mine, theirs = _expand_ranges(lo, hi)
        a = np.maximum(self.starts[mine], other.starts[theirs])
        b = np.minimum(self.stops[mine], other.stops[theirs])
        return self.rows[mine], a, b

    def intersection_count(self, other: PixelRegion) -> int:
        self._check_grid(other)
        if not self or not other:
            return 0
        _, a, b = self._pairs(other)
        return int(np.maximum(b - a, 0).sum())

    def intersection(self, other: PixelRegion) -> PixelRegion:
        self._check_grid(other)
        if not self or not other:
            return PixelRegion(self.width, self.height)
        rows, a, b = self._pairs(other)
        return PixelRegion(self.width, self.height, rows, a, b)

    def union(self, *others: PixelRegion) -> PixelRegion:
        for o in others:
            self._check_grid(o)
        parts = (self, *others)
        return PixelRegion(
            self.width,
            self.height,
            np.concatenate([p.rows for p in parts]),
            np.concatenate([p.starts for p in parts]),
            np.concatenate([p.stops for p in parts]),
        )


def region_overlap(a: PixelRegion, b: PixelRegion) -> int:
    """Number of pixels shared by two regions on the same grid."""
    return a.intersection_count(b)

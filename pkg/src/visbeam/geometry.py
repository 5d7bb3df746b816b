"""Projection of beam sectors onto the camera image.

A beam sector maps linearly onto a vertical pixel strip of the top image
row. With a tilted camera, physically vertical lines converge at the
vertical vanishing point, so each strip is widened into a trapezoid whose
two sides are lines through the vanishing point.

Pixel attribution: a pixel belongs to a footprint when its center lies
strictly right of the left side and on or left of the right side. Adjacent
footprints share one side, so a pixel centered exactly on it goes to the
lower-index beam and tiling codebooks leave neither gaps nor overlaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import BeamCodebook
from .regions import PixelRegion

COVER_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    width: int = 1280
    height: int = 720
    vanishing_point: tuple[float, float] | None = None
    # False forces rectangular footprints (uncorrected projection).
    perspective_correction: bool = True

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    @property
    def corrected(self) -> bool:
        return self.perspective_correction and self.vanishing_point is not None

    def top_row_x(self, x: float, y: float) -> float:
        """Column where the vertical-scene line through ``(x, y)`` meets row 0."""
        if not self.corrected:
            return x
        xv, yv = self.vanishing_point
        if yv == y:
            return x
        return (x * yv - xv * y) / (yv - y)


@dataclass(frozen=True)
class BeamStrip:
    beam_index: int
    x_start: float
    x_end: float


@dataclass(frozen=True)
class BeamFootprint:
    beam_index: int
    # top-left, top-right, bottom-right, bottom-left
    corners: tuple[tuple[float, float], ...]

    def side_x(self, y, height: float):
        """Left and right side columns at image row coordinate(s) ``y``."""
        (tl, _), (tr, _), (br, _), (bl, _) = self.corners
        t = np.asarray(y, dtype=float) / height
        return tl + (bl - tl) * t, tr + (br - tr) * t


def beam_to_strip(sector, steering_range, cam: CameraModel, beam_index: int = 0) -> BeamStrip:
    """Linear map of an angular sector onto image columns ``[0, W]``."""
    lo, hi = map(float, steering_range)
    a, b = map(float, sector)
    if not hi > lo:
        raise GeometryError(f"degenerate steering range {steering_range}")
    if a > b or a < lo or b > hi:
        raise GeometryError(f"sector {sector} not inside steering range {steering_range}")
    scale = cam.width / (hi - lo)
    return BeamStrip(beam_index, scale * (a - lo), scale * (b - lo))


def codebook_strips(codebook: BeamCodebook, cam: CameraModel) -> list[BeamStrip]:
    return [beam_to_strip(b.sector, codebook.steering_range, cam, q) for q, b in enumerate(codebook.beams)]


def strips_cover_width(strips, cam: CameraModel) -> bool:
    """True when the union of the strips is exactly ``[0, W]`` (within 1e-9 px)."""
    if isinstance(strips, BeamCodebook):
        strips = codebook_strips(strips, cam)
    spans = sorted((s.x_start, s.x_end) for s in strips)
    if not spans:
        return False
    reach = 0.0
    if spans[0][0] > COVER_TOL:
        return False
    for a, b in spans:
        if a > reach + COVER_TOL:
            return False
        reach = max(reach, b)
    return abs(reach - cam.width) <= COVER_TOL


def beam_footprint(strip: BeamStrip, cam: CameraModel) -> BeamFootprint:
    """Trapezoid of a strip: sides run from the top row through the vanishing point
    down to the bottom row ``y = H``; rectangle when correction is off."""
    H = float(cam.height)
    if not cam.corrected:
        xs, xe = strip.x_start, strip.x_end
        return BeamFootprint(strip.beam_index, ((xs, 0.0), (xe, 0.0), (xe, H), (xs, H)))
    xv, yv = cam.vanishing_point
    if yv == 0:
        raise GeometryError("vanishing point on the top image row makes the footprint degenerate")

    def bottom(x_top: float) -> float:
        return (xv - x_top) / yv * H + x_top

    return BeamFootprint(
        strip.beam_index,
        (
            (strip.x_start, 0.0),
            (strip.x_end, 0.0),
            (bottom(strip.x_end), H),
            (bottom(strip.x_start), H),
        ),
    )


def _footprint_row_bounds(fp: BeamFootprint, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Half-open column index bounds ``[start, stop)`` for every image row."""
    yc = np.arange(cam.height) + 0.5
    left, right = fp.side_x(yc, cam.height)
    # left < c + 0.5 <= right
    start = np.floor(left - 0.5).astype(np.int64) + 1
    stop = np.floor(right - 0.5).astype(np.int64) + 1
    start = np.clip(start, 0, cam.width)
    stop = np.clip(stop, 0, cam.width)
    return start, np.maximum(stop, start)


def rasterize_footprint(fp: BeamFootprint, cam: CameraModel) -> PixelRegion:
    start, stop = _footprint_row_bounds(fp, cam)
    return PixelRegion(cam.width, cam.height, np.arange(cam.height), start, stop)


class BeamLayout:
    """Strips, footprints and rasterized regions of a whole codebook on one camera.

    Footprints are convex, so each has at most one run per row; the layout keeps
    those runs as dense ``Q x H`` arrays for vectorized overlap counts.
    """

    def __init__(self, codebook: BeamCodebook, cam: CameraModel):
        self.codebook = codebook
        self.camera = cam
        self.strips = codebook_strips(codebook, cam)
        self.footprints = [beam_footprint(s, cam) for s in self.strips]
        bounds = [_footprint_row_bounds(fp, cam) for fp in self.footprints]
        self.row_start = np.stack([b[0] for b in bounds])
        self.row_stop = np.stack([b[1] for b in bounds])

    @property
    def size(self) -> int:
        return len(self.footprints)

    def region(self, q: int) -> PixelRegion:
        return PixelRegion(
            self.camera.width, self.camera.height, np.arange(self.camera.height), self.row_start[q], self.row_stop[q]
        )

    @cached_property
    def regions(self) -> list[PixelRegion]:
        return [self.region(q) for q in range(self.size)]

    @cached_property
    def labels(self) -> np.ndarray:
        """H x W beam index per pixel (-1 outside every footprint); overlaps go to the lower index."""
        out = np.full((self.camera.height, self.camera.width), -1, dtype=np.int32)
        for q in range(self.size - 1, -1, -1):
            for r in range(self.camera.height):
                a, b = self.row_start[q, r], self.row_stop[q, r]
                if b > a:
                    out[r, a:b] = q
        return out

    def overlaps(self, mask: PixelRegion) -> np.ndarray:
        """Pixel count shared by ``mask`` and each footprint (length Q)."""
        if (mask.width, mask.height) != (self.camera.width, self.camera.height):
            raise ValueError("mask grid does not match the camera")
        if not mask:
            return np.zeros(self.size, dtype=np.int64)
        fs = self.row_start[:, mask.rows]
        fe = self.row_stop[:, mask.rows]
        inter = np.minimum(fe, mask.stops[None, :]) - np.maximum(fs, mask.starts[None, :])
        return np.maximum(inter, 0).sum(axis=1)

    def midline_x(self, y: float) -> np.ndarray:
        """Column of every footprint's center line at row coordinate ``y``."""
        out = np.empty(self.size)
        for q, fp in enumerate(self.footprints):
            left, right = fp.side_x(y, self.camera.height)
            out[q] = (left + right) / 2.0
        return out

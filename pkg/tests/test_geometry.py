import numpy as np
import pytest

from visbeam.channel import ArrayConfig, BeamCodebook
from visbeam.geometry import (
    BeamStrip,
    CameraModel,
    GeometryError,
    beam_footprint,
    beam_to_strip,
    codebook_strips,
    rasterize_footprint,
    strips_cover_width,
)
from visbeam.regions import PixelRegion, region_overlap


def _inside_trapezoid(fp, cam):
    """Dense point-in-polygon test at pixel centers (left side open, right side closed)."""
    yy, xx = np.mgrid[0 : cam.height, 0 : cam.width] + 0.5
    (tl, _), (tr, _), (br, H), (bl, _) = fp.corners
    left = tl + (bl - tl) * yy / H
    right = tr + (br - tr) * yy / H
    return (xx > left) & (xx <= right)


@pytest.mark.parametrize("q", [16, 64, 128])
def test_strips_tile_image_width(q):
    cam = CameraModel()
    cb = BeamCodebook.uniform(q, (-45, 45), ArrayConfig())
    strips = codebook_strips(cb, cam)
    assert strips_cover_width(strips, cam)
    assert strips[0].x_start == 0 and strips[-1].x_end == pytest.approx(cam.width, abs=1e-9)
    assert not strips_cover_width(strips[:-1], cam)
    assert not strips_cover_width(strips[1:], cam)


def test_strip_is_linear_map():
    cam = CameraModel(1280, 720)
    s = beam_to_strip((-45, 0), (-45, 45), cam)
    assert (s.x_start, s.x_end) == (0, 640)
    with pytest.raises(GeometryError):
        beam_to_strip((-50, 0), (-45, 45), cam)
    with pytest.raises(GeometryError):
        beam_to_strip((0, 1), (10, 10), cam)


@pytest.mark.parametrize("vp", [(640.0, -1500.0), (900.0, -1800.0), (100.0, -400.0), (700.0, 3000.0)])
def test_footprint_sides_pass_through_vanishing_point(vp):
    cam = CameraModel(vanishing_point=vp)
    cb = BeamCodebook.uniform(64, (-45, 45), ArrayConfig())
    xv, yv = vp
    for strip in codebook_strips(cb, cam):
        fp = beam_footprint(strip, cam)
        left, right = fp.side_x(yv, cam.height)
        assert abs(left - xv) < 1e-6 and abs(right - xv) < 1e-6


def test_uncorrected_footprints_are_rectangles():
    for cam in (CameraModel(), CameraModel(vanishing_point=(640, -900), perspective_correction=False)):
        fp = beam_footprint(BeamStrip(0, 10.0, 30.0), cam)
        assert fp.corners == ((10, 0), (30, 0), (30, 720), (10, 720))


def test_vanishing_point_on_top_row_rejected():
    with pytest.raises(GeometryError):
        beam_footprint(BeamStrip(0, 0, 10), CameraModel(vanishing_point=(10.0, 0.0)))


def test_rasterized_footprint_matches_point_in_polygon(small_cam, small_layout):
    for fp in small_layout.footprints:
        assert np.array_equal(rasterize_footprint(fp, small_cam).to_dense(), _inside_trapezoid(fp, small_cam))


def test_footprints_partition_the_image(small_layout):
    total = sum(r.to_dense().astype(int) for r in small_layout.regions)
    inside = small_layout.labels >= 0
    assert total.max() == 1
    assert np.array_equal(total == 1, inside)
    for q, r in enumerate(small_layout.regions):
        assert np.all(small_layout.labels[r.to_dense()] == q)


def test_layout_overlaps_match_dense_brute_force(small_cam, small_layout, rng):
    for _ in range(200):
        dense = rng.random((small_cam.height, small_cam.width)) < rng.uniform(0.01, 0.3)
        mask = PixelRegion.from_dense(dense)
        q = int(rng.integers(small_layout.size))
        fp = small_layout.region(q)
        expected = int((dense & fp.to_dense()).sum())
        assert region_overlap(mask, fp) == expected
        assert small_layout.overlaps(mask)[q] == expected


def test_midline_at_top_row_is_strip_center(small_layout):
    mids = small_layout.midline_x(0.0)
    centers = [(s.x_start + s.x_end) / 2 for s in small_layout.strips]
    assert np.allclose(mids, centers)


def test_top_row_x_follows_vanishing_line():
    cam = CameraModel(vanishing_point=(900.0, -1800.0))
    x0 = cam.top_row_x(300.0, 600.0)
    # (x0, 0), (300, 600) and the vanishing point are collinear
    assert (300.0 - x0) * (-1800.0 - 0.0) == pytest.approx((900.0 - x0) * (600.0 - 0.0))
    assert CameraModel().top_row_x(300.0, 600.0) == 300.0

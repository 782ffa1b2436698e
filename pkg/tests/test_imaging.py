import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (naive_box_sum, raster_intersection_area, raster_iou,
                     raster_pixels)
from topg.imaging import (BoundingBox, ImageBuffer, ImageFormatError,
                          IntegralImage, TruncatedImageError, box_sum,
                          clip_box, integral_image, intersect,
                          intersection_area, iou, load_image, quantize_image,
                          quantize_pixel, save_image, union_area)


class TestBoundingBox:
    def test_rejects_degenerate_dims(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 0, 5)
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 5, -1)

    def test_scaled_about_center(self):
        box = BoundingBox(40, 40, 20, 20)
        assert box.scaled(1.4) == BoundingBox(36, 36, 28, 28)
        assert box.scaled(0.6) == BoundingBox(44, 44, 12, 12)

    def test_scaled_min_dim(self):
        assert BoundingBox(5, 5, 2, 2).scaled(0.01).w == 1


class TestRectAlgebra:
    def test_intersect_identity(self):
        a = BoundingBox(0, 0, 10, 10)
        assert intersect(a, a) == a

    def test_intersect_disjoint(self):
        assert intersect(BoundingBox(0, 0, 10, 10),
                         BoundingBox(20, 20, 5, 5)) is None
        assert intersection_area(BoundingBox(0, 0, 10, 10),
                                 BoundingBox(20, 20, 5, 5)) == 0

    def test_intersect_partial_overlap(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 0, 10, 10)
        # pixel-rasterization oracle: 50 shared pixels
        assert raster_intersection_area(a, b) == 50
        assert intersection_area(a, b) == 50

    def test_iou_worked_values(self):
        a = BoundingBox(0, 0, 10, 10)
        assert iou(a, a) == 1.0
        assert iou(a, BoundingBox(30, 0, 4, 4)) == 0.0
        b = BoundingBox(5, 0, 10, 10)
        assert iou(a, b) == pytest.approx(raster_iou(a, b))
        assert iou(a, b) == pytest.approx(1.0 / 3.0)

    def test_iou_vs_rasterization_exhaustive_8x8(self):
        boxes = [BoundingBox(x, y, w, h)
                 for x in range(4) for y in range(4)
                 for w in range(1, 5) for h in range(1, 5)]
        for a in boxes[::3]:
            for b in boxes[::3]:
                assert iou(a, b) == pytest.approx(raster_iou(a, b),
                                                  abs=1e-12)

    @given(st.integers(-8, 8), st.integers(-8, 8), st.integers(1, 8),
           st.integers(1, 8), st.integers(-8, 8), st.integers(-8, 8),
           st.integers(1, 8), st.integers(1, 8))
    @settings(max_examples=200, deadline=None)
    def test_iou_matches_rasterization(self, ax, ay, aw, ah, bx, by, bw, bh):
        a, b = BoundingBox(ax, ay, aw, ah), BoundingBox(bx, by, bw, bh)
        assert iou(a, b) == pytest.approx(raster_iou(a, b), abs=1e-12)
        assert union_area(a, b) == len(raster_pixels(a) | raster_pixels(b))

    def test_clip(self):
        assert clip_box(BoundingBox(-5, -5, 10, 10), 20, 20) == \
            BoundingBox(0, 0, 5, 5)
        assert clip_box(BoundingBox(30, 30, 5, 5), 20, 20) is None


class TestQuantize:
    def test_gray_endpoints(self):
        assert quantize_pixel(0, 32) == 0
        assert quantize_pixel(255, 32) == 31

    def test_rgb_joint_index(self):
        # floor(255*32/256)=31 in the red slot: 31 * 32^2
        assert quantize_pixel((255, 0, 0), 32) == 31 * 32 * 32 == 31744

    def test_bins_out_of_range(self):
        with pytest.raises(ValueError):
            quantize_pixel(0, 1)
        with pytest.raises(ValueError):
            quantize_pixel(0, 257)

    @pytest.mark.parametrize("bins", [2, 3, 32, 256])
    def test_monotone_and_surjective(self, bins):
        idx = [quantize_pixel(v, bins) for v in range(256)]
        assert all(b >= a for a, b in zip(idx, idx[1:]))
        assert set(idx) == set(range(bins))

    def test_quantize_image_matches_pixelwise(self, rng):
        arr = rng.integers(0, 256, size=(6, 7, 3), dtype=np.uint8)
        img = ImageBuffer.from_array(arr)
        grid = quantize_image(img, 32)
        for y in range(6):
            for x in range(7):
                assert grid[y, x] == quantize_pixel(arr[y, x], 32)


class TestIntegralImage:
    def test_constant_field(self):
        integ = integral_image(np.ones((2, 2)))
        assert box_sum(integ, BoundingBox(0, 0, 2, 2)) == 4.0

    def test_identity(self):
        integ = integral_image(np.array([[7.0]]))
        assert box_sum(integ, BoundingBox(0, 0, 1, 1)) == 7.0

    def test_zero_row_and_column(self):
        integ = integral_image(np.ones((3, 4)))
        assert (integ.table[0, :] == 0).all()
        assert (integ.table[:, 0] == 0).all()

    def test_random_8x8_every_subrectangle(self, rng):
        grid = rng.random((8, 8))
        integ = integral_image(grid)
        for y in range(8):
            for x in range(8):
                for h in range(1, 8 - y + 1):
                    for w in range(1, 8 - x + 1):
                        want = naive_box_sum(grid, x, y, w, h)
                        got = box_sum(integ, BoundingBox(x, y, w, h))
                        assert abs(got - want) <= 1e-9

    def test_every_grid_size_up_to_16(self, rng):
        # exhaustive sub-rectangle check across all grid sizes
        for gh in range(1, 17):
            for gw in range(1, 17):
                grid = rng.random((gh, gw))
                integ = integral_image(grid)
                for y in range(gh):
                    for x in range(gw):
                        for h in range(1, gh - y + 1):
                            for w in range(1, gw - x + 1):
                                want = float(grid[y:y + h, x:x + w].sum())
                                got = box_sum(integ,
                                              BoundingBox(x, y, w, h))
                                assert abs(got - want) <= 1e-9

    def test_outside_box_sums_to_zero(self):
        integ = integral_image(np.ones((4, 4)))
        assert box_sum(integ, BoundingBox(10, 10, 3, 3)) == 0.0
        assert box_sum(integ, BoundingBox(-2, 0, 2, 2)) == 0.0


class TestPnmIO:
    def test_pgm_identity_payload(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([255, 255, 255, 255]))
        img = load_image(str(p))
        assert (img.width, img.height, img.channels) == (2, 2, 1)
        assert (img.data == 255).all()

    def test_ppm_single_pixel(self, tmp_path):
        p = tmp_path / "a.ppm"
        p.write_bytes(b"P6\n1 1\n255\n" + bytes([10, 20, 30]))
        img = load_image(str(p))
        assert (img.width, img.height, img.channels) == (1, 1, 3)
        assert img.data[0, 0].tolist() == [10, 20, 30]

    def test_zero_dimension_header_rejected(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P6\n0 0\n255\n")
        with pytest.raises(ImageFormatError):
            load_image(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(str(tmp_path / "nope.pgm"))

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(TruncatedImageError):
            load_image(str(p))

    def test_header_comments(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# a comment\n2 1\n255\n" + bytes([1, 2]))
        img = load_image(str(p))
        assert img.data.tolist() == [[1, 2]]

    @pytest.mark.parametrize("channels", [1, 3])
    def test_round_trip_byte_identical(self, tmp_path, rng, channels):
        shape = (5, 6) if channels == 1 else (5, 6, 3)
        img = ImageBuffer.from_array(
            rng.integers(0, 256, size=shape, dtype=np.uint8))
        ext = "pgm" if channels == 1 else "ppm"
        p1 = tmp_path / f"one.{ext}"
        p2 = tmp_path / f"two.{ext}"
        save_image(img, str(p1))
        save_image(load_image(str(p1)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()

import numpy as np
import pytest

from oracles import counting_histogram
from topg.density import (DensityError, ForegroundModel, TriLabel,
                          build_trimap, estimate_model, response_map,
                          response_to_image, update_model)
from topg.imaging import BoundingBox, ImageBuffer, quantize_image


def solid_frame(w, h, color):
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    arr[:, :] = color
    return ImageBuffer.from_array(arr)


def two_color_frame(w, h, target, fg_color, bg_color):
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    arr[:, :] = bg_color
    arr[target.y:target.y2, target.x:target.x2] = fg_color
    return ImageBuffer.from_array(arr)


class TestTriMap:
    def test_worked_rectangles(self):
        tm = build_trimap((100, 100), BoundingBox(40, 40, 20, 20), 0.4)
        assert tm.outer == BoundingBox(36, 36, 28, 28)
        assert tm.inner == BoundingBox(44, 44, 12, 12)

    def test_labels_partition_region(self):
        tm = build_trimap((60, 50), BoundingBox(10, 12, 14, 9), 0.4)
        fg, blended, bg = tm.pixel_counts()
        assert fg + blended + bg == 60 * 50
        assert fg == tm.inner.area
        assert blended == tm.outer.area - tm.inner.area

    def test_tiny_margin_leaves_thin_band(self):
        # the margin cannot be exactly 0; a tiny one keeps inner == target
        tm = build_trimap((40, 40), BoundingBox(10, 10, 8, 8), 1e-9)
        assert tm.inner == BoundingBox(10, 10, 8, 8)
        assert tm.outer == BoundingBox(10, 10, 8, 8)
        fg, blended, bg = tm.pixel_counts()
        assert blended == 0
        assert fg == 64
        assert bg == 40 * 40 - 64

    def test_gamma_out_of_range(self):
        with pytest.raises(ValueError):
            build_trimap((40, 40), BoundingBox(0, 0, 4, 4), 0.0)
        with pytest.raises(ValueError):
            build_trimap((40, 40), BoundingBox(0, 0, 4, 4), 1.0)

    def test_target_covering_region_has_no_background(self):
        tm = build_trimap((20, 20), BoundingBox(0, 0, 20, 20), 0.4)
        assert tm.pixel_counts()[2] == 0
        frame = solid_frame(20, 20, (9, 9, 9))
        with pytest.raises(DensityError):
            estimate_model(frame, tm, 8)

    def test_tiny_target_degrades_to_center_pixel(self):
        tm = build_trimap((30, 30), BoundingBox(5, 5, 1, 1), 0.9)
        assert tm.inner.w == 1 and tm.inner.h == 1


class TestEstimateModel:
    def test_two_color_one_hot_histograms(self):
        target = BoundingBox(8, 8, 10, 10)
        frame = two_color_frame(40, 40, target, (200, 16, 16), (16, 16, 200))
        tm = build_trimap((40, 40), target, 0.4)
        model = estimate_model(frame, tm, 8)
        fg_bin = int(quantize_image(frame, 8)[12, 12])
        bg_bin = int(quantize_image(frame, 8)[0, 0])
        assert model.fg_hist[fg_bin] == 1.0
        assert model.bg_hist[bg_bin] == 1.0
        assert model.fg_hist.sum() == pytest.approx(1.0, abs=1e-12)

    def test_uniform_frame_symmetric(self):
        frame = solid_frame(30, 30, (77, 77, 77))
        tm = build_trimap((30, 30), BoundingBox(10, 10, 8, 8), 0.4)
        model = estimate_model(frame, tm, 8)
        assert np.array_equal(model.fg_hist, model.bg_hist)
        assert model.fg_hist.max() == 1.0

    def test_matches_counting_oracle_random_8x8(self, rng):
        for _ in range(20):
            arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
            frame = ImageBuffer.from_array(arr)
            tm = build_trimap((8, 8), BoundingBox(2, 2, 4, 4), 0.4)
            model = estimate_model(frame, tm, 4)
            q = quantize_image(frame, 4)
            fg_vals = q[tm.labels == TriLabel.FOREGROUND]
            want = counting_histogram(fg_vals.tolist(), 4)
            assert np.allclose(model.fg_hist[:len(want)], want, atol=0)
            bg_vals = q[tm.labels == TriLabel.BACKGROUND]
            want_bg = counting_histogram(bg_vals.tolist(), 4)
            assert np.allclose(model.bg_hist[:len(want_bg)], want_bg, atol=0)

    def test_blended_pixels_ignored(self):
        target = BoundingBox(8, 8, 10, 10)
        frame = two_color_frame(40, 40, target, (200, 16, 16), (16, 16, 200))
        # paint the blended band with a third color; histograms unchanged
        tm = build_trimap((40, 40), target, 0.4)
        arr = frame.data.copy()
        arr[tm.labels == TriLabel.BLENDED] = (66, 200, 66)
        painted = ImageBuffer.from_array(arr)
        model = estimate_model(painted, tm, 8)
        assert model.fg_hist.max() == 1.0
        assert model.bg_hist.max() == 1.0


class TestResponseMap:
    def build_model(self, fg, bg, bins=4):
        cells = bins ** 3
        f = np.zeros(cells)
        b = np.zeros(cells)
        for k, v in fg.items():
            f[k] = v
        for k, v in bg.items():
            b[k] = v
        return ForegroundModel(f, b, bins, 3)

    def test_symmetric_bin_gives_half(self):
        model = self.build_model({0: 0.5, 1: 0.5}, {0: 0.5, 1: 0.5})
        frame = solid_frame(4, 4, (0, 0, 0))
        resp = response_map(frame, model)
        assert (resp.values == 0.5).all()

    def test_zero_numerator(self):
        model = self.build_model({1: 1.0}, {0: 1.0})
        frame = solid_frame(4, 4, (0, 0, 0))  # quantizes to bin 0
        resp = response_map(frame, model)
        assert (resp.values == 0.0).all()

    def test_exact_rational(self):
        model = self.build_model({0: 0.3, 1: 0.7}, {0: 0.1, 1: 0.9})
        frame = solid_frame(2, 2, (0, 0, 0))
        resp = response_map(frame, model)
        assert resp.values[0, 0] == pytest.approx(0.75, abs=1e-12)

    def test_unseen_color_uninformative(self):
        model = self.build_model({1: 1.0}, {2: 1.0})
        frame = solid_frame(2, 2, (0, 0, 0))  # bin 0: unseen by both
        assert (response_map(frame, model).values == 0.5).all()

    def test_two_color_separation(self):
        target = BoundingBox(10, 10, 12, 12)
        frame = two_color_frame(48, 48, target, (220, 30, 30), (30, 30, 220))
        tm = build_trimap((48, 48), target, 0.4)
        model = estimate_model(frame, tm, 16)
        resp = response_map(frame, model)
        assert resp.values[tm.labels == TriLabel.FOREGROUND].min() == 1.0
        assert resp.values[tm.labels == TriLabel.BACKGROUND].max() == 0.0

    def test_values_in_unit_interval_random_frames(self, rng):
        for _ in range(25):
            arr = rng.integers(0, 256, size=(10, 12, 3), dtype=np.uint8)
            frame = ImageBuffer.from_array(arr)
            tm = build_trimap((12, 10), BoundingBox(3, 3, 5, 4), 0.4)
            model = estimate_model(frame, tm, 4)
            vals = response_map(frame, model).values
            assert vals.min() >= 0.0 and vals.max() <= 1.0

    def test_region_offsets(self):
        target = BoundingBox(10, 10, 12, 12)
        frame = two_color_frame(48, 48, target, (220, 30, 30), (30, 30, 220))
        tm = build_trimap((48, 48), target, 0.4)
        model = estimate_model(frame, tm, 16)
        region = BoundingBox(8, 9, 20, 18)
        resp = response_map(frame, model, region)
        assert (resp.x0, resp.y0) == (8, 9)
        assert resp.values.shape == (18, 20)
        full = response_map(frame, model)
        assert np.array_equal(resp.values, full.values[9:27, 8:28])

    def test_dump_image_scaling(self):
        model = self.build_model({0: 0.3, 1: 0.7}, {0: 0.1, 1: 0.9})
        frame = solid_frame(2, 2, (0, 0, 0))
        img = response_to_image(response_map(frame, model))
        assert (img.data == 191).all()  # round(0.75 * 255)


class TestUpdateModel:
    def make(self, fg0, bins=2):
        f = np.array([fg0, 1 - fg0])
        return ForegroundModel(f.copy(), f[::-1].copy(), bins, 1)

    def test_identity_endpoint(self):
        fresh, prev = self.make(0.5), self.make(0.3)
        out = update_model(fresh, prev, 1.0)
        assert np.array_equal(out.fg_hist, fresh.fg_hist)

    def test_exact_arithmetic(self):
        fresh, prev = self.make(0.5), self.make(0.3)
        out = update_model(fresh, prev, 0.01)
        assert out.fg_hist[0] == pytest.approx(0.302, abs=1e-12)

    def test_fixed_point(self):
        m = self.make(0.4)
        for lam in (0.01, 0.5, 0.99):
            out = update_model(m, m, lam)
            assert np.allclose(out.fg_hist, m.fg_hist, atol=1e-15)

    def test_convex_combination_and_normalization(self, rng):
        for _ in range(50):
            a = rng.random(8)
            b = rng.random(8)
            a /= a.sum()
            b /= b.sum()
            fresh = ForegroundModel(a.copy(), a.copy(), 2, 3)
            prev = ForegroundModel(b.copy(), b.copy(), 2, 3)
            lam = float(rng.uniform(0.01, 0.99))
            out = update_model(fresh, prev, lam)
            assert abs(out.fg_hist.sum() - 1.0) <= 1e-9
            lo = np.minimum(a, b) - 1e-15
            hi = np.maximum(a, b) + 1e-15
            assert ((out.fg_hist >= lo) & (out.fg_hist <= hi)).all()

    def test_bin_mismatch(self):
        with pytest.raises(ValueError):
            update_model(self.make(0.5, bins=2),
                         ForegroundModel(np.full(3, 1 / 3), np.full(3, 1 / 3),
                                         3, 1), 0.5)

    def test_learning_rate_range(self):
        m = self.make(0.5)
        with pytest.raises(ValueError):
            update_model(m, m, 0.0)
        with pytest.raises(ValueError):
            update_model(m, m, 1.5)

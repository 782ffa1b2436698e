import math

import numpy as np
import pytest

from conftest import random_box
from oracles import naive_rank
from topg.density import ResponseMap
from topg.imaging import BoundingBox
from topg.proposals import Proposal, TargetSpec
from topg.ranking import (AffinityConfig, color_affinity, combined_affinity,
                          rank_proposals, shape_affinity, size_affinity)


class TestShapeAffinity:
    def test_identity(self):
        assert shape_affinity(0.37, 0.37) == 1.0

    def test_unit_gap(self):
        assert shape_affinity(1.5, 0.5) == pytest.approx(
            0.36787944117144233, abs=1e-15)

    def test_multiplicativity(self):
        e1 = shape_affinity(1.0, 0.0)
        e2 = shape_affinity(2.0, 0.0)
        assert e2 == pytest.approx(e1 * e1, rel=1e-12)

    def test_rejects_invalid(self):
        with pytest.raises(ValueError):
            shape_affinity(-0.1, 0.0)
        with pytest.raises(ValueError):
            shape_affinity(float("nan"), 0.0)


class TestColorAffinity:
    def test_constant_fields(self):
        ones = ResponseMap(np.ones((20, 20)))
        zeros = ResponseMap(np.zeros((20, 20)))
        box = BoundingBox(4, 5, 8, 6)
        assert color_affinity(ones, box) == 1.0
        assert color_affinity(zeros, box) == 0.0

    def test_half_and_half(self):
        vals = np.zeros((10, 20))
        vals[:, 10:] = 1.0
        resp = ResponseMap(vals)
        assert color_affinity(resp, BoundingBox(5, 0, 10, 10)) == \
            pytest.approx(0.5, abs=1e-12)

    def test_matches_naive_mean(self, rng):
        vals = rng.random((16, 16))
        resp = ResponseMap(vals)
        for _ in range(50):
            box = random_box(rng, 16, 16)
            want = float(vals[box.y:box.y2, box.x:box.x2].mean())
            assert color_affinity(resp, box) == pytest.approx(want, abs=1e-9)

    def test_respects_origin(self):
        vals = np.zeros((4, 4))
        vals[0, 0] = 1.0
        resp = ResponseMap(vals, x0=10, y0=20)
        assert color_affinity(resp, BoundingBox(10, 20, 1, 1)) == 1.0
        with pytest.raises(ValueError):
            color_affinity(resp, BoundingBox(0, 0, 2, 2))


class TestSizeAffinity:
    def target(self, w, h):
        return TargetSpec(BoundingBox(0, 0, w, h), 0.0)

    def test_identity_both_modes(self):
        t = self.target(20, 10)
        box = BoundingBox(3, 3, 20, 10)
        for mode in ("literal", "normalized"):
            assert size_affinity(box, t, AffinityConfig(mode)) == 1.0

    def test_literal_one_pixel(self):
        t = self.target(20, 10)
        z = size_affinity(BoundingBox(0, 0, 21, 10), t,
                          AffinityConfig("literal"))
        assert z == pytest.approx(0.36787944117144233, abs=1e-15)

    def test_normalized_relative(self):
        t = self.target(20, 10)
        z = size_affinity(BoundingBox(0, 0, 30, 10), t,
                          AffinityConfig("normalized"))
        assert z == pytest.approx(0.6065306597126334, abs=1e-15)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            AffinityConfig("bogus")


class TestCombinedAffinity:
    def test_values(self):
        assert combined_affinity(1.0, 1.0, 1.0) == 1.0
        assert combined_affinity(0.9, 0.0, 0.8) == 0.0
        assert combined_affinity(0.5, 0.5, 0.5) == pytest.approx(0.125)


class TestRankProposals:
    def make_response(self, rng, w=40, h=30):
        return ResponseMap(rng.random((h, w)))

    def test_singleton(self, rng):
        resp = self.make_response(rng)
        target = TargetSpec(BoundingBox(5, 5, 10, 8), 0.1)
        props = [Proposal(BoundingBox(6, 6, 10, 8), 0.2, "frame")]
        out = rank_proposals(props, target, resp)
        assert len(out) == 1
        p = out[0]
        assert p.s == pytest.approx(math.exp(-0.1))
        assert 0.0 <= p.c <= 1.0
        assert p.a == pytest.approx(p.s * p.c * p.z)

    def test_color_dominates_same_shape_size(self):
        vals = np.zeros((30, 40))
        vals[5:15, 5:15] = 1.0  # clean response over the "target"
        resp = ResponseMap(vals)
        target = TargetSpec(BoundingBox(5, 5, 10, 10), 0.2)
        on_target = Proposal(BoundingBox(5, 5, 10, 10), 0.2, "frame")
        on_background = Proposal(BoundingBox(25, 15, 10, 10), 0.2, "frame")
        out = rank_proposals([on_background, on_target], target, resp)
        assert out[0].box == on_target.box

    def test_matches_naive_oracle_random(self, rng):
        resp = self.make_response(rng)
        target = TargetSpec(BoundingBox(10, 10, 12, 9), 0.15)
        props = []
        for _ in range(100):
            box = random_box(rng, 40, 30, min_dim=2)
            props.append(Proposal(box, float(rng.random()), "frame"))
        out = rank_proposals(list(props), target, resp)
        entries = [(p.box, p.rho, p.source) for p in props]
        want = naive_rank(entries, target.rho_t, resp.values, (0, 0),
                          target.w, target.h, normalized_size=True)
        assert [p.box for p in out] == [props[i].box for i in want]
        for p in out:
            assert 0.0 <= min(p.s, p.c, p.z, p.a) \
                and max(p.s, p.c, p.z, p.a) <= 1.0

    def test_literal_mode_oracle(self, rng):
        resp = self.make_response(rng)
        target = TargetSpec(BoundingBox(10, 10, 12, 9), 0.15)
        props = [Proposal(random_box(rng, 40, 30, min_dim=2),
                          float(rng.random()), "response")
                 for _ in range(60)]
        out = rank_proposals(list(props), target, resp,
                             AffinityConfig("literal"))
        entries = [(p.box, p.rho, p.source) for p in props]
        want = naive_rank(entries, target.rho_t, resp.values, (0, 0),
                          target.w, target.h, normalized_size=False)
        assert [p.box for p in out] == [props[i].box for i in want]

    def test_permutation_invariance(self, rng):
        resp = self.make_response(rng)
        target = TargetSpec(BoundingBox(8, 8, 10, 10), 0.3)
        props = [Proposal(random_box(rng, 40, 30, min_dim=2),
                          float(rng.random()), "frame") for _ in range(50)]
        a = rank_proposals(list(props), target, resp)
        shuffled = list(props)
        rng.shuffle(shuffled)
        b = rank_proposals(shuffled, target, resp)
        assert [p.box for p in a] == [p.box for p in b]

    def test_sorted_by_combined_descending(self, rng):
        resp = self.make_response(rng)
        target = TargetSpec(BoundingBox(8, 8, 10, 10), 0.3)
        props = [Proposal(random_box(rng, 40, 30, min_dim=2),
                          float(rng.random()), "frame") for _ in range(40)]
        out = rank_proposals(props, target, resp)
        avals = [p.a for p in out]
        assert avals == sorted(avals, reverse=True)

    def test_empty_list(self):
        resp = ResponseMap(np.ones((5, 5)))
        assert rank_proposals([], TargetSpec(BoundingBox(0, 0, 2, 2), 0.0),
                              resp) == []

import numpy as np
import pytest

from cdr_system.config import BagConfig
from cdr_system.constants import OC, OD
from cdr_system.core.boxes import BBox, TightBoxLabel
from cdr_system.segmentation.bags import (
    BagSet,
    bags_to_records,
    crossing_lines,
    negative_mask,
    positive_bags,
)


def _family(bags, family):
    return [b for b in bags if b.family == family]


class TestCrossingLines:
    def test_axis_aligned_counts(self):
        bags = crossing_lines(BBox(50, 100, 80, 140), 0.0, (200, 200))
        top_bottom = _family(bags, "top-bottom")
        left_right = _family(bags, "left-right")
        assert len(top_bottom) == 30
        assert len(left_right) == 40
        assert all(len(b) == 40 for b in top_bottom)
        assert all(len(b) == 30 for b in left_right)

    def test_axis_aligned_columns_cover_box(self):
        box = BBox(5, 3, 12, 9)
        bags = _family(crossing_lines(box, 0.0, (20, 20)), "top-bottom")
        covered = {(int(x), int(y)) for b in bags for x, y in b.pixels}
        expected = {(x, y) for x in range(5, 12) for y in range(3, 9)}
        assert covered == expected

    @pytest.mark.parametrize("theta", [-40.0, -25.0, 10.0, 25.0, 40.0])
    def test_pixels_inside_box(self, theta):
        box = BBox(6.3, 4.0, 29.5, 37.2)
        bags = crossing_lines(box, theta, (48, 48))
        assert bags
        for bag in bags:
            assert len(bag) > 0
            assert box.contains(bag.xs + 0.5, bag.ys + 0.5).all()

    def test_one_pixel_per_row(self):
        bags = _family(crossing_lines(BBox(10, 10, 30, 40), 25.0, (64, 64)), "top-bottom")
        for bag in bags:
            assert len(np.unique(bag.ys)) == len(bag)

    def test_clipped_to_image(self):
        bags = crossing_lines(BBox(-5, -5, 10, 10), 0.0, (8, 8))
        for bag in bags:
            assert (bag.xs >= 0).all() and (bag.xs < 8).all()
            assert (bag.ys >= 0).all() and (bag.ys < 8).all()

    def test_box_outside_image(self):
        assert crossing_lines(BBox(100, 100, 110, 110), 25.0, (48, 48)) == []

    def test_deterministic(self):
        box = BBox(3.2, 7.9, 21.4, 30.1)
        a = crossing_lines(box, 30.0, (40, 40))
        b = crossing_lines(box, 30.0, (40, 40))
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert np.array_equal(x.pixels, y.pixels)


class TestPositiveBags:
    def test_absent_class(self):
        label = TightBoxLabel.from_boxes([(BBox(0, 0, 4, 4), OD)])
        assert positive_bags(label, OC, BagConfig(), (8, 8)) == []

    def test_additive_over_angles(self, cdr_label, small_dims):
        cfg = BagConfig()
        box = cdr_label.box_of(OD)
        per_angle = [len(crossing_lines(box, t, small_dims)) for t in cfg.angles]
        assert len(cfg.angles) == 9
        assert per_angle[cfg.angles.index(0.0)] == 32 + 36
        assert len(positive_bags(cdr_label, OD, cfg, small_dims)) == sum(per_angle)

    def test_additive_over_boxes(self):
        a, b = BBox(2, 2, 10, 12), BBox(20, 5, 30, 15)
        cfg = BagConfig()
        both = TightBoxLabel.from_boxes([(a, OC), (b, OC)])
        single = [TightBoxLabel.from_boxes([(box, OC)]) for box in (a, b)]
        n = [len(positive_bags(lab, OC, cfg, (32, 32))) for lab in single]
        assert len(positive_bags(both, OC, cfg, (32, 32))) == sum(n)


class TestNegativeMask:
    def test_absent_class_is_all_negative(self):
        label = TightBoxLabel.from_boxes([(BBox(0, 0, 4, 4), OD)])
        assert negative_mask(label, OC, (6, 7)).sum() == 42

    def test_complement_count(self, cdr_label, small_dims):
        neg = negative_mask(cdr_label, OD, small_dims)
        assert neg.sum() == 48 * 48 - 32 * 36

    def test_classes_independent(self, cdr_label, small_dims):
        neg = negative_mask(cdr_label, OC, small_dims)
        # inside OD but outside OC
        assert neg[8, 10] == 1
        assert neg[20, 20] == 0

    def test_no_overlap_with_bags(self, cdr_label, small_dims):
        for c in (OC, OD):
            neg = negative_mask(cdr_label, c, small_dims)
            for bag in positive_bags(cdr_label, c, BagConfig(), small_dims):
                assert not neg[bag.ys, bag.xs].any()


class TestBagSet:
    def test_packing(self, cdr_label, small_dims):
        bags = positive_bags(cdr_label, OC, BagConfig(), small_dims)
        packed = BagSet(bags, small_dims)
        assert len(packed) == len(bags)
        assert packed.lengths.sum() == packed.xs.size
        for original, unpacked in zip(bags, packed.bags()):
            assert np.array_equal(original.pixels, unpacked.pixels)
            assert original.angle == unpacked.angle

    def test_empty(self):
        packed = BagSet([], (4, 4))
        assert len(packed) == 0
        assert packed.flat_index.size == 0

    def test_records(self, cdr_label, small_dims):
        bags = crossing_lines(cdr_label.box_of(OC), 0.0, small_dims, OC)
        records = bags_to_records(bags[:2])
        assert records[0]["class"] == "oc"
        assert records[0]["family"] == "top-bottom"
        assert len(records[0]["pixels"]) == 16

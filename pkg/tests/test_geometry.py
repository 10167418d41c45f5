import numpy as np
import pytest

from cdr_system.core.boxes import BBox, TightBoxLabel, iou, mask_to_tight_box, rasterize_box
from cdr_system.core.maps import check_field, check_map, logit, sigmoid
from cdr_system.errors import (
    DegenerateBoxError,
    EmptyObjectError,
    InvalidParameterError,
    ShapeMismatchError,
)


class TestBBox:
    def test_dimensions(self):
        box = BBox(50, 100, 80, 140)
        assert box.width == 30
        assert box.height == 40
        assert box.area == 1200
        assert box.center == (65.0, 120.0)

    def test_coordinates_are_float(self):
        box = BBox(1, 2, 3, 4)
        assert all(isinstance(v, float) for v in box.as_tuple())

    @pytest.mark.parametrize("coords", [(0, 0, 0, 1), (2, 0, 1, 1), (0, 3, 1, 3), (0, 0, np.nan, 1)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(DegenerateBoxError):
            BBox(*coords)

    def test_contains_is_half_open(self):
        box = BBox(0, 0, 2, 2)
        assert box.contains(0.0, 0.0)
        assert box.contains(1.99, 1.5)
        assert not box.contains(2.0, 1.0)
        assert not box.contains(1.0, 2.0)

    def test_contains_elementwise(self):
        box = BBox(0, 0, 2, 2)
        out = box.contains(np.array([0.5, 2.5]), np.array([0.5, 0.5]))
        assert out.tolist() == [True, False]


class TestIoU:
    def test_identical(self):
        box = BBox(3, 4, 10, 20)
        assert iou(box, box) == pytest.approx(1.0)

    def test_disjoint(self):
        assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)) == 0.0

    def test_overlap(self):
        assert iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) == pytest.approx(1 / 7)

    def test_symmetric_and_bounded(self, rng):
        for _ in range(200):
            xa, xb = np.sort(rng.uniform(0, 10, 2)) + [0, 0.1]
            ya, yb = np.sort(rng.uniform(0, 10, 2)) + [0, 0.1]
            xc, xd = np.sort(rng.uniform(0, 10, 2)) + [0, 0.1]
            yc, yd = np.sort(rng.uniform(0, 10, 2)) + [0, 0.1]
            a, b = BBox(xa, ya, xb, yb), BBox(xc, yc, xd, yd)
            assert iou(a, b) == pytest.approx(iou(b, a))
            assert 0.0 <= iou(a, b) <= 1.0


class TestMaskToTightBox:
    def test_single_pixel(self):
        mask = np.zeros((20, 20), dtype=np.uint8)
        mask[7, 5] = 1
        assert mask_to_tight_box(mask) == BBox(5, 7, 6, 8)

    def test_full_image(self):
        assert mask_to_tight_box(np.ones((12, 17))) == BBox(0, 0, 17, 12)

    def test_rectangle(self):
        mask = np.zeros((200, 200), dtype=np.uint8)
        mask[100:140, 50:80] = 1
        box = mask_to_tight_box(mask)
        assert box == BBox(50, 100, 80, 140)
        assert box.height == 40

    def test_empty_mask(self):
        with pytest.raises(EmptyObjectError):
            mask_to_tight_box(np.zeros((5, 5)))

    def test_rasterize_roundtrip_for_integer_boxes(self, rng):
        for _ in range(50):
            xl, yt = rng.integers(0, 20, 2)
            w, h = rng.integers(1, 12, 2)
            box = BBox(xl, yt, xl + w, yt + h)
            assert mask_to_tight_box(rasterize_box(box, (32, 32))) == box

    def test_every_foreground_pixel_inside(self, rng):
        mask = rng.random((30, 30)) > 0.97
        mask[3, 4] = True
        box = mask_to_tight_box(mask)
        ys, xs = np.nonzero(mask)
        assert box.contains(xs + 0.5, ys + 0.5).all()


class TestTightBoxLabel:
    def test_class_ids_checked(self):
        with pytest.raises(InvalidParameterError):
            TightBoxLabel.from_boxes([(BBox(0, 0, 1, 1), 3)], num_classes=2)

    def test_records_roundtrip(self, cdr_label):
        records = cdr_label.to_records()
        assert records[0]["class"] == "oc"
        assert TightBoxLabel.from_records(records) == cdr_label

    def test_cdr_mode_allows_one_box_per_class(self, cdr_label):
        cdr_label.validate_cdr_mode()
        two_cups = TightBoxLabel.from_boxes([(BBox(0, 0, 2, 2), 1), (BBox(3, 3, 5, 5), 1)])
        with pytest.raises(InvalidParameterError):
            two_cups.validate_cdr_mode()

    def test_boxes_of(self, cdr_label):
        assert cdr_label.box_of(1) == BBox(16, 14, 32, 30)
        assert cdr_label.boxes_of(2) == [BBox(8, 6, 40, 42)]


class TestMaps:
    def test_sigmoid_logit_inverse(self):
        p = np.array([0.1, 0.5, 0.9])
        assert np.allclose(sigmoid(logit(p)), p)

    def test_sigmoid_is_overflow_safe(self):
        with np.errstate(over="raise"):
            p = sigmoid(np.array([-1000.0, 1000.0]))
        assert p.tolist() == [0.0, 1.0]

    def test_check_map_shape(self):
        with pytest.raises(ShapeMismatchError):
            check_map(np.zeros((4, 4)))
        with pytest.raises(ShapeMismatchError):
            check_map(np.zeros((2, 4, 4)), num_classes=3)
        with pytest.raises(ShapeMismatchError):
            check_map(np.zeros((2, 4, 4)), dims=(4, 5))

    def test_check_field_shape(self):
        check_field(np.zeros((2, 4, 3, 3)), 2, (3, 3))
        with pytest.raises(ShapeMismatchError):
            check_field(np.zeros((2, 3, 3, 3)), 2)

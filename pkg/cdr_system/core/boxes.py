"""
Boxes, tight-box labels and elementary geometry

Pixel (x, y) occupies the unit cell [x, x+1) x [y, y+1); a tight box around an
object of N rows therefore has height exactly N. Coordinates are float64.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from ..constants import CLASS_IDS, CLASS_NAMES
from ..errors import DegenerateBoxError, EmptyObjectError, InvalidParameterError

Dims = Tuple[int, int]  # (H, W)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box (xl, yt, xr, yb) in continuous image coordinates"""

    xl: float
    yt: float
    xr: float
    yb: float

    def __post_init__(self):
        for name in ("xl", "yt", "xr", "yb"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (np.isfinite([self.xl, self.yt, self.xr, self.yb]).all()):
            raise DegenerateBoxError(f"non-finite box coordinates {self.as_tuple()}")
        if not (self.xl < self.xr and self.yt < self.yb):
            raise DegenerateBoxError(
                f"box {self.as_tuple()} has non-positive width or height"
            )

    @property
    def width(self) -> float:
        return self.xr - self.xl

    @property
    def height(self) -> float:
        """Vertical diameter"""
        return self.yb - self.yt

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.xl + self.xr) / 2.0, (self.yt + self.yb) / 2.0

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.xl, self.yt, self.xr, self.yb)

    def contains(self, x, y):
        """Half-open membership [xl, xr) x [yt, yb); works elementwise on arrays"""
        return (x >= self.xl) & (x < self.xr) & (y >= self.yt) & (y < self.yb)

    def scaled_y(self, s: float) -> "BBox":
        return BBox(self.xl, self.yt * s, self.xr, self.yb * s)


@dataclass(frozen=True)
class LabelEntry:
    box: BBox
    class_id: int


@dataclass(frozen=True)
class TightBoxLabel:
    """Tight-box supervision B = {(b_k, c_k)} of one image"""

    entries: Tuple[LabelEntry, ...] = field(default_factory=tuple)
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for entry in self.entries:
            if not (1 <= entry.class_id <= self.num_classes):
                raise InvalidParameterError(
                    f"class id {entry.class_id} outside 1..{self.num_classes}"
                )

    @classmethod
    def from_boxes(cls, boxes: Iterable[Tuple[BBox, int]], num_classes: int = 2) -> "TightBoxLabel":
        return cls(tuple(LabelEntry(b, int(c)) for b, c in boxes), num_classes)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[LabelEntry]:
        return iter(self.entries)

    def boxes_of(self, class_id: int) -> List[BBox]:
        return [e.box for e in self.entries if e.class_id == class_id]

    def box_of(self, class_id: int) -> Optional[BBox]:
        boxes = self.boxes_of(class_id)
        return boxes[0] if boxes else None

    def validate_cdr_mode(self) -> None:
        """CDR mode: C = 2 and at most one box per class"""
        if self.num_classes != 2:
            raise InvalidParameterError(f"CDR mode needs 2 classes, got {self.num_classes}")
        for cid in (1, 2):
            if len(self.boxes_of(cid)) > 1:
                raise InvalidParameterError(f"CDR mode allows one box per class, class {cid} has more")

    def to_records(self) -> List[Dict]:
        """JSON records {class, xl, yt, xr, yb}"""
        return [
            {"class": CLASS_NAMES.get(e.class_id, e.class_id), "xl": e.box.xl, "yt": e.box.yt,
             "xr": e.box.xr, "yb": e.box.yb}
            for e in self.entries
        ]

    @classmethod
    def from_records(cls, records: Iterable[Dict], num_classes: int = 2) -> "TightBoxLabel":
        boxes = []
        for rec in records:
            cid = rec["class"]
            cid = CLASS_IDS[cid] if isinstance(cid, str) else int(cid)
            boxes.append((BBox(rec["xl"], rec["yt"], rec["xr"], rec["yb"]), cid))
        return cls.from_boxes(boxes, num_classes)


def mask_to_tight_box(mask: np.ndarray) -> BBox:
    """
    Smallest box enclosing every foreground pixel cell.

    Raises:
        EmptyObjectError: no foreground pixel
    """
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 2:
        raise InvalidParameterError(f"mask must be 2-D, got shape {mask.shape}")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyObjectError()
    return BBox(cols[0], rows[0], cols[-1] + 1, rows[-1] + 1)


def rasterize_box(box: BBox, dims: Dims) -> np.ndarray:
    """Binary mask of the pixels whose centers lie inside the box"""
    h, w = dims
    ys, xs = np.mgrid[0:h, 0:w]
    return box.contains(xs + 0.5, ys + 0.5).astype(np.uint8)


def pixel_centers(dims: Dims) -> Tuple[np.ndarray, np.ndarray]:
    """(xc, yc) grids of pixel-center coordinates, each H x W"""
    h, w = dims
    yc, xc = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    return xc, yc


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two valid boxes; 0 when disjoint"""
    iw = max(0.0, min(a.xr, b.xr) - max(a.xl, b.xl))
    ih = max(0.0, min(a.yb, b.yb) - max(a.yt, b.yt))
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)

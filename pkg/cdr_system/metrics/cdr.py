"""
CDR post-processing

The box of each class is decoded at the location of highest segmentation
probability; CDR is the ratio of the OC and OD vertical diameters. Where the
offsets there do not decode, predict_cdr can fall back to the most probable
location that does.
"""
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..constants import CLASS_NAMES, OC, OD
from ..core.boxes import BBox, mask_to_tight_box
from ..core.maps import check_field, check_map
from ..errors import DegenerateBoxError, InvalidParameterError
from ..regression.targets import decode_box

Location = Tuple[float, float]


@dataclass(frozen=True)
class CdrResult:
    box_oc: BBox
    box_od: BBox
    cdr: float
    locations: Dict[int, Location]
    # classes decoded at the best decodable location instead of the arg-max
    fallback: Tuple[int, ...] = ()

    def to_dict(self) -> Dict:
        return {
            "cdr": self.cdr,
            "box_oc": list(self.box_oc.as_tuple()),
            "box_od": list(self.box_od.as_tuple()),
            "location_oc": list(self.locations[OC]),
            "location_od": list(self.locations[OD]),
            "fallback": [CLASS_NAMES[c] for c in self.fallback],
        }


def select_location(p: np.ndarray, class_id: int,
                    selected: Optional[np.ndarray] = None) -> Tuple[int, int]:
    """
    (row, col) of the maximal class probability, smallest row-major index on ties.

    Args:
        selected: optional H x W mask restricting the search
    """
    p = check_map(p)
    pc = p[class_id - 1]
    if pc.size == 0:
        raise InvalidParameterError("empty probability map")
    if selected is not None:
        selected = np.asarray(selected).astype(bool)
        if not selected.any():
            raise InvalidParameterError(f"no selected location for class {class_id}")
        pc = np.where(selected, pc, -np.inf)
    row, col = divmod(int(np.argmax(pc)), pc.shape[1])
    return row, col


def select_prediction(p: np.ndarray, v: np.ndarray, class_id: int, s: float,
                      selected: Optional[np.ndarray] = None) -> BBox:
    """
    Decode the class box at the highest-probability location.

    Raises:
        DegenerateBoxError: offsets there decode to an empty box
    """
    box, _ = _select_and_decode(p, v, class_id, s, selected)
    return box


def _select_and_decode(p, v, class_id, s, selected=None) -> Tuple[BBox, Location]:
    p = check_map(p)
    v = check_field(v, p.shape[0], p.shape[1:])
    row, col = select_location(p, class_id, selected)
    location = (col + 0.5, row + 0.5)
    return decode_box(location, v[class_id - 1, :, row, col], s), location


def decodable_mask(v: np.ndarray, class_id: int, s: float) -> np.ndarray:
    """H x W mask of the locations whose class offsets decode to a valid box"""
    vc = np.asarray(v, dtype=np.float64)[class_id - 1]
    h, w = vc.shape[1:]
    yc, xc = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    xl, yt = xc - s * vc[0], yc - s * vc[1]
    xr, yb = xc + s * vc[2], yc + s * vc[3]
    return np.isfinite(vc).all(axis=0) & (xl < xr) & (yt < yb)


def select_decodable(p: np.ndarray, v: np.ndarray, class_id: int, s: float,
                     selected: Optional[np.ndarray] = None) -> Tuple[BBox, Location]:
    """
    Decode at the highest-probability location among those whose offsets
    form a valid box (same tie-break as select_location).

    Raises:
        DegenerateBoxError: no location of the class decodes to a valid box
    """
    p = check_map(p)
    v = check_field(v, p.shape[0], p.shape[1:])
    ok = decodable_mask(v, class_id, s)
    if selected is not None:
        ok &= np.asarray(selected).astype(bool)
    if not ok.any():
        raise DegenerateBoxError(
            f"no location decodes to a valid box for class {CLASS_NAMES.get(class_id, class_id)}",
            suggestion="The regression field was never optimized; check the selection threshold T",
        )
    row, col = select_location(p, class_id, ok)
    location = (col + 0.5, row + 0.5)
    return decode_box(location, v[class_id - 1, :, row, col], s), location


def cdr_from_boxes(box_oc: BBox, box_od: BBox) -> float:
    """Vertical cup-to-disc ratio"""
    return box_oc.height / box_od.height


def boxes_from_mask(prob: np.ndarray, threshold: float = 0.5) -> Tuple[BBox, BBox]:
    """
    Tight boxes of the thresholded OC and OD probability maps.

    Raises:
        EmptyObjectError: a class has no pixel above threshold
    """
    prob = check_map(prob, 2)
    return mask_to_tight_box(prob[OC - 1] > threshold), mask_to_tight_box(prob[OD - 1] > threshold)


def cdr_from_mask(prob: np.ndarray, threshold: float = 0.5) -> float:
    """Segmentation-only CDR (no regression)"""
    return cdr_from_boxes(*boxes_from_mask(prob, threshold))


def predict_cdr(p: np.ndarray, v: np.ndarray, normalizers: Mapping[int, float],
                selected: Optional[np.ndarray] = None, fallback: bool = False) -> CdrResult:
    """
    Regression-based CDR of one image.

    Args:
        selected: optional C x H x W mask; when given the search per class is
            restricted to it
        fallback: when the arg-max offsets do not decode, use select_decodable
            instead of raising
    Raises:
        DegenerateBoxError: decoding failed (and the fallback found nothing)
    """
    boxes, locations, used = {}, {}, []
    for c in (OC, OD):
        mask = None if selected is None else selected[c - 1]
        try:
            boxes[c], locations[c] = _select_and_decode(p, v, c, normalizers[c], mask)
        except DegenerateBoxError:
            if not fallback:
                raise
            boxes[c], locations[c] = select_decodable(p, v, c, normalizers[c], mask)
            used.append(c)
    return CdrResult(
        box_oc=boxes[OC],
        box_od=boxes[OD],
        cdr=cdr_from_boxes(boxes[OC], boxes[OD]),
        locations=locations,
        fallback=tuple(used),
    )

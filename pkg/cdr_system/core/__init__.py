"""Geometry core - boxes, labels, masks and maps"""
from .boxes import (
    BBox,
    LabelEntry,
    TightBoxLabel,
    iou,
    mask_to_tight_box,
    pixel_centers,
    rasterize_box,
)
from .maps import check_field, check_map, logit, sigmoid, sigmoid_grad

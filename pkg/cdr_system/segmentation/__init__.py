"""Weak segmentation - MIL bags, smooth maximum, segmentation loss"""
from .bags import Bag, BagSet, bags_to_records, crossing_lines, negative_mask, positive_bags
from .seg_loss import (
    SegLossResult,
    WeakSegmentationLoss,
    bag_prediction,
    pairwise_loss,
    seg_loss,
    unary_loss,
)
from .smooth_max import alpha_quasimax, alpha_softmax, hard_max, segment_max, smooth_max

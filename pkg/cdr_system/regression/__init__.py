"""Box regression - targets, expected IoU selection, smooth-L1 loss"""
from .eiou import eiou, eiou_array, eiou_oracle, eiou_table, select_positives, selection_area_fraction
from .reg_loss import BoxRegressionLoss, RegLossResult, RegressionTargets, regression_loss, smooth_l1
from .targets import (
    RegressionTarget,
    decode_box,
    encode_target,
    estimate_normalizers,
    match_grid,
    match_label,
    resolve_normalizers,
    target_grid,
)

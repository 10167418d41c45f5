"""CDR metrics - post-processing, evaluation, grader tables"""
from .cdr import (
    CdrResult,
    boxes_from_mask,
    cdr_from_boxes,
    cdr_from_mask,
    decodable_mask,
    predict_cdr,
    select_decodable,
    select_location,
    select_prediction,
)
from .evaluation import (
    METRIC_COLUMNS,
    MetricReport,
    PairwiseTable,
    cdr_error,
    dice,
    evaluate_dataset,
    evaluate_sample,
    f1_glaucoma,
    pairwise_table,
    summarize,
    vertical_diameter_mad,
)

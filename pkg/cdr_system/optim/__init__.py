"""Direct optimizer - gradient descent over per-image predictions"""
from .direct_optimizer import (
    TRACE_COLUMNS,
    DirectOptimizer,
    OptimizationResult,
    OptimizationTrace,
    optimize_image,
)

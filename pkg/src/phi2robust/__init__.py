"""Worst-case sensitivity of simulation outputs to serial input dependency.

The package estimates the interaction-variance coefficients that govern how far
a performance measure can move when i.i.d. simulation inputs are replaced by
dependent inputs within a phi^2-coefficient budget, and turns them into
worst-case bands.
"""

from .stochastics import (
    DiscreteMarginal,
    MarginalDistribution,
    RngStream,
    normal_cdf,
    normal_quantile,
    sample,
    student_t_quantile,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteMarginal",
    "MarginalDistribution",
    "RngStream",
    "normal_cdf",
    "normal_quantile",
    "sample",
    "student_t_quantile",
]

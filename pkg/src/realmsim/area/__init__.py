"""Gate-equivalent area model."""

from .model import (
    STORAGE_MODES,
    AreaBreakdown,
    AreaParams,
    AreaRangeWarning,
    CalibrationReport,
    Coefficients,
    calibrate_check,
    estimate,
    load_coefficients,
)

__all__ = [
    "STORAGE_MODES",
    "AreaBreakdown",
    "AreaParams",
    "AreaRangeWarning",
    "CalibrationReport",
    "Coefficients",
    "calibrate_check",
    "estimate",
    "load_coefficients",
]

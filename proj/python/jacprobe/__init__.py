from ._core import (
    DensityField,
    Error,
    PiecewiseAffineMap,
    checkerboard,
    mismatch_area,
    realize_jacobian,
    run_cli,
    stretch_ratios,
)

__all__ = [
    "DensityField",
    "Error",
    "PiecewiseAffineMap",
    "checkerboard",
    "mismatch_area",
    "realize_jacobian",
    "run_cli",
    "stretch_ratios",
]

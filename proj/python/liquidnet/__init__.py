"""Python access to the liquid-capacitance cells, simulator and metrics."""

from ._core import (
    CellKind,
    CellParameters,
    ConfigError,
    DimensionError,
    IoError,
    LiquidError,
    NumericError,
    Season,
    UnsupportedKindError,
    abs_correlation,
    all_cell_kinds,
    config_hash,
    elastance,
    expert_drive,
    gradient_check,
    init_parameters,
    ode_rhs,
    parse_cell_kind,
    render,
    road_curvature,
    schema_description,
    ssim,
    step,
    unroll,
    zero_parameters,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

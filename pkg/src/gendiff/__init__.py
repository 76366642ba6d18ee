"""One-dimensional general diffusions from their scale function and speed measure."""

from .characteristics import (
    BoundaryBehavior,
    BoundaryKind,
    DensityScale,
    DiffusionSpec,
    InverseExplicitScale,
    Interval,
    NaturalScale,
    SampledScale,
    ScaleFunction,
    SpeedMeasure,
    from_sde,
    green_expected_exit_time,
    inverse_scale,
    natural_scale_transform,
    one_sided_derivative,
    sde_spec,
    validate,
)
from .rp_criterion import RPVerdict, absolute_continuity_test, rp_verdict, zero_derivative_measure

__version__ = "0.1.0"

__all__ = [
    "BoundaryBehavior",
    "BoundaryKind",
    "DensityScale",
    "DiffusionSpec",
    "InverseExplicitScale",
    "Interval",
    "NaturalScale",
    "RPVerdict",
    "SampledScale",
    "ScaleFunction",
    "SpeedMeasure",
    "__version__",
    "absolute_continuity_test",
    "from_sde",
    "green_expected_exit_time",
    "inverse_scale",
    "natural_scale_transform",
    "one_sided_derivative",
    "rp_verdict",
    "sde_spec",
    "validate",
    "zero_derivative_measure",
]

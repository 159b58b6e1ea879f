"""Numerical toolkit for homoclinic tangles, entropy bounds and ends of
residual domains of area-preserving torus maps, centered on the standard map."""

__version__ = "0.1.0"

from .maps import MapSpec, eval_inverse_lift, eval_lift, jacobian  # noqa: E402
from .fixed_points import Classification, FixedPointRecord, classify, find_fixed_points  # noqa: E402

__all__ = [
    "Classification",
    "FixedPointRecord",
    "MapSpec",
    "classify",
    "eval_inverse_lift",
    "eval_lift",
    "find_fixed_points",
    "jacobian",
]

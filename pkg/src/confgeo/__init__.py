"""confgeo: conformal geodesics, exponential-map hearts, and no-spiralling
diagnostics on chart-defined Riemannian metrics."""

from .errors import (ConfgeoError, ConstraintViolation, DegenerateDirection,
                     DomainError, EvalDomainError, ExprSyntaxError,
                     MaxStepsExceeded, MeshTooCoarse, NoExitWithinTrace,
                     NonPositiveFactor, NotPositiveDefinite,
                     OutOfSafeRadius, ResolutionTooCoarse, StepFailure,
                     UnknownIdentifier, VariableOutOfRange, ZeroVector)
from .exprlang import eval_jet2, parse, unparse
from .expmap import (DomainBall, HeartSample, RayCoords, cardioid_boundary,
                     dexp_zero, exp_cg, exp_cg_batch, f_functions,
                     heart_cross_section, heart_exit, injectivity_scan,
                     ray_coords, ray_image_angle, remainder_order,
                     trace_heart_boundary)
from .flow import (CGState, IntegratorConfig, Trace, cg_rhs,
                   conformal_pushforward, euclid_circle, integrate_cg,
                   integrate_cg_batch, integrate_metric_geodesic,
                   make_cg_state, write_trace_csv)
from .geodesy import ShootingConfig, metric_exp, riemannian_distance
from .jets import Jet2
from .metricfield import (ConformalFactor, CurvatureData, MetricField,
                          conformal_rescale, curvature, eval_metric,
                          transform_conformal_data)
from .spiral import (BallEvent, SizeEstimate, SizeSampling, ball_events,
                     compact_bound_scan, heart_size_R, heart_size_R1,
                     heart_size_R2, spiral_diagnostic)

__version__ = "0.1.0"

__all__ = [
    "BallEvent", "CGState", "ConformalFactor", "ConfgeoError",
    "ConstraintViolation", "CurvatureData", "DegenerateDirection",
    "DomainError", "EvalDomainError", "ExprSyntaxError", "HeartSample",
    "IntegratorConfig", "Jet2", "MaxStepsExceeded", "MeshTooCoarse",
    "MetricField", "NoExitWithinTrace", "NonPositiveFactor",
    "NotPositiveDefinite", "OutOfSafeRadius", "ResolutionTooCoarse",
    "ShootingConfig", "SizeEstimate", "SizeSampling", "StepFailure",
    "Trace", "UnknownIdentifier", "VariableOutOfRange", "ZeroVector",
    "ball_events", "cardioid_boundary", "cg_rhs", "compact_bound_scan",
    "conformal_pushforward", "conformal_rescale", "curvature", "dexp_zero",
    "euclid_circle", "eval_jet2", "eval_metric", "exp_cg", "exp_cg_batch",
    "f_functions", "heart_cross_section", "heart_exit", "heart_size_R",
    "heart_size_R1", "heart_size_R2", "injectivity_scan", "integrate_cg",
    "integrate_cg_batch", "integrate_metric_geodesic", "make_cg_state",
    "metric_exp", "parse", "ray_image_angle", "remainder_order",
    "riemannian_distance", "spiral_diagnostic", "trace_heart_boundary",
    "transform_conformal_data", "unparse", "write_trace_csv",
]

"""Numerical lab for metric-affine almost multi-product manifolds.

Jet-based (truncated Taylor) evaluation of curvature, extrinsic geometry of
orthogonal splittings, contorsion corrections, variation formulas and
periodic quadrature on tori, with suites that check the identities tying
them together.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .connections import Contorsion, ContorsionError, build_contorsion
from .expr import ExpressionError, evaluate, parse_expression
from .geometry import GeometryError, MetricField, SingularMetricError, VectorFieldDef
from .harness import (
    Check,
    GridSpec,
    HarnessError,
    NonFiniteError,
    VerificationReport,
    divergence_theorem_check,
    integral_formula_check,
    integral_formula_checks,
    integrate,
    splitting_hypothesis_report,
)
from .models import ModelError, ModelSpec, build_model, list_models
from .multiproduct import SplittingError, SplittingSpec, split_geometry

__all__ = [
    "Check", "ConfigError", "Contorsion", "ContorsionError", "ExpressionError", "GeometryError", "GridSpec",
    "HarnessError", "MetricField", "ModelError", "ModelSpec", "NonFiniteError", "RunConfig", "SingularMetricError",
    "SplittingError", "SplittingSpec", "VectorFieldDef", "VerificationReport", "build_contorsion", "build_model",
    "divergence_theorem_check", "evaluate", "integral_formula_check", "integral_formula_checks", "integrate",
    "list_models", "load_config", "parse_config", "parse_expression", "split_geometry", "splitting_hypothesis_report",
]

__version__ = "0.1.0"

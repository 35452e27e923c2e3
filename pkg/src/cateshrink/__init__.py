"""Subgroup treatment-effect estimation with James-Stein borrowing of
coarsened external trial estimates."""

__version__ = "0.1.0"

from .analysis import run_estimate  # noqa: E402
from .data import (  # noqa: E402
    enumerate_lattice,
    infer_schema,
    load_manifest,
    load_schema,
    load_trial,
)
from .design import build_constraints, build_design, build_weights  # noqa: E402
from .estimators import contrast, fit_constrained, fit_unconstrained  # noqa: E402
from .shrinkage import fit_james_stein, js_variance, tune_nu, wald_ci  # noqa: E402

__all__ = [
    "__version__",
    "build_constraints",
    "build_design",
    "build_weights",
    "contrast",
    "enumerate_lattice",
    "fit_constrained",
    "fit_james_stein",
    "fit_unconstrained",
    "infer_schema",
    "js_variance",
    "load_manifest",
    "load_schema",
    "load_trial",
    "run_estimate",
    "tune_nu",
    "wald_ci",
]

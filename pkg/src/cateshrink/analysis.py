"""End-to-end estimation on a dataset plus external manifest: fit the
requested estimators, attach Wald intervals, and compute all pairwise
subgroup contrasts. Produces the report objects that the service and CLI
serialize."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import __version__
from .comparators import fit_empirical_bayes, fit_generalized_ridge
from .data import ExternalManifest, TrialDataset, enumerate_lattice
from .design import build_constraints, build_design, build_weights
from .errors import ValidationError
from .estimators import contrast, fit_constrained, fit_unconstrained
from .shrinkage import fit_james_stein, wald_ci

ALL_ESTIMATORS = (
    "unconstrained",
    "constrained",
    "james_stein",
    "empirical_bayes",
    "generalized_ridge",
)

# Comparator forms are reconstructions, not published formulas; reports mark
# them so downstream consumers can tell.
RECONSTRUCTED = ("empirical_bayes", "generalized_ridge")


@dataclass(frozen=True, eq=False)
class EstimatorOutput:
    name: str
    tau: np.ndarray
    variance: np.ndarray  # diagonal of var_tau
    ci: list[tuple[float, float]]
    reconstruction: bool


@dataclass(frozen=True, eq=False)
class ContrastRow:
    estimator: str
    subgroup_a: str
    subgroup_b: str
    estimate: float
    variance: float
    p_value: float


@dataclass(frozen=True, eq=False)
class EstimateReport:
    subgroups: tuple[str, ...]
    subgroup_n: tuple[int, ...]
    outputs: tuple[EstimatorOutput, ...]
    contrasts: tuple[ContrastRow, ...]
    alpha: float
    weights: str
    n: int
    q: int
    source_label: str
    omega_raw: float | None = None
    omega_plus: float | None = None
    nu: float | None = None
    feasible: bool | None = None
    quad_form: float | None = None
    warnings: tuple[str, ...] = ()


def run_estimate(
    data: TrialDataset,
    manifest: ExternalManifest,
    weights: str = "prevalence",
    alpha: float = 0.05,
    estimators: tuple[str, ...] | None = None,
    custom_weights: np.ndarray | None = None,
) -> EstimateReport:
    """Fit the selected estimators and assemble the full report."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    names = tuple(estimators) if estimators else ALL_ESTIMATORS
    unknown = [nm for nm in names if nm not in ALL_ESTIMATORS]
    if unknown:
        raise ValidationError(
            f"unknown estimators {unknown}; choose from {list(ALL_ESTIMATORS)}"
        )

    lattice = enumerate_lattice(data.schema)
    design = build_design(data, lattice)
    w = build_weights(weights, data, lattice, custom=custom_weights)
    needs_external = set(names) - {"unconstrained"}
    cs = build_constraints(design, manifest) if needs_external else None

    uc = fit_unconstrained(design, data.outcome)
    fits: dict[str, object] = {"unconstrained": uc}
    js = None
    if needs_external:
        c = fit_constrained(uc, cs, design)
        fits["constrained"] = c
        if "james_stein" in names:
            js = fit_james_stein(uc, c, cs, design, w, data.n)
            fits["james_stein"] = js
        if "empirical_bayes" in names:
            fits["empirical_bayes"] = fit_empirical_bayes(uc, c, cs, data.n)
        if "generalized_ridge" in names:
            fits["generalized_ridge"] = fit_generalized_ridge(
                design, data.outcome, cs, manifest
            )

    outputs = []
    contrasts = []
    pairs = list(itertools.combinations(range(lattice.size), 2))
    labels = lattice.labels()
    for name in names:
        fit = fits[name]
        ci = wald_ci(fit.tau, fit.var_tau, alpha)
        outputs.append(
            EstimatorOutput(
                name=name,
                tau=fit.tau,
                variance=np.diag(fit.var_tau).copy(),
                ci=ci,
                reconstruction=name in RECONSTRUCTED,
            )
        )
        for i, j in pairs:
            a = np.zeros(lattice.size)
            a[i], a[j] = 1.0, -1.0
            result = contrast(fit, a)
            contrasts.append(
                ContrastRow(
                    estimator=name,
                    subgroup_a=labels[i],
                    subgroup_b=labels[j],
                    estimate=result.estimate,
                    variance=result.variance,
                    p_value=result.p_value,
                )
            )

    warnings = ()
    if js is not None and js.warning:
        warnings = (js.warning,)
    return EstimateReport(
        subgroups=tuple(labels),
        subgroup_n=tuple(int(v) for v in lattice.counts(data)),
        outputs=tuple(outputs),
        contrasts=tuple(contrasts),
        alpha=alpha,
        weights=w.scheme,
        n=data.n,
        q=manifest.q if needs_external else 0,
        source_label=manifest.source_label if needs_external else "",
        omega_raw=None if js is None else float(js.omega_raw),
        omega_plus=None if js is None else float(js.omega),
        nu=None if js is None else float(js.nu),
        feasible=None if js is None else bool(js.feasible),
        quad_form=None if js is None else float(js.quad_form),
        warnings=warnings,
    )


def estimates_csv(report: EstimateReport) -> str:
    """Estimate table: subgroup,estimator,estimate,variance,ci_low,ci_high,n_g."""
    lines = ["subgroup,estimator,estimate,variance,ci_low,ci_high,n_g"]
    for out in report.outputs:
        for g, label in enumerate(report.subgroups):
            lo, hi = out.ci[g]
            lines.append(
                f"{label},{out.name},{float(out.tau[g])!r},"
                f"{float(out.variance[g])!r},{lo!r},{hi!r},{report.subgroup_n[g]}"
            )
    return "\n".join(lines) + "\n"


def contrasts_csv(report: EstimateReport) -> str:
    lines = ["estimator,subgroup_a,subgroup_b,estimate,variance,p_value"]
    for row in report.contrasts:
        lines.append(
            f"{row.estimator},{row.subgroup_a},{row.subgroup_b},"
            f"{row.estimate!r},{row.variance!r},{row.p_value!r}"
        )
    return "\n".join(lines) + "\n"


def run_info_json(report: EstimateReport) -> str:
    def clean(v):
        if v is None:
            return None
        if isinstance(v, float) and not np.isfinite(v):
            return None
        return v

    info = {
        "version": __version__,
        "n": report.n,
        "q": report.q,
        "alpha": report.alpha,
        "weights": report.weights,
        "source_label": report.source_label,
        "estimators": [o.name for o in report.outputs],
        "reconstructions": [o.name for o in report.outputs if o.reconstruction],
        "omega_raw": clean(report.omega_raw),
        "omega_plus": clean(report.omega_plus),
        "nu": clean(report.nu),
        "feasible": report.feasible,
        "quad_form": clean(report.quad_form),
        "warnings": list(report.warnings),
    }
    return json.dumps(info, indent=2, sort_keys=True) + "\n"

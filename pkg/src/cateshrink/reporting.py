"""Human-readable tables from the delimiter-separated result files.

Handles both file kinds the pipeline writes: sweep results
(``e,estimator,metric,subgroup,value``) and estimate reports
(``subgroup,estimator,estimate,variance,ci_low,ci_high,n_g``). Estimate
tables include each interval's length relative to the unconstrained
interval for the same subgroup.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict

from .errors import ValidationError

SWEEP_HEADER = ["e", "estimator", "metric", "subgroup", "value"]
ESTIMATES_HEADER = [
    "subgroup",
    "estimator",
    "estimate",
    "variance",
    "ci_low",
    "ci_high",
    "n_g",
]


def detect_kind(content: str) -> str:
    reader = csv.reader(io.StringIO(content))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError("results file is empty") from None
    if header == SWEEP_HEADER:
        return "sweep"
    if header == ESTIMATES_HEADER:
        return "estimates"
    raise ValidationError(f"unrecognized results header: {header}")


def _rows(content: str, expected_header: list[str]) -> list[list[str]]:
    reader = csv.reader(io.StringIO(content))
    header = [h.strip() for h in next(reader)]
    if header != expected_header:
        raise ValidationError(f"expected header {expected_header}, got {header}")
    out = []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(expected_header):
            raise ValidationError(f"malformed results row: {row}")
        out.append([c.strip() for c in row])
    if not out:
        raise ValidationError("results file has no data rows")
    return out


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(header[j]), *(len(r[j]) for r in rows)) if rows else len(header[j])
        for j in range(len(header))
    ]
    def fmt(row):
        return "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()

    sep = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(header), sep] + [fmt(r) for r in rows])


def sweep_tables(content: str) -> str:
    """Per-e relative target risk, mean shrinkage weight, and coverage."""
    rows = _rows(content, SWEEP_HEADER)
    estimators: list[str] = []
    rel: dict[str, dict[str, str]] = defaultdict(dict)  # e -> est -> value
    omega: dict[str, str] = {}
    coverage: dict[tuple[str, str], dict[str, str]] = defaultdict(dict)
    e_order: list[str] = []
    for e, est, metric, subgroup, value in rows:
        if e not in e_order:
            e_order.append(e)
        if metric == "relative_risk":
            if est not in estimators:
                estimators.append(est)
            rel[e][est] = value
        elif metric == "mean_omega_plus":
            omega[e] = value
        elif metric == "coverage":
            coverage[(e, subgroup)][est] = value

    def short(v: str) -> str:
        try:
            return f"{float(v):.4f}"
        except ValueError:
            return v

    risk_rows = [
        [e] + [short(rel[e].get(est, "")) for est in estimators] + [short(omega.get(e, ""))]
        for e in e_order
    ]
    parts = [
        "Relative target risk (vs unconstrained) and mean shrinkage weight",
        _format_table(["e"] + estimators + ["mean_omega_plus"], risk_rows),
    ]
    if coverage:
        cov_rows = [
            [e, sg] + [short(coverage[(e, sg)].get(est, "")) for est in estimators]
            for (e, sg) in coverage
        ]
        parts += [
            "",
            "Wald CI coverage by subgroup",
            _format_table(["e", "subgroup"] + estimators, cov_rows),
        ]
    return "\n".join(parts) + "\n"


def estimate_tables(content: str) -> str:
    """Per-subgroup estimates with CIs and CI length relative to the
    unconstrained interval."""
    rows = _rows(content, ESTIMATES_HEADER)
    uc_len: dict[str, float] = {}
    for subgroup, est, _, _, lo, hi, _ in rows:
        if est == "unconstrained":
            uc_len[subgroup] = float(hi) - float(lo)

    table_rows = []
    for subgroup, est, estimate, variance, lo, hi, n_g in rows:
        length = float(hi) - float(lo)
        base = uc_len.get(subgroup)
        ratio = "" if base in (None, 0.0) else f"{length / base:.4f}"
        table_rows.append(
            [
                subgroup,
                est,
                f"{float(estimate):.4f}",
                f"{float(lo):.4f}",
                f"{float(hi):.4f}",
                ratio,
                n_g,
            ]
        )
    header = [
        "subgroup",
        "estimator",
        "estimate",
        "ci_low",
        "ci_high",
        "ci_len_vs_uc",
        "n_g",
    ]
    return (
        "Subgroup treatment-effect estimates\n"
        + _format_table(header, table_rows)
        + "\n"
    )


def render_report(content: str, kind: str = "auto") -> str:
    if kind == "auto":
        kind = detect_kind(content)
    if kind == "sweep":
        return sweep_tables(content)
    if kind == "estimates":
        return estimate_tables(content)
    raise ValidationError(f"unknown report kind {kind!r}")

"""Monte Carlo engine: two-binary-moderator DGP, incompatibility sweep,
target-risk and coverage accumulation, deterministic parallel replication.

Each replication draws its own generator seeded by
(base seed, e-grid index, replication index), so results are bit-identical
for any worker count. Potential outcomes follow

    Y(0) = eta0 + eta1 X1 + eta2 X2 + eta12 X1 X2 + sigma0 Z0
    Y(1) = zeta0 + zeta1 X1 + zeta2 X2 + zeta12 X1 X2 + sigma1 Z1

with X1, X2 independent Bernoulli draws, treatment assigned Bernoulli(1/2),
and Y = (1-A) Y(0) + A Y(1). Synthetic external estimates impose a common
relative discrepancy e on the true internal marginal CATEs for the
subgroups X1=0, X1=1, and X2=0.

The per-replication weighted squared error uses that replication's realized
weight diagonal, and relative target risks are reported against the
unconstrained estimator.
"""

from __future__ import annotations

import concurrent.futures as cf
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import __version__
from .comparators import fit_empirical_bayes, fit_generalized_ridge
from .data import (
    ExternalManifest,
    InternalTargets,
    ManifestEntry,
    MarginalSubgroup,
    Schema,
    TrialDataset,
    enumerate_lattice,
    make_schema,
)
from .design import build_constraints, build_design, build_weights
from .errors import CateShrinkError, SimulationFailureError, ValidationError
from .estimators import fit_constrained, fit_unconstrained
from .shrinkage import fit_james_stein

SIM_SCHEMA: Schema = make_schema([("x1", ["0", "1"]), ("x2", ["0", "1"])])
SIM_LATTICE = enumerate_lattice(SIM_SCHEMA)

ESTIMATORS = (
    "unconstrained",
    "constrained",
    "james_stein",
    "empirical_bayes",
    "generalized_ridge",
)

MAX_FAILURE_FRACTION = 0.01


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process for the two-binary-moderator design."""

    n: int = 500
    p1: float = 0.5
    p2: float = 0.5
    eta: tuple[float, float, float, float] = (-2.0, 1.0, 1.0, 0.5)
    zeta: tuple[float, float, float, float] = (1.0, 2.5, 2.5, 1.25)
    sigma0: float = 1.0
    sigma1: float = 2.0
    treat_prob: float = 0.5

    def __post_init__(self):
        if self.n < 20:
            raise ValidationError("simulated sample size must be >= 20")
        for name, prob in (("p1", self.p1), ("p2", self.p2), ("treat_prob", self.treat_prob)):
            if not 0 < prob < 1:
                raise ValidationError(f"{name} must be in (0, 1)")
        if len(self.eta) != 4 or len(self.zeta) != 4:
            raise ValidationError("eta and zeta must each have 4 coefficients")
        if self.sigma0 < 0 or self.sigma1 < 0:
            raise ValidationError("error standard deviations must be >= 0")


@dataclass(frozen=True)
class SweepConfig:
    """Incompatibility sweep settings."""

    e_grid: tuple[float, ...] = (0.0, 0.02, 0.05, 0.1)
    replications: int = 500
    base_seed: int = 0
    weight_scheme: str = "prevalence"
    alpha: float = 0.05
    external_variance: float = 1e-4
    custom_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.e_grid) < 1:
            raise ValidationError("e_grid must not be empty")
        for e in self.e_grid:
            if not math.isfinite(e) or e < 0:
                raise ValidationError("incompatibility indices must be finite and >= 0")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.base_seed < 0:
            raise ValidationError("base_seed must be >= 0")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must be in (0, 1)")
        if self.external_variance <= 0:
            raise ValidationError("external_variance must be > 0")
        if self.weight_scheme == "custom" and self.custom_weights is None:
            raise ValidationError("custom weighting requires custom_weights")


def true_effects(cfg: DgpConfig) -> InternalTargets:
    """True fine-grained CATEs (lattice order) and the marginal CATEs matched
    to the synthetic manifest's subgroups (X1=0, X1=1, X2=0)."""
    d = tuple(z - e for z, e in zip(cfg.zeta, cfg.eta))

    def tau(x1: int, x2: int) -> float:
        return d[0] + d[1] * x1 + d[2] * x2 + d[3] * x1 * x2

    tau_fine = np.array([tau(x1, x2) for x1, x2 in SIM_LATTICE.fine_subgroups])

    def gamma_x1(x1: int) -> float:
        return (1 - cfg.p2) * tau(x1, 0) + cfg.p2 * tau(x1, 1)

    def gamma_x2(x2: int) -> float:
        return (1 - cfg.p1) * tau(0, x2) + cfg.p1 * tau(1, x2)

    all_marginals = [gamma_x1(0), gamma_x1(1), gamma_x2(0), gamma_x2(1)]
    if any(g == 0 for g in all_marginals):
        raise ValidationError(
            "zero marginal CATE: the relative incompatibility index is undefined"
        )
    gamma = np.array([gamma_x1(0), gamma_x1(1), gamma_x2(0)])
    return InternalTargets(tau_fine=tau_fine, gamma_marginal=gamma)


def generate_replication(cfg: DgpConfig, seed) -> TrialDataset:
    """One simulated trial; identical seeds yield identical datasets."""
    rng = np.random.default_rng(seed)
    n = cfg.n
    x1 = (rng.random(n) < cfg.p1).astype(int)
    x2 = (rng.random(n) < cfg.p2).astype(int)
    a = (rng.random(n) < cfg.treat_prob).astype(int)
    z0 = rng.standard_normal(n)
    z1 = rng.standard_normal(n)
    e0, e1 = cfg.eta, cfg.zeta
    y0 = e0[0] + e0[1] * x1 + e0[2] * x2 + e0[3] * x1 * x2 + cfg.sigma0 * z0
    y1 = e1[0] + e1[1] * x1 + e1[2] * x2 + e1[3] * x1 * x2 + cfg.sigma1 * z1
    y = (1 - a) * y0 + a * y1
    return TrialDataset(
        schema=SIM_SCHEMA,
        outcome=y,
        treatment=a,
        covariates=np.column_stack([x1, x2]),
    )


def synthetic_manifest(
    targets: InternalTargets, e: float, external_variance: float
) -> ExternalManifest:
    """External estimates with a common relative discrepancy e."""
    subgroups = (
        MarginalSubgroup(constrained=((0, 0),), label="x1=0"),
        MarginalSubgroup(constrained=((0, 1),), label="x1=1"),
        MarginalSubgroup(constrained=((1, 0),), label="x2=0"),
    )
    entries = tuple(
        ManifestEntry(
            subgroup=sg,
            estimate=float((1.0 + e) * g),
            variance=external_variance,
        )
        for sg, g in zip(subgroups, targets.gamma_marginal)
    )
    return ExternalManifest(entries=entries, source_label=f"synthetic(e={e})")


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Aggregated sweep metrics, one slot per (e, estimator[, subgroup])."""

    e_grid: tuple[float, ...]
    estimators: tuple[str, ...]
    subgroup_labels: tuple[str, ...]
    replications: int
    target_risk: np.ndarray  # (E, n_est)
    relative_risk: np.ndarray  # (E, n_est)
    relative_risk_mc_se: np.ndarray  # (E, n_est)
    coverage: np.ndarray  # (E, n_est, G)
    mean_variance: np.ndarray  # (E, n_est, G)
    mc_variance: np.ndarray  # (E, n_est, G)
    mean_omega: np.ndarray  # (E,)
    failed: np.ndarray  # (E,) int

    def to_csv(self) -> str:
        def f(v) -> str:
            return repr(float(v))

        lines = ["e,estimator,metric,subgroup,value"]
        for i, e in enumerate(self.e_grid):
            for k, est in enumerate(self.estimators):
                lines.append(f"{f(e)},{est},target_risk,all,{f(self.target_risk[i, k])}")
                lines.append(
                    f"{f(e)},{est},relative_risk,all,{f(self.relative_risk[i, k])}"
                )
                lines.append(
                    f"{f(e)},{est},relative_risk_mc_se,all,"
                    f"{f(self.relative_risk_mc_se[i, k])}"
                )
                for g, label in enumerate(self.subgroup_labels):
                    lines.append(
                        f"{f(e)},{est},coverage,{label},{f(self.coverage[i, k, g])}"
                    )
                    lines.append(
                        f"{f(e)},{est},mean_variance,{label},"
                        f"{f(self.mean_variance[i, k, g])}"
                    )
                    lines.append(
                        f"{f(e)},{est},mc_variance,{label},"
                        f"{f(self.mc_variance[i, k, g])}"
                    )
            lines.append(
                f"{f(e)},james_stein,mean_omega_plus,all,{f(self.mean_omega[i])}"
            )
            lines.append(f"{f(e)},all,failed_replications,all,{int(self.failed[i])}")
        return "\n".join(lines) + "\n"


def render_run_manifest(
    dgp: DgpConfig, sweep: SweepConfig, workers: int
) -> str:
    lines = [
        f"cateshrink_version: {__version__}",
        "results_schema: e,estimator,metric,subgroup,value",
        f"n: {dgp.n}",
        f"p1: {dgp.p1!r}",
        f"p2: {dgp.p2!r}",
        f"eta: {','.join(repr(v) for v in dgp.eta)}",
        f"zeta: {','.join(repr(v) for v in dgp.zeta)}",
        f"sigma0: {dgp.sigma0!r}",
        f"sigma1: {dgp.sigma1!r}",
        f"treat_prob: {dgp.treat_prob!r}",
        f"e_grid: {','.join(repr(e) for e in sweep.e_grid)}",
        f"replications: {sweep.replications}",
        f"base_seed: {sweep.base_seed}",
        f"weight_scheme: {sweep.weight_scheme}",
        "custom_weights: "
        + (
            ",".join(repr(v) for v in sweep.custom_weights)
            if sweep.custom_weights is not None
            else "none"
        ),
        f"alpha: {sweep.alpha!r}",
        f"external_variance: {sweep.external_variance!r}",
        f"workers: {workers}",
        f"estimators: {','.join(ESTIMATORS)}",
    ]
    return "\n".join(lines) + "\n"


def _replicate_once(
    dgp: DgpConfig,
    manifest: ExternalManifest,
    weight_scheme: str,
    custom_weights,
    seed,
) -> tuple[np.ndarray, np.ndarray, float, np.ndarray] | str:
    """Fit all five estimators on one replication.

    Returns (tau_hat, var_diag, omega_plus, weight_diag) or an error string.
    """
    try:
        data = generate_replication(dgp, seed)
        design = build_design(data, SIM_LATTICE)
        custom = None if custom_weights is None else np.asarray(custom_weights)
        w = build_weights(weight_scheme, data, SIM_LATTICE, custom=custom)
        cs = build_constraints(design, manifest)
        uc = fit_unconstrained(design, data.outcome)
        c = fit_constrained(uc, cs, design)
        js = fit_james_stein(uc, c, cs, design, w, data.n)
        eb = fit_empirical_bayes(uc, c, cs, data.n)
        gr = fit_generalized_ridge(design, data.outcome, cs, manifest)
    except CateShrinkError as exc:
        return f"{type(exc).__name__}: {exc}"
    fits = (uc, c, js, eb, gr)
    tau_hat = np.vstack([f.tau for f in fits])
    var_diag = np.vstack([np.diag(f.var_tau) for f in fits])
    return tau_hat, var_diag, float(js.omega), w.diagonal.copy()


def _run_chunk(args):
    dgp, manifest, weight_scheme, custom_weights, base_seed, e_idx, start, stop = args
    out = []
    for r in range(start, stop):
        out.append(
            _replicate_once(
                dgp, manifest, weight_scheme, custom_weights, [base_seed, e_idx, r]
            )
        )
    return e_idx, start, out


def run_sweep(
    dgp: DgpConfig, sweep: SweepConfig, workers: int = 1
) -> SweepResult:
    """Run the full incompatibility sweep.

    Replications are independent work units; aggregation is a fixed-order
    reduction over replication indices, so any worker count produces
    bit-identical results. Failed replications are excluded from averages
    and counted; more than 1% failures aborts the sweep.
    """
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    targets = true_effects(dgp)
    E = len(sweep.e_grid)
    R = sweep.replications
    n_est = len(ESTIMATORS)
    G = SIM_LATTICE.size
    z = float(norm.ppf(1.0 - sweep.alpha / 2.0))

    manifests = [
        synthetic_manifest(targets, e, sweep.external_variance)
        for e in sweep.e_grid
    ]

    chunk = max(1, -(-R // (workers * 4)))
    tasks = [
        (
            dgp,
            manifests[i],
            sweep.weight_scheme,
            sweep.custom_weights,
            sweep.base_seed,
            i,
            s,
            min(s + chunk, R),
        )
        for i in range(E)
        for s in range(0, R, chunk)
    ]

    tau_all = np.full((E, R, n_est, G), np.nan)
    var_all = np.full((E, R, n_est, G), np.nan)
    omega_all = np.full((E, R), np.nan)
    wdiag_all = np.full((E, R, G), np.nan)
    ok = np.zeros((E, R), dtype=bool)
    errors: list[str] = []

    def _store(e_idx: int, start: int, payloads) -> None:
        for offset, payload in enumerate(payloads):
            r = start + offset
            if isinstance(payload, str):
                errors.append(f"e={sweep.e_grid[e_idx]!r} rep={r}: {payload}")
                continue
            tau_hat, var_diag, omega, wdiag = payload
            tau_all[e_idx, r] = tau_hat
            var_all[e_idx, r] = var_diag
            omega_all[e_idx, r] = omega
            wdiag_all[e_idx, r] = wdiag
            ok[e_idx, r] = True

    if workers == 1:
        for task in tasks:
            e_idx, start, payloads = _run_chunk(task)
            _store(e_idx, start, payloads)
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            for e_idx, start, payloads in pool.map(_run_chunk, tasks):
                _store(e_idx, start, payloads)

    total_failed = int(E * R - ok.sum())
    if total_failed > MAX_FAILURE_FRACTION * E * R:
        detail = "; ".join(errors[:5])
        raise SimulationFailureError(
            f"{total_failed} of {E * R} replications failed (> "
            f"{MAX_FAILURE_FRACTION:.0%}): {detail}"
        )

    target_risk = np.zeros((E, n_est))
    relative_risk = np.zeros((E, n_est))
    rel_se = np.zeros((E, n_est))
    coverage = np.zeros((E, n_est, G))
    mean_var = np.zeros((E, n_est, G))
    mc_var = np.zeros((E, n_est, G))
    mean_omega = np.zeros(E)
    failed = np.zeros(E, dtype=int)

    tau_true = targets.tau_fine
    for i in range(E):
        good = ok[i]
        n_good = int(good.sum())
        failed[i] = R - n_good
        if n_good == 0:
            raise SimulationFailureError(
                f"all replications failed at e={sweep.e_grid[i]!r}"
            )
        tau_i = tau_all[i, good]  # (n_good, n_est, G)
        var_i = var_all[i, good]
        w_i = wdiag_all[i, good]  # (n_good, G)
        err_sq = (tau_i - tau_true[None, None, :]) ** 2
        s = np.einsum("rg,rkg->rk", w_i, err_sq)  # per-rep weighted SE
        m = s.mean(axis=0)
        target_risk[i] = m
        ratio = m / m[0]
        relative_risk[i] = ratio
        if n_good > 1:
            cov_mat = np.cov(s.T, ddof=1).reshape(n_est, n_est)
            var_ratio = (
                np.diag(cov_mat)
                - 2.0 * ratio * cov_mat[:, 0]
                + ratio**2 * cov_mat[0, 0]
            ) / (n_good * m[0] ** 2)
            rel_se[i] = np.sqrt(np.clip(var_ratio, 0.0, None))
        half = z * np.sqrt(np.clip(var_i, 0.0, None))
        covered = np.abs(tau_i - tau_true[None, None, :]) <= half
        coverage[i] = covered.mean(axis=0)
        mean_var[i] = var_i.mean(axis=0)
        mc_var[i] = tau_i.var(axis=0, ddof=1) if n_good > 1 else 0.0
        mean_omega[i] = omega_all[i, good].mean()

    return SweepResult(
        e_grid=sweep.e_grid,
        estimators=ESTIMATORS,
        subgroup_labels=tuple(SIM_LATTICE.labels()),
        replications=R,
        target_risk=target_risk,
        relative_risk=relative_risk,
        relative_risk_mc_se=rel_se,
        coverage=coverage,
        mean_variance=mean_var,
        mc_variance=mc_var,
        mean_omega=mean_omega,
        failed=failed,
    )

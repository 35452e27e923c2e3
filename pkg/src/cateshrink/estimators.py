"""Unconstrained OLS and constrained least-squares estimators.

The unconstrained fit solves the joint regression of the outcome on the
covariate expansion and its treatment interactions; on a saturated design its
subgroup CATEs coincide exactly with stratified difference-in-means. Its
finite-sample covariance is the HC2 sandwich

    (K'K)^-1 K' diag(e_i^2 / (1 - h_ii)) K (K'K)^-1,

with leverages taken from the joint design [H, DA_H]. The constrained fit
shifts the unconstrained coefficients onto the external restriction set via
beta_c = beta_uc + B (gamma_E - C beta_uc) and inherits the collapsed
covariance (I - BC) Var(beta_uc) (I - BC)'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .design import RANK_RCOND, ConstraintSystem, DesignSystem
from .errors import NumericalError, ValidationError

PSD_EIGEN_TOL = 1e-8
CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FitResult:
    """Coefficients, subgroup CATEs, and covariance for one estimator."""

    design: DesignSystem
    beta: np.ndarray
    tau: np.ndarray
    var_beta: np.ndarray
    var_tau: np.ndarray
    sigma_uc: np.ndarray
    kind: str
    alpha_coefs: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.design.n


@dataclass(frozen=True)
class ContrastResult:
    estimate: float
    variance: float
    p_value: float


def repair_psd(matrix: np.ndarray, tol: float = PSD_EIGEN_TOL) -> np.ndarray:
    """Clamp eigenvalues in (-tol, 0) to zero; fail on anything more negative."""
    sym = (matrix + matrix.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.min() < -tol:
        raise NumericalError(
            f"covariance matrix has eigenvalue {eigvals.min():.3e} below -{tol:.0e}"
        )
    if eigvals.min() >= 0:
        return sym
    clipped = np.clip(eigvals, 0.0, None)
    return (eigvecs * clipped) @ eigvecs.T


def joint_hc2_weights(
    design: DesignSystem, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit the joint design [H, DA_H]; return (theta, residuals, HC2 weights).

    The HC2 weight for record i is e_i^2 / (1 - h_ii) with h_ii the joint-fit
    leverage. Raises when a leverage reaches one (degenerate cell).
    """
    X = np.hstack([design.H, design.DA_H])
    theta, _, rank, _ = np.linalg.lstsq(X, y, rcond=RANK_RCOND)
    if rank < X.shape[1]:
        raise NumericalError("joint design [H, DA_H] is rank deficient")
    resid = y - X @ theta
    Q, _ = np.linalg.qr(X)
    leverage = np.einsum("ij,ij->i", Q, Q)
    bad = np.nonzero(leverage >= 1.0 - 1e-12)[0]
    if bad.size:
        raise NumericalError(
            f"record {int(bad[0])} has leverage ~1 (its subgroup-arm cell is "
            "degenerate); HC2 weights are undefined"
        )
    return theta, resid, resid**2 / (1.0 - leverage)


def fit_unconstrained(design: DesignSystem, y: np.ndarray) -> FitResult:
    """OLS treatment-heterogeneity fit with HC2 sandwich covariance."""
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise ValidationError(
            f"outcome length {y.size} does not match design rows {design.n}"
        )
    if not np.all(np.isfinite(y)):
        raise ValidationError("outcome contains non-finite values")

    theta, _, omega = joint_hc2_weights(design, y)
    p = design.p
    alpha_coefs, beta_joint = theta[:p], theta[p:]

    beta, _, rank_k, _ = np.linalg.lstsq(design.K, y, rcond=RANK_RCOND)
    if rank_k < p:
        raise NumericalError("residualized design K is rank deficient")
    scale = max(1.0, float(np.linalg.norm(beta_joint)))
    if np.linalg.norm(beta - beta_joint) > 1e-10 * scale:
        raise NumericalError(
            "closed-form coefficients disagree with the joint fit"
        )

    S = design.K.T @ design.K
    meat = (design.K * omega[:, None]).T @ design.K
    inner, _, _, _ = np.linalg.lstsq(S, meat, rcond=RANK_RCOND)
    var_beta_t, _, _, _ = np.linalg.lstsq(S, inner.T, rcond=RANK_RCOND)
    var_beta = repair_psd(var_beta_t.T)

    tau = design.L @ beta
    var_tau = repair_psd(design.L @ var_beta @ design.L.T)
    return FitResult(
        design=design,
        beta=beta,
        tau=tau,
        var_beta=var_beta,
        var_tau=var_tau,
        sigma_uc=design.n * var_beta,
        kind="unconstrained",
        alpha_coefs=alpha_coefs,
    )


def fit_constrained(
    uc: FitResult, cs: ConstraintSystem, design: DesignSystem
) -> FitResult:
    """Shift the unconstrained fit onto the external restriction set."""
    if uc.kind != "unconstrained":
        raise ValidationError("fit_constrained expects an unconstrained fit")
    if uc.design is not design:
        raise ValidationError("unconstrained fit comes from a different design")
    if cs.C.shape[1] != design.p:
        raise ValidationError(
            f"constraint system has p={cs.C.shape[1]}, design has p={design.p}"
        )

    residual = cs.gamma_hat_E - cs.C @ uc.beta
    beta = uc.beta + cs.B @ residual
    gap = np.linalg.norm(cs.C @ beta - cs.gamma_hat_E, ord=np.inf)
    if gap > CONSTRAINT_TOL:
        raise NumericalError(
            f"constrained fit violates C beta = gamma_E by {gap:.3e}"
        )

    shrink = np.eye(design.p) - cs.B @ cs.C
    var_beta = repair_psd(shrink @ uc.var_beta @ shrink.T)
    tau = design.L @ beta
    var_tau = repair_psd(design.L @ var_beta @ design.L.T)
    return FitResult(
        design=design,
        beta=beta,
        tau=tau,
        var_beta=var_beta,
        var_tau=var_tau,
        sigma_uc=uc.sigma_uc,
        kind="constrained",
    )


def contrast(fit, a: np.ndarray) -> ContrastResult:
    """Linear contrast a' tau with its variance and two-sided normal p-value.

    Accepts any fit object exposing ``tau`` and ``var_tau`` (the latter is
    L Var(beta) L' for every estimator here).
    """
    a = np.asarray(a, dtype=float)
    G = fit.tau.size
    if a.shape != (G,):
        raise ValidationError(f"contrast vector has length {a.size}, expected {G}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("contrast vector contains non-finite values")
    estimate = float(a @ fit.tau)
    variance = float(a @ fit.var_tau @ a)
    if variance < -PSD_EIGEN_TOL:
        raise NumericalError(f"contrast variance is negative: {variance:.3e}")
    variance = max(variance, 0.0)
    if variance == 0.0:
        p_value = 1.0 if estimate == 0.0 else 0.0
    else:
        z = estimate / math.sqrt(variance)
        p_value = float(2.0 * norm.sf(abs(z)))
    return ContrastResult(estimate=estimate, variance=variance, p_value=p_value)

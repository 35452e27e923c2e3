"""Benchmark shrinkage estimators: adaptive empirical Bayes and a
generalized ridge penalized by the external estimate variances.

Exact published forms for these two competitors are not available, so both
are documented reconstructions; results carry kind labels so reports can
mark them as such. Unlike the James-Stein estimator, neither depends on the
target-risk weight matrix.

* Empirical Bayes: a matrix-weighted average A beta_uc + (I - A) beta_c with
  A = D (D + V)^-1, where D = Delta Delta' estimates the squared
  incompatibility signal and V = Var(beta_uc) - Var(beta_c) the excess
  sampling variance of the unconstrained direction (symmetrized and clamped
  to positive semi-definite).
* Generalized ridge: least squares plus the penalty
  (C beta - gamma_E)' diag(s2 / Var(gamma_E)) (C beta - gamma_E), where s2
  is the mean squared joint-fit residual, solved as an augmented
  least-squares problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ExternalManifest
from .design import RANK_RCOND, ConstraintSystem, DesignSystem
from .errors import NumericalError, ValidationError
from .estimators import FitResult, joint_hc2_weights, repair_psd

EB_RIDGE_FACTOR = 1e-10


@dataclass(frozen=True, eq=False)
class ComparatorResult:
    design: DesignSystem
    beta: np.ndarray
    tau: np.ndarray
    var_beta: np.ndarray
    var_tau: np.ndarray
    weight_matrix_or_penalty: np.ndarray
    kind: str


def _clamp_psd(matrix: np.ndarray) -> np.ndarray:
    sym = (matrix + matrix.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    return (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T


def fit_empirical_bayes(
    uc: FitResult, c: FitResult, cs: ConstraintSystem, n: int
) -> ComparatorResult:
    """Matrix-weighted average with a signal-vs-noise weight matrix."""
    if uc.kind != "unconstrained" or c.kind != "constrained":
        raise ValidationError(
            "fit_empirical_bayes expects (unconstrained, constrained) fits"
        )
    design = uc.design
    p = design.p
    delta = uc.beta - c.beta
    D = np.outer(delta, delta)
    V = _clamp_psd(uc.var_beta - c.var_beta)

    M = D + V
    trace = float(np.trace(M))
    if trace <= 0:
        A = np.zeros((p, p))
    else:
        M_reg = M + (EB_RIDGE_FACTOR * trace / p) * np.eye(p)
        # Solve A (D + V) = D; M_reg is symmetric positive definite by
        # construction, so a direct solve preserves the regularized
        # directions that a rank-truncated solve would re-zero.
        try:
            A = np.linalg.solve(M_reg, D.T).T
        except np.linalg.LinAlgError:
            raise NumericalError(
                "empirical Bayes weight system is singular after regularization"
            ) from None

    beta = A @ uc.beta + (np.eye(p) - A) @ c.beta
    # Delta-method covariance with the weight matrix held fixed.
    G = np.eye(p) - (np.eye(p) - A) @ cs.B @ cs.C
    var_beta = repair_psd(G @ uc.var_beta @ G.T)
    tau = design.L @ beta
    var_tau = repair_psd(design.L @ var_beta @ design.L.T)
    return ComparatorResult(
        design=design,
        beta=beta,
        tau=tau,
        var_beta=var_beta,
        var_tau=var_tau,
        weight_matrix_or_penalty=A,
        kind="empirical_bayes",
    )


def fit_generalized_ridge(
    design: DesignSystem,
    y: np.ndarray,
    cs: ConstraintSystem,
    manifest: ExternalManifest,
) -> ComparatorResult:
    """External-variance-penalized least squares via augmented equations."""
    y = np.asarray(y, dtype=float)
    variances = manifest.variances()
    if np.any(variances <= 0):
        raise ValidationError(
            "generalized ridge needs strictly positive external variances; "
            "a zero variance means an infinite penalty (use the constrained "
            "estimator instead)"
        )

    theta_uc, resid, omega = joint_hc2_weights(design, y)
    sigma2 = float(np.mean(resid**2))
    lam = sigma2 / variances  # penalty weights per restriction

    p = design.p
    X = np.hstack([design.H, design.DA_H])
    C_aug = np.hstack([np.zeros((cs.q, p)), cs.C])
    sqrt_lam = np.sqrt(lam)
    X_aug = np.vstack([X, sqrt_lam[:, None] * C_aug])
    y_aug = np.concatenate([y, sqrt_lam * cs.gamma_hat_E])
    theta, _, rank, _ = np.linalg.lstsq(X_aug, y_aug, rcond=RANK_RCOND)
    if rank < 2 * p:
        raise NumericalError("penalized normal equations are rank deficient")
    beta = theta[p:]

    # Sandwich of the penalized normal equations, external estimates fixed.
    A_mat = X.T @ X + C_aug.T @ (lam[:, None] * C_aug)
    meat = (X * omega[:, None]).T @ X
    inner, _, _, _ = np.linalg.lstsq(A_mat, meat, rcond=RANK_RCOND)
    var_theta_t, _, _, _ = np.linalg.lstsq(A_mat, inner.T, rcond=RANK_RCOND)
    var_beta = repair_psd(var_theta_t.T[p:, p:])

    tau = design.L @ beta
    var_tau = repair_psd(design.L @ var_beta @ design.L.T)
    return ComparatorResult(
        design=design,
        beta=beta,
        tau=tau,
        var_beta=var_beta,
        var_tau=var_tau,
        weight_matrix_or_penalty=np.diag(lam),
        kind="generalized_ridge",
    )

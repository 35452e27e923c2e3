"""Positive-part James-Stein shrinkage between the unconstrained and
constrained estimators.

The shrinkage factor is

    omega = 1 - nu / [n (tau_uc - tau_c)' W (tau_uc - tau_c)],

clipped at zero, with the tuning parameter chosen as
nu = tr(P) - 2 ||P||_2 for P = W L Sigma_uc C' B' L'. Risk dominance over
the unconstrained estimator requires tr(P)/||P|| > 2, which needs at least
three linearly independent external restrictions; when that fails the
estimator degrades to the unconstrained fit and flags the fallback.

The variance estimator is piecewise: the constrained fit's covariance when
the positive part binds (omega+ = 0), and otherwise the Taylor-expansion
sandwich G Var(beta_uc) G' with

    G = I - {nu/[n d]} B C + {2 nu/[n d^2]} Delta Delta' Gamma B C,

where Delta = beta_uc - beta_c, Gamma = L' W L, and d = Delta' Gamma Delta.
Wald intervals use this variance with no bias adjustment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .design import ConstraintSystem, DesignSystem, WeightMatrix
from .errors import NumericalError, ValidationError
from .estimators import PSD_EIGEN_TOL, FitResult, repair_psd

INFEASIBLE_NU = "INFEASIBLE_NU"


@dataclass(frozen=True, eq=False)
class TuningResult:
    nu: float
    P_hat: np.ndarray
    feasible: bool


@dataclass(frozen=True, eq=False)
class JamesSteinResult:
    """Positive-part James-Stein fit with its piecewise covariance."""

    design: DesignSystem
    beta: np.ndarray
    tau: np.ndarray
    omega_raw: float
    omega: float
    nu: float
    quad_form: float
    var_beta: np.ndarray
    var_tau: np.ndarray
    variance_branch: str
    P_hat: np.ndarray
    delta: np.ndarray
    gamma_mat: np.ndarray
    feasible: bool
    warning: str | None = None

    @property
    def n(self) -> int:
        return self.design.n


def shrinkage_factor(nu: float, quad_form: float) -> tuple[float, float]:
    """Raw and positive-part shrinkage weights on the unconstrained fit."""
    raw = 1.0 - nu / quad_form if quad_form > 0 else -math.inf
    return raw, max(0.0, raw)


def nu_from_p(P: np.ndarray) -> tuple[float, bool]:
    """Tuning rule tr(P) - 2 ||P||_2 and its feasibility flag."""
    spectral = float(np.linalg.norm(P, ord=2))
    trace = float(np.trace(P))
    if spectral == 0.0:
        return 0.0, False
    return trace - 2.0 * spectral, trace / spectral > 2.0


def tune_nu(
    uc: FitResult,
    cs: ConstraintSystem,
    design: DesignSystem,
    w: WeightMatrix,
) -> TuningResult:
    """Plug-in tuning parameter from P = W L Sigma_uc C' B' L'."""
    if w.diagonal.size != design.G:
        raise ValidationError("weight vector length does not match subgroup count")
    P = (
        w.diagonal[:, None]
        * (design.L @ uc.sigma_uc @ cs.C.T @ cs.B.T @ design.L.T)
    )
    nu, feasible = nu_from_p(P)
    return TuningResult(nu=nu, P_hat=P, feasible=feasible)


def taylor_projection(
    nu: float,
    n: int,
    delta: np.ndarray,
    gamma_mat: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
) -> np.ndarray:
    """The Taylor-expansion matrix G applied to the unconstrained limit."""
    d = float(delta @ gamma_mat @ delta)
    if d <= 0:
        raise NumericalError(
            "Taylor variance undefined: Delta' Gamma Delta is zero while the "
            "shrinkage weight is positive"
        )
    p = B.shape[0]
    BC = B @ C
    first = (nu / (n * d)) * BC
    second = (2.0 * nu / (n * d * d)) * (np.outer(delta, delta) @ gamma_mat @ BC)
    return np.eye(p) - first + second


def fit_james_stein(
    uc: FitResult,
    c: FitResult,
    cs: ConstraintSystem,
    design: DesignSystem,
    w: WeightMatrix,
    n: int,
) -> JamesSteinResult:
    """Positive-part James-Stein combination of the two fits.

    Tuning and the shrinkage quadratic form share the same weight matrix by
    construction; passing differently weighted fits is not possible through
    this interface.
    """
    if uc.kind != "unconstrained" or c.kind != "constrained":
        raise ValidationError(
            "fit_james_stein expects (unconstrained, constrained) fits"
        )
    if uc.design is not design or c.design is not design:
        raise ValidationError("fits come from a different design")

    tuning = tune_nu(uc, cs, design, w)
    diff = uc.tau - c.tau
    quad_form = float(n * (diff @ (w.diagonal * diff)))
    delta = uc.beta - c.beta
    gamma_mat = design.L.T @ (w.diagonal[:, None] * design.L)
    omega_raw, omega_plus = shrinkage_factor(tuning.nu, quad_form)

    if not tuning.feasible or tuning.nu <= 0:
        # Theorem-level dominance needs nu > 0; fall back to no shrinkage.
        return JamesSteinResult(
            design=design,
            beta=uc.beta,
            tau=uc.tau,
            omega_raw=omega_raw,
            omega=1.0,
            nu=tuning.nu,
            quad_form=quad_form,
            var_beta=uc.var_beta,
            var_tau=uc.var_tau,
            variance_branch="taylor",
            P_hat=tuning.P_hat,
            delta=delta,
            gamma_mat=gamma_mat,
            feasible=False,
            warning=INFEASIBLE_NU,
        )

    if quad_form <= tuning.nu:
        # Positive part binds: the estimate and variance are the constrained ones.
        return JamesSteinResult(
            design=design,
            beta=c.beta,
            tau=c.tau,
            omega_raw=omega_raw,
            omega=0.0,
            nu=tuning.nu,
            quad_form=quad_form,
            var_beta=c.var_beta,
            var_tau=c.var_tau,
            variance_branch="constrained",
            P_hat=tuning.P_hat,
            delta=delta,
            gamma_mat=gamma_mat,
            feasible=True,
        )

    beta = omega_plus * uc.beta + (1.0 - omega_plus) * c.beta
    tau = design.L @ beta
    G = taylor_projection(tuning.nu, n, delta, gamma_mat, cs.B, cs.C)
    var_beta = repair_psd(G @ uc.var_beta @ G.T)
    var_tau = repair_psd(design.L @ var_beta @ design.L.T)
    return JamesSteinResult(
        design=design,
        beta=beta,
        tau=tau,
        omega_raw=omega_raw,
        omega=omega_plus,
        nu=tuning.nu,
        quad_form=quad_form,
        var_beta=var_beta,
        var_tau=var_tau,
        variance_branch="taylor",
        P_hat=tuning.P_hat,
        delta=delta,
        gamma_mat=gamma_mat,
        feasible=True,
    )


def js_variance(
    js: JamesSteinResult,
    uc: FitResult,
    c: FitResult,
    cs: ConstraintSystem,
    n: int,
) -> np.ndarray:
    """Piecewise covariance of the James-Stein coefficients.

    Returns the constrained covariance when the positive part binds
    (quad_form <= nu), the unconstrained covariance on the infeasible
    fallback, and the Taylor sandwich otherwise.
    """
    if js.nu <= 0 or not js.feasible:
        return uc.var_beta
    if js.quad_form <= js.nu:
        return c.var_beta
    G = taylor_projection(js.nu, n, js.delta, js.gamma_mat, cs.B, cs.C)
    return repair_psd(G @ uc.var_beta @ G.T)


def wald_ci(
    tau: np.ndarray, var_tau: np.ndarray, alpha: float
) -> list[tuple[float, float]]:
    """Per-subgroup naive Wald intervals tau_g +/- z_{1-alpha/2} sd_g."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    tau = np.asarray(tau, dtype=float)
    var_tau = np.asarray(var_tau, dtype=float)
    diag = np.diag(var_tau) if var_tau.ndim == 2 else var_tau
    if diag.shape != tau.shape:
        raise ValidationError("variance diagonal does not match tau length")
    if np.any(diag < -PSD_EIGEN_TOL):
        raise NumericalError(
            f"negative variance {diag.min():.3e} beyond tolerance"
        )
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(np.clip(diag, 0.0, None))
    return [(float(t - h), float(t + h)) for t, h in zip(tau, half)]

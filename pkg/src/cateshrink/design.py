"""Design-matrix construction for the saturated interaction model.

Builds, from a trial dataset and its subgroup lattice:

* ``H``: the n x p matrix expanding the empirically centered covariate
  dummies into all main effects and interactions (p equals the number of
  fine subgroups G, so the expansion is saturated);
* ``DA_H``: H with rows scaled by the treatment indicator;
* ``K``: the interaction regressors residualized against H, i.e.
  (I - H (H'H)^-1 H') DA_H, the design whose least-squares fit yields the
  treatment heterogeneity coefficients directly;
* ``L``: the G x p map from heterogeneity coefficients to subgroup CATEs,
  obtained by evaluating the expansion at each profile's centered dummies;
* ``C``: one row per external marginal subgroup, evaluating the expansion
  with the constrained covariates' dummies fixed and every term touching an
  unconstrained covariate set to zero;
* ``B``: (K'K)^-1 C' [C (K'K)^-1 C']^-1, mapping constraint residuals back
  to coefficient space.

All solves go through orthogonal-decomposition least squares with rank
tolerance 1e-10 times the largest singular value; no explicit inverses.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import ExternalManifest, Schema, SubgroupLattice, TrialDataset
from .errors import NumericalError, ValidationError

RANK_RCOND = 1e-10

# A term is a sorted tuple of (covariate index, non-reference level index)
# factors; the empty tuple is the intercept.
Term = tuple[tuple[int, int], ...]


def enumerate_terms(schema: Schema) -> tuple[Term, ...]:
    """Canonical term order: intercept, then main effects in schema order,
    then interactions by ascending degree; level choices vary last-fastest."""
    m = len(schema)
    terms: list[Term] = [()]
    for degree in range(1, m + 1):
        for combo in itertools.combinations(range(m), degree):
            level_ranges = [range(1, len(schema[j].levels)) for j in combo]
            for levels in itertools.product(*level_ranges):
                terms.append(tuple(zip(combo, levels)))
    return tuple(terms)


@dataclass(frozen=True, eq=False)
class DesignSystem:
    """All design matrices for one dataset; immutable and shareable."""

    schema: Schema
    lattice: SubgroupLattice
    terms: tuple[Term, ...]
    H: np.ndarray
    DA_H: np.ndarray
    K: np.ndarray
    L: np.ndarray
    covariate_means: tuple[np.ndarray, ...]
    subgroup_counts: np.ndarray

    @property
    def p(self) -> int:
        return self.H.shape[1]

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def G(self) -> int:
        return self.lattice.size


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """External constraint rows and the coefficient-space back-map."""

    C: np.ndarray
    B: np.ndarray
    gamma_hat_E: np.ndarray

    @property
    def q(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Diagonal target-risk weights over the fine subgroups."""

    diagonal: np.ndarray
    scheme: str

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=float)
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValidationError("weight entries must be finite and >= 0")
        if np.count_nonzero(d > 0) < 3:
            raise ValidationError(
                "weight matrix needs at least 3 strictly positive entries"
            )
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "diagonal", d)


def _centered_dummies(
    values: np.ndarray, n_levels: int, means: np.ndarray
) -> np.ndarray:
    """Matrix of 1[x = l] - mean_l for non-reference levels l = 1..n_levels-1."""
    cols = [
        (values == lvl).astype(float) - means[lvl - 1]
        for lvl in range(1, n_levels)
    ]
    return np.column_stack(cols) if cols else np.empty((values.size, 0))


def _profile_dummies(
    level: int, n_levels: int, means: np.ndarray
) -> np.ndarray:
    return np.array(
        [(1.0 if level == lvl else 0.0) - means[lvl - 1] for lvl in range(1, n_levels)]
    )


def _expand(
    terms: tuple[Term, ...], dummy_cols: list[np.ndarray], n: int
) -> np.ndarray:
    """Rows of the expansion given per-covariate centered dummy columns."""
    out = np.ones((n, len(terms)))
    for t_idx, term in enumerate(terms):
        col = np.ones(n)
        for j, lvl in term:
            col = col * dummy_cols[j][:, lvl - 1]
        out[:, t_idx] = col
    return out


def build_design(data: TrialDataset, lattice: SubgroupLattice) -> DesignSystem:
    """Construct H, DA_H, K, and L for a dataset.

    Requires every fine subgroup to contain at least one treated and one
    control record (saturated identifiability).
    """
    if data.schema != lattice.schema:
        raise ValidationError("dataset and lattice use different schemas")
    n = data.n
    idx = lattice.assign(data)

    treated = np.bincount(idx, weights=data.treatment, minlength=lattice.size)
    totals = np.bincount(idx, minlength=lattice.size)
    for g, profile in enumerate(lattice.fine_subgroups):
        n1, n0 = treated[g], totals[g] - treated[g]
        if n1 < 1 or n0 < 1:
            arm = "treated" if n1 < 1 else "control"
            raise ValidationError(
                f"subgroup {lattice.label(profile)!r} has no {arm} records; "
                "the saturated model is not identifiable"
            )

    terms = enumerate_terms(data.schema)
    means = tuple(
        np.array(
            [
                float(np.mean(data.covariates[:, j] == lvl))
                for lvl in range(1, len(c.levels))
            ]
        )
        for j, c in enumerate(data.schema)
    )
    dummy_cols = [
        _centered_dummies(data.covariates[:, j], len(c.levels), means[j])
        for j, c in enumerate(data.schema)
    ]
    H = _expand(terms, dummy_cols, n)
    if H.shape[1] != lattice.size:
        raise NumericalError(
            f"expansion dimension {H.shape[1]} != subgroup count {lattice.size}"
        )
    DA_H = H * data.treatment[:, None]

    # Residualize via least squares, then verify against an independent QR
    # projection route.
    coef, _, rank, sv = np.linalg.lstsq(H, DA_H, rcond=RANK_RCOND)
    if rank < H.shape[1]:
        raise NumericalError("H'H is rank deficient")
    K = DA_H - H @ coef
    Q, _ = np.linalg.qr(H)
    K_qr = DA_H - Q @ (Q.T @ DA_H)
    scale = max(1.0, float(np.linalg.norm(DA_H)))
    if np.linalg.norm(K - K_qr) > 1e-10 * scale:
        raise NumericalError("residualized design failed its projection check")

    profile_cols = [
        np.vstack(
            [
                _profile_dummies(profile[j], len(c.levels), means[j])
                for profile in lattice.fine_subgroups
            ]
        )
        for j, c in enumerate(data.schema)
    ]
    L = _expand(terms, profile_cols, lattice.size)

    return DesignSystem(
        schema=data.schema,
        lattice=lattice,
        terms=terms,
        H=H,
        DA_H=DA_H,
        K=K,
        L=L,
        covariate_means=means,
        subgroup_counts=totals.astype(int),
    )


def constraint_row(
    design: DesignSystem, constrained: tuple[tuple[int, int], ...]
) -> np.ndarray:
    """Expansion row for a marginal subgroup: constrained covariates at their
    centered dummy values, terms touching unconstrained covariates zeroed."""
    fixed = dict(constrained)
    row = np.zeros(design.p)
    for t_idx, term in enumerate(design.terms):
        if all(j in fixed for j, _ in term):
            value = 1.0
            for j, lvl in term:
                dummies = _profile_dummies(
                    fixed[j], len(design.schema[j].levels), design.covariate_means[j]
                )
                value *= dummies[lvl - 1]
            row[t_idx] = value
    return row


def build_constraints(
    design: DesignSystem, manifest: ExternalManifest
) -> ConstraintSystem:
    """Assemble C from a manifest and compute B = (K'K)^-1 C'[C(K'K)^-1 C']^-1."""
    q = manifest.q
    if q >= design.p:
        raise ValidationError(
            f"q must be < p: manifest has {q} entries, design has p={design.p}"
        )
    C = np.vstack(
        [constraint_row(design, e.subgroup.constrained) for e in manifest.entries]
    )
    sv = np.linalg.svd(C, compute_uv=False)
    if np.sum(sv > RANK_RCOND * sv[0]) < q:
        raise NumericalError("constraint matrix C is rank deficient")

    S = design.K.T @ design.K
    T, _, rank, _ = np.linalg.lstsq(S, C.T, rcond=RANK_RCOND)  # S^-1 C'
    if rank < design.p:
        raise NumericalError("K'K is rank deficient")
    M = C @ T  # C (K'K)^-1 C'
    Bt, _, rank_m, _ = np.linalg.lstsq(M.T, T.T, rcond=RANK_RCOND)
    if rank_m < q:
        raise NumericalError("C (K'K)^-1 C' is singular")
    B = Bt.T

    gamma = manifest.gamma()
    if np.linalg.norm(C @ B - np.eye(q), ord=np.inf) > 1e-8:
        raise NumericalError("constraint back-map failed: C B != I")
    return ConstraintSystem(C=C, B=B, gamma_hat_E=gamma)


def build_weights(
    scheme: str,
    data: TrialDataset,
    lattice: SubgroupLattice,
    custom: np.ndarray | None = None,
) -> WeightMatrix:
    """Diagonal risk weights: subgroup prevalence, uniform, or user supplied."""
    G = lattice.size
    if scheme == "prevalence":
        counts = lattice.counts(data)
        return WeightMatrix(diagonal=counts / data.n, scheme="prevalence")
    if scheme == "uniform":
        return WeightMatrix(diagonal=np.ones(G), scheme="uniform")
    if scheme == "custom":
        if custom is None:
            raise ValidationError("custom weighting requires a weight vector")
        w = np.asarray(custom, dtype=float)
        if w.shape != (G,):
            raise ValidationError(
                f"custom weight vector has length {w.size}, expected {G}"
            )
        return WeightMatrix(diagonal=w, scheme="custom")
    raise ValidationError(f"unknown weight scheme {scheme!r}")

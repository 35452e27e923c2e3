import dataclasses

import numpy as np
import pytest

from cateshrink.comparators import fit_empirical_bayes, fit_generalized_ridge
from cateshrink.data import enumerate_lattice
from cateshrink.design import build_constraints, build_design, build_weights
from cateshrink.errors import ValidationError
from cateshrink.estimators import fit_constrained, fit_unconstrained
from cateshrink.shrinkage import fit_james_stein
from cateshrink.simulation import (
    DgpConfig,
    SIM_LATTICE,
    generate_replication,
    synthetic_manifest,
    true_effects,
)

from conftest import TWO_BINARY, q3_manifest, two_binary_dataset


def pipeline(seed=0, n=160, variance=1e-4):
    data = two_binary_dataset(n, seed=seed)
    lattice = enumerate_lattice(TWO_BINARY)
    design = build_design(data, lattice)
    manifest = q3_manifest(variance=variance)
    cs = build_constraints(design, manifest)
    uc = fit_unconstrained(design, data.outcome)
    c = fit_constrained(uc, cs, design)
    return data, design, manifest, cs, uc, c


class TestEmpiricalBayes:
    def test_zero_signal_returns_constrained(self):
        data, design, manifest, cs0, uc, _ = pipeline(seed=1)
        cs = dataclasses.replace(cs0, gamma_hat_E=cs0.C @ uc.beta)
        c = fit_constrained(uc, cs, design)
        eb = fit_empirical_bayes(uc, c, cs, data.n)
        np.testing.assert_allclose(eb.beta, c.beta, atol=1e-12)
        np.testing.assert_allclose(eb.weight_matrix_or_penalty, 0.0, atol=1e-12)

    def test_zero_noise_projects_onto_delta(self):
        """With var(uc) = var(c), the weight collapses to the projection onto
        the discrepancy direction."""
        data, design, manifest, cs, uc, c = pipeline(seed=2)
        same_var = dataclasses.replace(c, var_beta=uc.var_beta)
        eb = fit_empirical_bayes(uc, same_var, cs, data.n)
        delta = uc.beta - c.beta
        A = eb.weight_matrix_or_penalty
        np.testing.assert_allclose(A @ delta, delta, rtol=1e-5)
        orth = np.linalg.qr(
            np.column_stack([delta, np.eye(4)])
        )[0][:, 1:]
        np.testing.assert_allclose(A @ orth, 0.0, atol=1e-5)
        np.testing.assert_allclose(eb.beta, c.beta + delta, rtol=1e-5)

    def test_variance_psd(self):
        data, design, manifest, cs, uc, c = pipeline(seed=3)
        eb = fit_empirical_bayes(uc, c, cs, data.n)
        assert np.linalg.eigvalsh(eb.var_beta).min() >= -1e-10

    def test_risk_above_james_stein_at_compatibility(self):
        """Monte Carlo at e = 0: the matrix-weighted average shrinks less than
        the James-Stein estimator, so its target risk is higher."""
        dgp = DgpConfig()
        targets = true_effects(dgp)
        manifest = synthetic_manifest(targets, 0.0, 1e-4)
        risk = {"js": 0.0, "eb": 0.0}
        reps = 250
        for rep in range(reps):
            data = generate_replication(dgp, [77, rep])
            design = build_design(data, SIM_LATTICE)
            cs = build_constraints(design, manifest)
            w = build_weights("prevalence", data, SIM_LATTICE)
            uc = fit_unconstrained(design, data.outcome)
            c = fit_constrained(uc, cs, design)
            js = fit_james_stein(uc, c, cs, design, w, data.n)
            eb = fit_empirical_bayes(uc, c, cs, data.n)
            err_js = js.tau - targets.tau_fine
            err_eb = eb.tau - targets.tau_fine
            risk["js"] += float(err_js @ (w.diagonal * err_js))
            risk["eb"] += float(err_eb @ (w.diagonal * err_eb))
        assert risk["eb"] > risk["js"]


class TestGeneralizedRidge:
    def test_huge_external_variance_recovers_unconstrained(self):
        data, design, manifest, cs, uc, c = pipeline(seed=4, variance=1e10)
        gr = fit_generalized_ridge(design, data.outcome, cs, manifest)
        np.testing.assert_allclose(gr.beta, uc.beta, atol=1e-6)

    def test_tiny_external_variance_recovers_constrained(self):
        data, design, manifest, cs, uc, c = pipeline(seed=5, variance=1e-8)
        gr = fit_generalized_ridge(design, data.outcome, cs, manifest)
        assert np.abs(gr.beta - c.beta).max() < 1e-3

    def test_zero_external_variance_rejected(self):
        data, design, manifest, cs, uc, c = pipeline(seed=6)
        zero_var = dataclasses.replace(
            manifest,
            entries=tuple(
                dataclasses.replace(e, variance=0.0) for e in manifest.entries
            ),
        )
        with pytest.raises(ValidationError, match="positive"):
            fit_generalized_ridge(design, data.outcome, cs, zero_var)

    def test_penalty_matrix_shape(self):
        data, design, manifest, cs, uc, c = pipeline(seed=7)
        gr = fit_generalized_ridge(design, data.outcome, cs, manifest)
        assert gr.weight_matrix_or_penalty.shape == (3, 3)
        assert gr.kind == "generalized_ridge"

    def test_variance_psd(self):
        data, design, manifest, cs, uc, c = pipeline(seed=8)
        gr = fit_generalized_ridge(design, data.outcome, cs, manifest)
        assert np.linalg.eigvalsh(gr.var_beta).min() >= -1e-10


class TestWeightIndependence:
    def test_point_estimates_ignore_weight_matrix(self):
        """Recomputing with a different weight scheme leaves both comparator
        coefficient vectors unchanged exactly (they never consume W)."""
        data, design, manifest, cs, uc, c = pipeline(seed=9)
        eb1 = fit_empirical_bayes(uc, c, cs, data.n)
        gr1 = fit_generalized_ridge(design, data.outcome, cs, manifest)
        # Different weights feed only the James-Stein path.
        w_uniform = build_weights("uniform", data, design.lattice)
        fit_james_stein(uc, c, cs, design, w_uniform, data.n)
        eb2 = fit_empirical_bayes(uc, c, cs, data.n)
        gr2 = fit_generalized_ridge(design, data.outcome, cs, manifest)
        np.testing.assert_array_equal(eb1.beta, eb2.beta)
        np.testing.assert_array_equal(gr1.beta, gr2.beta)

import dataclasses
import math

import numpy as np
import pytest

from cateshrink.data import (
    ExternalManifest,
    ManifestEntry,
    MarginalSubgroup,
    enumerate_lattice,
)
from cateshrink.design import build_constraints, build_design, build_weights
from cateshrink.errors import NumericalError, ValidationError
from cateshrink.estimators import fit_constrained, fit_unconstrained
from cateshrink.shrinkage import (
    INFEASIBLE_NU,
    fit_james_stein,
    js_variance,
    nu_from_p,
    shrinkage_factor,
    taylor_projection,
    tune_nu,
    wald_ci,
)
from cateshrink.simulation import (
    DgpConfig,
    SIM_LATTICE,
    generate_replication,
    synthetic_manifest,
    true_effects,
)

from conftest import TWO_BINARY, q3_manifest, two_binary_dataset


def full_pipeline(seed=0, n=160, gamma=(2.5, 3.75, 2.5), scheme="prevalence",
                  custom=None):
    data = two_binary_dataset(n, seed=seed)
    lattice = enumerate_lattice(TWO_BINARY)
    design = build_design(data, lattice)
    cs = build_constraints(design, q3_manifest(gamma=gamma))
    w = build_weights(scheme, data, lattice, custom=custom)
    uc = fit_unconstrained(design, data.outcome)
    c = fit_constrained(uc, cs, design)
    js = fit_james_stein(uc, c, cs, design, w, data.n)
    return data, design, cs, w, uc, c, js


def oracle_taylor(nu, n, delta, gamma_mat, B, C):
    """Independently coded expansion of the Taylor matrix, explicit inverses
    and term-by-term outer products."""
    p = B.shape[0]
    d = float(delta.T @ gamma_mat @ delta)
    term1 = np.eye(p)
    term2 = -(nu / (n * d)) * (B @ C)
    outer = np.outer(delta, delta)
    term3 = (2.0 * nu / (n * d**2)) * (outer @ gamma_mat @ (B @ C))
    return term1 + term2 + term3


class TestTuning:
    def test_identity_p(self):
        nu, feasible = nu_from_p(np.eye(4))
        assert nu == pytest.approx(4 - 2 * 1)
        assert feasible

    def test_diag_3100(self):
        nu, feasible = nu_from_p(np.diag([3.0, 1.0, 0.0, 0.0]))
        assert nu == pytest.approx(4 - 6)
        assert not feasible

    def test_zero_matrix(self):
        nu, feasible = nu_from_p(np.zeros((4, 4)))
        assert nu == 0.0
        assert not feasible

    def test_rank_one_always_infeasible(self):
        """A single (q = 1) restriction cannot satisfy tr/||.|| > 2."""
        data = two_binary_dataset(120, seed=2)
        design = build_design(data, enumerate_lattice(TWO_BINARY))
        manifest = ExternalManifest(
            entries=(
                ManifestEntry(
                    subgroup=MarginalSubgroup(constrained=(), label="ATE"),
                    estimate=3.0,
                    variance=1e-4,
                ),
            )
        )
        cs = build_constraints(design, manifest)
        uc = fit_unconstrained(design, data.outcome)
        w = build_weights("prevalence", data, design.lattice)
        tuning = tune_nu(uc, cs, design, w)
        assert np.linalg.matrix_rank(tuning.P_hat) <= 1
        assert not tuning.feasible
        assert tuning.nu <= 0

    def test_p_hat_formula(self):
        data, design, cs, w, uc, c, js = full_pipeline(seed=3)
        expected = (
            np.diag(w.diagonal)
            @ design.L
            @ uc.sigma_uc
            @ cs.C.T
            @ cs.B.T
            @ design.L.T
        )
        np.testing.assert_allclose(js.P_hat, expected, atol=1e-12)


class TestShrinkageFactor:
    def test_positive_part_binds(self):
        raw, plus = shrinkage_factor(2.0, 1.0)
        assert raw == -1.0 and plus == 0.0

    def test_mild_shrinkage(self):
        raw, plus = shrinkage_factor(2.0, 20.0)
        assert raw == pytest.approx(0.9) and plus == pytest.approx(0.9)

    def test_zero_quadratic_form(self):
        raw, plus = shrinkage_factor(2.0, 0.0)
        assert raw == -math.inf and plus == 0.0


class TestJamesStein:
    def test_infeasible_falls_back_to_unconstrained(self):
        """q = 1 (ATE-only) manifest: Remark-2 gate."""
        data = two_binary_dataset(150, seed=4)
        lattice = enumerate_lattice(TWO_BINARY)
        design = build_design(data, lattice)
        manifest = ExternalManifest(
            entries=(
                ManifestEntry(
                    subgroup=MarginalSubgroup(constrained=(), label="ATE"),
                    estimate=2.0,
                    variance=1e-4,
                ),
            )
        )
        cs = build_constraints(design, manifest)
        w = build_weights("prevalence", data, lattice)
        uc = fit_unconstrained(design, data.outcome)
        c = fit_constrained(uc, cs, design)
        js = fit_james_stein(uc, c, cs, design, w, data.n)
        assert js.warning == INFEASIBLE_NU
        assert not js.feasible
        assert js.omega == 1.0
        np.testing.assert_array_equal(js.beta, uc.beta)
        np.testing.assert_array_equal(js.tau, uc.tau)
        np.testing.assert_array_equal(js.var_beta, uc.var_beta)

    def test_zero_discrepancy_returns_constrained(self):
        data, design, cs0, w, uc, _, _ = full_pipeline(seed=5)
        cs = dataclasses.replace(cs0, gamma_hat_E=cs0.C @ uc.beta)
        c = fit_constrained(uc, cs, design)
        js = fit_james_stein(uc, c, cs, design, w, data.n)
        assert js.quad_form == 0.0
        assert js.omega == 0.0
        assert js.variance_branch == "constrained"
        np.testing.assert_array_equal(js.beta, c.beta)
        np.testing.assert_array_equal(js.var_beta, c.var_beta)

    def test_convex_combination_identity(self):
        data, design, cs, w, uc, c, js = full_pipeline(seed=6)
        assert 0.0 < js.omega < 1.0
        np.testing.assert_allclose(
            js.beta, js.omega * uc.beta + (1 - js.omega) * c.beta, atol=1e-12
        )
        lo = np.minimum(uc.tau, c.tau) - 1e-12
        hi = np.maximum(uc.tau, c.tau) + 1e-12
        assert ((js.tau >= lo) & (js.tau <= hi)).all()

    @pytest.mark.parametrize("seed", range(8))
    def test_omega_bounds(self, seed):
        data, design, cs, w, uc, c, js = full_pipeline(seed=seed, n=100 + 9 * seed)
        if js.nu > 0 and js.quad_form > js.nu:
            assert 0.0 < js.omega < 1.0
        if js.quad_form <= js.nu:
            assert js.omega == 0.0

    def test_weight_rescaling_invariance(self):
        data, design, cs, w, uc, c, js = full_pipeline(seed=7)
        scaled = build_weights(
            "custom", data, design.lattice, custom=10.0 * w.diagonal
        )
        js10 = fit_james_stein(uc, c, cs, design, scaled, data.n)
        assert js10.omega == pytest.approx(js.omega, abs=1e-10)
        np.testing.assert_allclose(js10.beta, js.beta, atol=1e-10)
        np.testing.assert_allclose(js10.tau, js.tau, atol=1e-10)
        np.testing.assert_allclose(js10.var_beta, js.var_beta, atol=1e-10)
        assert js10.nu == pytest.approx(10 * js.nu, rel=1e-10)
        assert js10.quad_form == pytest.approx(10 * js.quad_form, rel=1e-10)

    def test_shrinkage_grows_with_incompatibility(self):
        """Mean shrinkage weight at e = 0.1 beats e = 0 and exceeds 0.9."""
        dgp = DgpConfig()
        targets = true_effects(dgp)
        means = {}
        for e in (0.0, 0.1):
            manifest = synthetic_manifest(targets, e, 1e-4)
            omegas = []
            for rep in range(250):
                data = generate_replication(dgp, [57, rep])
                design = build_design(data, SIM_LATTICE)
                cs = build_constraints(design, manifest)
                w = build_weights("prevalence", data, SIM_LATTICE)
                uc = fit_unconstrained(design, data.outcome)
                c = fit_constrained(uc, cs, design)
                omegas.append(fit_james_stein(uc, c, cs, design, w, data.n).omega)
            means[e] = np.mean(omegas)
        assert means[0.1] > means[0.0]
        assert means[0.1] > 0.9


class TestJsVariance:
    def test_positive_part_branch_returns_constrained(self):
        data, design, cs0, w, uc, _, _ = full_pipeline(seed=8)
        cs = dataclasses.replace(cs0, gamma_hat_E=cs0.C @ uc.beta)
        c = fit_constrained(uc, cs, design)
        js = fit_james_stein(uc, c, cs, design, w, data.n)
        out = js_variance(js, uc, c, cs, data.n)
        np.testing.assert_array_equal(out, c.var_beta)

    def test_vanishing_nu_gives_identity_projection(self):
        data, design, cs, w, uc, c, js = full_pipeline(seed=9)
        G = taylor_projection(0.0, data.n, js.delta, js.gamma_mat, cs.B, cs.C)
        np.testing.assert_array_equal(G, np.eye(design.p))

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_independent_expansion(self, seed):
        data, design, cs, w, uc, c, js = full_pipeline(seed=seed, n=90 + 17 * seed)
        if js.quad_form <= js.nu or js.nu <= 0:
            pytest.skip("positive-part branch drawn")
        G = taylor_projection(js.nu, data.n, js.delta, js.gamma_mat, cs.B, cs.C)
        G_oracle = oracle_taylor(js.nu, data.n, js.delta, js.gamma_mat, cs.B, cs.C)
        np.testing.assert_allclose(G, G_oracle, atol=1e-10)
        var_oracle = G_oracle @ uc.var_beta @ G_oracle.T
        np.testing.assert_allclose(
            js_variance(js, uc, c, cs, data.n), var_oracle, atol=1e-10
        )

    def test_degenerate_direction_rejected(self):
        data, design, cs, w, uc, c, js = full_pipeline(seed=10)
        with pytest.raises(NumericalError, match="Delta"):
            taylor_projection(js.nu, data.n, np.zeros(4), js.gamma_mat, cs.B, cs.C)


class TestWaldCi:
    def test_standard_normal_quantile(self):
        (lo, hi), = wald_ci(np.array([0.0]), np.array([[1.0]]), 0.05)
        assert lo == pytest.approx(-1.959964, abs=1e-6)
        assert hi == pytest.approx(1.959964, abs=1e-6)

    def test_zero_variance_degenerate(self):
        (lo, hi), = wald_ci(np.array([2.5]), np.array([[0.0]]), 0.05)
        assert (lo, hi) == (2.5, 2.5)

    def test_alpha_ten_percent(self):
        (lo, hi), = wald_ci(np.array([0.0]), np.array([[4.0]]), 0.10)
        assert hi == pytest.approx(1.644854 * 2.0, abs=1e-5)

    def test_negative_variance_rejected(self):
        with pytest.raises(NumericalError, match="negative variance"):
            wald_ci(np.array([0.0]), np.array([[-1e-6]]), 0.05)

    def test_bad_alpha(self):
        with pytest.raises(ValidationError, match="alpha"):
            wald_ci(np.array([0.0]), np.array([[1.0]]), 1.5)

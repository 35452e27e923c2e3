import numpy as np
import pytest

from cateshrink.data import enumerate_lattice
from cateshrink.design import build_design
from cateshrink.errors import SimulationFailureError, ValidationError
from cateshrink.estimators import fit_unconstrained
from cateshrink.reporting import detect_kind
from cateshrink.simulation import (
    SIM_LATTICE,
    DgpConfig,
    SweepConfig,
    generate_replication,
    render_run_manifest,
    run_sweep,
    synthetic_manifest,
    true_effects,
)

UNIT_EFFECTS_DGP = DgpConfig(eta=(-2.0, 1.0, 1.0, 0.5), zeta=(0.0, 2.0, 2.0, 1.0))


class TestTrueEffects:
    def test_fine_grained_values(self):
        t = true_effects(UNIT_EFFECTS_DGP)
        np.testing.assert_allclose(t.tau_fine, [2.0, 3.0, 3.0, 4.5])

    def test_marginal_average(self):
        t = true_effects(UNIT_EFFECTS_DGP)
        # gamma order: x1=0, x1=1, x2=0
        assert t.gamma_marginal[1] == pytest.approx(3.75)
        assert t.gamma_marginal[0] == pytest.approx(2.5)
        assert t.gamma_marginal[2] == pytest.approx(2.5)

    def test_zero_marginal_rejected(self):
        cfg = DgpConfig(eta=(1.0, 1.0, 1.0, 0.5), zeta=(1.0, 1.0, 1.0, 0.5))
        with pytest.raises(ValidationError, match="zero marginal CATE"):
            true_effects(cfg)


class TestGenerateReplication:
    def test_deterministic(self):
        a = generate_replication(DgpConfig(), [3, 0, 5])
        b = generate_replication(DgpConfig(), [3, 0, 5])
        np.testing.assert_array_equal(a.outcome, b.outcome)
        np.testing.assert_array_equal(a.covariates, b.covariates)
        np.testing.assert_array_equal(a.treatment, b.treatment)

    def test_different_seeds_differ(self):
        a = generate_replication(DgpConfig(), [3, 0, 5])
        b = generate_replication(DgpConfig(), [3, 0, 6])
        assert not np.array_equal(a.outcome, b.outcome)

    def test_noiseless_matches_mean_structure(self):
        cfg = DgpConfig(sigma0=0.0, sigma1=0.0)
        data = generate_replication(cfg, 11)
        x1, x2 = data.covariates[:, 0], data.covariates[:, 1]
        a = data.treatment
        e0, e1 = cfg.eta, cfg.zeta
        y0 = e0[0] + e0[1] * x1 + e0[2] * x2 + e0[3] * x1 * x2
        y1 = e1[0] + e1[1] * x1 + e1[2] * x2 + e1[3] * x1 * x2
        np.testing.assert_array_equal(data.outcome, (1 - a) * y0 + a * y1)

    def test_large_n_recovers_truth(self):
        """Difference-in-means on one huge replication sits within 3 standard
        errors of the true fine-grained effects."""
        cfg = DgpConfig(n=100_000)
        truth = true_effects(cfg).tau_fine
        data = generate_replication(cfg, 99)
        design = build_design(data, SIM_LATTICE)
        uc = fit_unconstrained(design, data.outcome)
        se = np.sqrt(np.diag(uc.var_tau))
        assert (np.abs(uc.tau - truth) <= 3 * se).all()

    def test_sample_size_floor(self):
        with pytest.raises(ValidationError, match=">= 20"):
            DgpConfig(n=10)


class TestSyntheticManifest:
    def test_zero_discrepancy(self):
        t = true_effects(DgpConfig())
        m = synthetic_manifest(t, 0.0, 1e-4)
        np.testing.assert_array_equal(m.gamma(), t.gamma_marginal)
        assert m.q == 3

    def test_example_value(self):
        t = true_effects(UNIT_EFFECTS_DGP)
        m = synthetic_manifest(t, 0.1, 1e-4)
        assert m.gamma()[1] == pytest.approx(4.125)

    def test_common_relative_discrepancy(self):
        t = true_effects(DgpConfig())
        m = synthetic_manifest(t, 0.05, 1e-4)
        np.testing.assert_allclose(m.gamma() / t.gamma_marginal, 1.05)
        np.testing.assert_array_equal(m.variances(), [1e-4] * 3)

    def test_subgroup_identities(self):
        t = true_effects(DgpConfig())
        m = synthetic_manifest(t, 0.0, 1e-4)
        assert [e.subgroup.label for e in m.entries] == ["x1=0", "x1=1", "x2=0"]


@pytest.fixture(scope="module")
def small_sweep():
    sweep = SweepConfig(e_grid=(0.0, 0.1), replications=40, base_seed=12)
    return run_sweep(DgpConfig(n=200), sweep, workers=1)


class TestRunSweep:

    def test_unconstrained_relative_risk_is_one(self, small_sweep):
        np.testing.assert_array_equal(small_sweep.relative_risk[:, 0], 1.0)
        np.testing.assert_array_equal(small_sweep.relative_risk_mc_se[:, 0], 0.0)

    def test_shapes(self, small_sweep):
        assert small_sweep.coverage.shape == (2, 5, 4)
        assert small_sweep.mean_variance.shape == (2, 5, 4)
        assert small_sweep.mean_omega.shape == (2,)
        assert list(small_sweep.subgroup_labels) == [
            "x1=0|x2=0",
            "x1=0|x2=1",
            "x1=1|x2=0",
            "x1=1|x2=1",
        ]

    def test_csv_round_trip_kind(self, small_sweep):
        content = small_sweep.to_csv()
        assert detect_kind(content) == "sweep"
        assert content.splitlines()[0] == "e,estimator,metric,subgroup,value"
        # one row per (e, estimator, metric-with-subgroup) plus omega/failed
        expected = 2 * (5 * (3 + 3 * 4) + 2)
        assert len(content.splitlines()) == 1 + expected

    def test_worker_count_does_not_change_bytes(self):
        sweep = SweepConfig(e_grid=(0.0, 0.05), replications=24, base_seed=5)
        one = run_sweep(DgpConfig(n=120), sweep, workers=1)
        eight = run_sweep(DgpConfig(n=120), sweep, workers=8)
        assert one.to_csv() == eight.to_csv()

    def test_seed_changes_results(self):
        base = SweepConfig(e_grid=(0.0,), replications=24, base_seed=5)
        other = SweepConfig(e_grid=(0.0,), replications=24, base_seed=6)
        a = run_sweep(DgpConfig(n=120), base, workers=1)
        b = run_sweep(DgpConfig(n=120), other, workers=1)
        assert a.to_csv() != b.to_csv()

    def test_failure_fraction_aborts(self):
        # p1 so extreme that x1 = 1 cells are usually empty
        dgp = DgpConfig(n=20, p1=0.02)
        sweep = SweepConfig(e_grid=(0.0,), replications=30, base_seed=1)
        with pytest.raises(SimulationFailureError, match="replications failed"):
            run_sweep(dgp, sweep, workers=1)

    def test_run_manifest_records_config(self):
        dgp = DgpConfig()
        sweep = SweepConfig(e_grid=(0.0, 0.1), replications=10, base_seed=77)
        text = render_run_manifest(dgp, sweep, workers=4)
        assert "base_seed: 77" in text
        assert "workers: 4" in text
        assert "replications: 10" in text
        assert "zeta: 1.0,2.5,2.5,1.25" in text


class TestConfigValidation:
    def test_bad_probability(self):
        with pytest.raises(ValidationError, match="p1"):
            DgpConfig(p1=0.0)

    def test_negative_e(self):
        with pytest.raises(ValidationError, match="incompatibility"):
            SweepConfig(e_grid=(-0.1,))

    def test_zero_external_variance(self):
        with pytest.raises(ValidationError, match="external_variance"):
            SweepConfig(external_variance=0.0)

    def test_bad_workers(self):
        with pytest.raises(ValidationError, match="workers"):
            run_sweep(DgpConfig(), SweepConfig(), workers=0)

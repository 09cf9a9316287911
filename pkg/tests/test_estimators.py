"""Plug-in estimators: oracle agreement, gradients, bias, and bound checkers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairfront.dist import JointPMF2, conditional_mutual_information, entropy, mutual_information
from fairfront.estimators import (
    BatchError,
    BiasModel,
    ConcentrationParams,
    SampleBatch,
    SoftBatch,
    concentration_bound,
    concentration_constant,
    conditional_dependence_bound_check,
    empirical_covariance_bound,
    miller_madow_correct,
    normalized_covariance,
    plugin_cmi_hard,
    read_hard_batch_csv,
    read_soft_batch_csv,
    soft_cmi,
    write_hard_batch_csv,
    write_soft_batch_csv,
)
from fairfront.fixtures import random_joint

LN2 = math.log(2.0)


def sample_from_joint(joint, n, rng):
    kx, ky, kz = joint.probs.shape
    flat = rng.choice(kx * ky * kz, size=n, p=joint.probs.ravel())
    x, rem = np.divmod(flat, ky * kz)
    y, z = np.divmod(rem, kz)
    return x, y, z


def conditionally_independent_joint():
    """Uniform 2x2x2 law with U indep Z given Y exactly (true CMI = 0)."""
    probs = np.zeros((2, 2, 2))
    for y, p_y in enumerate([0.5, 0.5]):
        probs[:, y, :] = p_y * np.outer([0.5, 0.5], [0.5, 0.5])
    from fairfront.dist import JointPMF3

    return JointPMF3(probs)


class TestPluginHard:
    def test_copied_group_saturates(self):
        # u == z with z balanced inside each y stratum: ln 2 per stratum
        u = np.array([0, 1, 0, 1, 0, 1, 0, 1])
        z = u.copy()
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        assert plugin_cmi_hard(SampleBatch(u=u, y=y, z=z)) == pytest.approx(LN2, abs=1e-14)

    def test_single_sample_is_zero(self):
        assert plugin_cmi_hard(SampleBatch(u=[0], y=[0], z=[0])) == 0.0

    def test_agrees_with_exact_cmi_of_empirical_joint(self):
        rng = np.random.default_rng(123)
        joint = random_joint((2, 2, 2), rng)
        u, y, z = sample_from_joint(joint, 64, rng)
        batch = SampleBatch(u=u, y=y, z=z)
        exact = conditional_mutual_information(batch.empirical_joint())
        assert plugin_cmi_hard(batch) == pytest.approx(exact, abs=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_oracle_equivalence_random(self, seed):
        rng = np.random.default_rng(seed)
        joint = random_joint((3, 2, 2), rng)
        u, y, z = sample_from_joint(joint, 50, rng)
        batch = SampleBatch(u=u, y=y, z=z, card_u=3, card_y=2, card_z=2)
        exact = conditional_mutual_information(batch.empirical_joint())
        assert plugin_cmi_hard(batch) == pytest.approx(exact, abs=1e-12)

    def test_positive_bias_at_independence(self):
        # first-order bias K_Y (K_U-1)(K_Z-1) / (2 |B|) = 1/|B| here
        joint = conditionally_independent_joint()
        rng = np.random.default_rng(2024)
        n_batches, size = 600, 100
        vals = []
        for _ in range(n_batches):
            u, y, z = sample_from_joint(joint, size, rng)
            vals.append(plugin_cmi_hard(SampleBatch(u=u, y=y, z=z, card_u=2, card_y=2, card_z=2)))
        mean = float(np.mean(vals))
        assert mean > 0
        assert mean == pytest.approx(1.0 / size, rel=0.3)

    def test_consistency_with_correction(self):
        rng = np.random.default_rng(77)
        joint = random_joint((2, 2, 2), rng, alpha=5.0)  # alpha keeps cells away from 0
        true = conditional_mutual_information(joint)
        u, y, z = sample_from_joint(joint, 100_000, rng)
        batch = SampleBatch(u=u, y=y, z=z)
        corrected = miller_madow_correct(
            plugin_cmi_hard(batch), BiasModel(k_u=2, k_y=2, k_z=2, batch_size=len(batch))
        )
        assert abs(corrected - true) <= 0.005


class TestSoftCMI:
    def test_identical_posteriors_zero_value_zero_gradient(self):
        p = np.tile([0.3, 0.7], (6, 1))
        batch = SoftBatch(p=p, y=[0, 0, 0, 1, 1, 1], z=[0, 1, 0, 1, 0, 1])
        value, grad = soft_cmi(batch, return_grad=True)
        assert value == pytest.approx(0.0, abs=1e-15)
        # tangent components: differences along the simplex vanish
        np.testing.assert_allclose(grad - grad.mean(axis=1, keepdims=True), 0.0, atol=1e-15)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_one_hot_equals_hard(self):
        rng = np.random.default_rng(5)
        joint = random_joint((3, 2, 2), rng)
        u, y, z = sample_from_joint(joint, 80, rng)
        hard = plugin_cmi_hard(SampleBatch(u=u, y=y, z=z, card_u=3))
        soft = soft_cmi(SoftBatch(p=np.eye(3)[u], y=y, z=z))
        assert soft == pytest.approx(hard, abs=1e-12)

    def test_two_sample_hand_value(self):
        # mean of KL((.9,.1)||(.5,.5)) and KL((.1,.9)||(.5,.5))
        expected = 0.9 * math.log(1.8) + 0.1 * math.log(0.2)
        batch = SoftBatch(p=np.array([[0.9, 0.1], [0.1, 0.9]]), y=[0, 0], z=[0, 1])
        assert soft_cmi(batch) == pytest.approx(expected, abs=1e-12)
        assert soft_cmi(batch) == pytest.approx(0.368064, abs=1e-6)

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_gradient_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, k = 12, 3
        p = rng.dirichlet(np.full(k, 2.0), size=n)
        y = rng.integers(0, 2, n)
        z = rng.integers(0, 2, n)
        batch = SoftBatch(p=p, y=y, z=z)
        _, grad = soft_cmi(batch, return_grad=True)
        h = 1e-6
        for i in range(0, n, 5):
            for a in range(k):
                for b in range(a + 1, k):
                    # +h/-h on two coordinates stays on the simplex tangent
                    dp = np.zeros((n, k))
                    dp[i, a], dp[i, b] = h, -h
                    vp = soft_cmi(SoftBatch(p=p + dp, y=y, z=z))
                    vm = soft_cmi(SoftBatch(p=p - dp, y=y, z=z))
                    numeric = (vp - vm) / (2 * h)
                    analytic = grad[i, a] - grad[i, b]
                    assert abs(numeric - analytic) <= 1e-4 * max(1.0, abs(analytic))

    def test_nonnegative_and_empty_cells_skipped(self):
        # second y stratum has a single z group: contributes zero
        p = np.array([[0.8, 0.2], [0.2, 0.8], [0.6, 0.4], [0.5, 0.5]])
        batch = SoftBatch(p=p, y=[0, 0, 1, 1], z=[0, 1, 0, 0])
        value, grad = soft_cmi(batch, return_grad=True)
        assert value >= 0
        np.testing.assert_allclose(grad[2:], 0.0, atol=1e-15)

    def test_empty_batch_rejected(self):
        with pytest.raises(BatchError):
            SoftBatch(p=np.zeros((0, 2)), y=[], z=[])


class TestMillerMadow:
    def test_paper_arithmetic(self):
        model = BiasModel(k_u=2, k_y=2, k_z=2, batch_size=100)
        assert miller_madow_correct(0.02, model) == pytest.approx(0.01, abs=1e-15)

    def test_constant_predictor_no_correction(self):
        model = BiasModel(k_u=1, k_y=2, k_z=2, batch_size=10)
        assert miller_madow_correct(0.37, model) == 0.37

    def test_floor_at_zero(self):
        model = BiasModel(k_u=4, k_y=2, k_z=4, batch_size=10)
        assert miller_madow_correct(0.001, model) == 0.0


class TestConcentration:
    def test_constant_and_bound_from_formula(self):
        params = ConcentrationParams(
            k_u=2, k_y=2, k_z=2, p_min=0.25, q_min=0.25, delta=0.05, batch_size=10_000
        )
        c_expected = 2 * math.sqrt(2) * (math.log(4) + 6 * (1 + math.log(8)))
        assert concentration_constant(params) == pytest.approx(c_expected, abs=1e-12)
        assert concentration_bound(params) == pytest.approx(
            c_expected * math.sqrt(math.log(40) / 10_000), abs=1e-12
        )

    def test_quadrupling_batch_halves_bound(self):
        kw = dict(k_u=2, k_y=2, k_z=2, p_min=0.2, q_min=0.2, delta=0.05)
        b1 = concentration_bound(ConcentrationParams(batch_size=500, **kw))
        b4 = concentration_bound(ConcentrationParams(batch_size=2000, **kw))
        assert b4 == pytest.approx(b1 / 2, abs=1e-12)

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            ConcentrationParams(
                k_u=2, k_y=2, k_z=2, p_min=0.2, q_min=0.2, delta=2.0, batch_size=10
            )

    def test_infeasible_floors(self):
        with pytest.raises(ValueError):
            ConcentrationParams(
                k_u=2, k_y=2, k_z=2, p_min=0.6, q_min=0.2, delta=0.05, batch_size=10
            )


class TestEmpiricalCovarianceBound:
    def test_formula_value(self):
        got = empirical_covariance_bound(10_000, 0.05, 1.0, 1.0)
        assert got == pytest.approx(math.sqrt(2 * math.log(120) / 10_000), abs=1e-12)
        assert got == pytest.approx(0.030945, abs=5e-5)

    def test_quadrupling_halves(self):
        assert empirical_covariance_bound(4000, 0.1, 1, 1) == pytest.approx(
            empirical_covariance_bound(1000, 0.1, 1, 1) / 2, abs=1e-12
        )

    def test_zero_sup_norm(self):
        assert empirical_covariance_bound(100, 0.1, 0.0, 3.0) == 0.0


class TestNormalizedCovariance:
    def test_constant_function_rejected(self):
        j = JointPMF2(np.full((2, 2), 0.25))
        with pytest.raises(ValueError):
            normalized_covariance(j, [1.0, 1.0], [0.5, -0.5])

    def test_perfect_correlation_hits_one(self):
        j = JointPMF2(np.diag([0.5, 0.5]))
        assert normalized_covariance(j, [-1.0, 1.0], [-1.0, 1.0]) == pytest.approx(1.0, abs=1e-14)

    def test_dominated_by_sqrt_two_mi(self):
        rng = np.random.default_rng(99)
        j = JointPMF2(rng.dirichlet(np.ones(6)).reshape(2, 3))
        bound = math.sqrt(2.0 * mutual_information(j))
        worst = 0.0
        for _ in range(10_000):
            h = rng.uniform(-1, 1, size=2)
            g = rng.uniform(-1, 1, size=3)
            try:
                worst = max(worst, normalized_covariance(j, h, g))
            except ValueError:
                continue
        assert worst <= bound + 1e-12

    def test_l2_normalization_breaks_where_sup_norm_holds(self):
        # rare-event construction: Y Bernoulli(eps), Z = Y, indicator test
        # functions scaled by 1/sqrt(eps(1-eps)). The L2-normalized
        # correlation is exactly 1 and dwarfs sqrt(2 I), while the
        # sup-normalized ratio stays under the bound.
        eps = 0.01
        j = JointPMF2(np.diag([eps, 1 - eps]))
        scale = math.sqrt(eps * (1 - eps))
        f = np.array([(1 - eps) / scale, (0 - eps) / scale])  # centered indicator of {0}
        p_marg = np.array([eps, 1 - eps])
        cov = float(((f - p_marg @ f) ** 2 * p_marg).sum())
        l2_norm = math.sqrt(float((f**2 * p_marg).sum()))
        l2_ratio = cov / l2_norm**2
        mi = mutual_information(j)
        bound = math.sqrt(2 * mi)
        assert l2_ratio == pytest.approx(1.0, abs=1e-12)
        assert l2_ratio > bound  # the L2-normalized covariance escapes the bound
        sup_ratio = normalized_covariance(j, f, f)
        assert sup_ratio <= bound + 1e-12
        assert sup_ratio == pytest.approx(eps / (1 - eps), abs=1e-12)


class TestConditionalBoundCheck:
    def test_conditional_product_all_zero(self):
        probs = np.zeros((2, 2, 2))
        for y, p_y in enumerate([0.4, 0.6]):
            probs[:, y, :] = p_y * np.outer([0.3, 0.7], [0.8, 0.2])
        from fairfront.dist import JointPMF3

        report = conditional_dependence_bound_check(JointPMF3(probs), trials=2000, seed=1)
        assert report.bound <= 1e-7  # sqrt(2 * CMI) at CMI ~ float noise
        assert report.max_ratio <= 1e-12
        assert report.violations == 0

    def test_copy_joint_bounded_by_sqrt_2_ln2(self):
        probs = np.zeros((2, 2, 2))
        for u in range(2):
            for y in range(2):
                probs[u, y, u] = 0.25
        from fairfront.dist import JointPMF3

        report = conditional_dependence_bound_check(JointPMF3(probs), trials=10_000, seed=2)
        assert report.bound == pytest.approx(math.sqrt(2 * LN2), abs=1e-12)
        assert report.max_ratio <= report.bound + 1e-12
        assert report.violations == 0

    @given(st.integers(0, 1000))
    @settings(max_examples=15, deadline=None)
    def test_never_violated_on_random_joints(self, seed):
        rng = np.random.default_rng(seed)
        j = random_joint((2, 2, 2), rng)
        report = conditional_dependence_bound_check(j, trials=500, seed=seed)
        assert report.violations == 0

    def test_json_report(self):
        import json

        rng = np.random.default_rng(0)
        j = random_joint((2, 2, 2), rng)
        report = conditional_dependence_bound_check(j, trials=100, seed=7)
        doc = json.loads(report.to_json())
        assert doc["trials"] == 100 and doc["seed"] == 7
        assert set(doc) == {"max_ratio", "bound", "trials", "seed", "violations"}


class TestSerialization:
    def test_hard_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        batch = SampleBatch(
            u=rng.integers(0, 3, 40), y=rng.integers(0, 2, 40), z=rng.integers(0, 2, 40)
        )
        path = tmp_path / "hard.csv"
        write_hard_batch_csv(batch, path)
        back = read_hard_batch_csv(path)
        np.testing.assert_array_equal(back.u, batch.u)
        np.testing.assert_array_equal(back.y, batch.y)
        np.testing.assert_array_equal(back.z, batch.z)

    def test_soft_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        batch = SoftBatch(
            p=rng.dirichlet(np.ones(3), size=20), y=rng.integers(0, 2, 20), z=rng.integers(0, 2, 20)
        )
        path = tmp_path / "soft.csv"
        write_soft_batch_csv(batch, path)
        back = read_soft_batch_csv(path)
        np.testing.assert_array_equal(back.p, batch.p)

    def test_bad_rows_reported_with_line_numbers(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("u,y,z\n0,0,0\n1,oops,1\n")
        with pytest.raises(BatchError, match="row 3"):
            read_hard_batch_csv(path)

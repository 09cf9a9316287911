"""Frontier oracles: enumeration, envelopes, budget, and trade-off audits."""

import math

import numpy as np
import pytest

from fairfront.dist import (
    JointPMF3,
    PredictorTable,
    RandomizedPredictor,
    conditional_mutual_information,
    entropy,
    mutual_information,
    pushforward,
)
from fairfront.fixtures import (
    degenerate_fixture,
    independence_fixture,
    necessity_fixture,
    random_joint,
)
from fairfront.frontier import (
    EnumerationCapError,
    FrontierPoint,
    PreconditionError,
    budget_check,
    conditional_law_matching_check,
    det_frontier,
    enumerate_deterministic_set,
    necessity_analysis,
    predictor_from_index,
    upper_concave_envelope,
    uv_of_predictor,
)

LN2 = math.log(2.0)


def uv_first_principles(joint: JointPMF3, table: np.ndarray, card_out: int):
    """Second implementation path: u_f and v_f straight from definition sums."""
    kx, ky, kz = joint.probs.shape
    p = np.zeros((card_out, ky, kz))
    for x in range(kx):
        for y in range(ky):
            for z in range(kz):
                p[table[x, z], y, z] += joint.probs[x, y, z]
    p_u = p.sum(axis=(1, 2))
    p_y = p.sum(axis=(0, 2))
    p_uy = p.sum(axis=2)
    p_yz = p.sum(axis=0)
    u = 0.0
    for a in range(card_out):
        for y in range(ky):
            if p_uy[a, y] > 0:
                u += p_uy[a, y] * math.log(p_uy[a, y] / (p_u[a] * p_y[y]))
    v = 0.0
    for a in range(card_out):
        for y in range(ky):
            for z in range(kz):
                if p[a, y, z] > 0:
                    v += p[a, y, z] * math.log(p[a, y, z] * p_y[y] / (p_uy[a, y] * p_yz[y, z]))
    return v, u


class TestEnumeration:
    def test_single_output_constant_point(self):
        rng = np.random.default_rng(0)
        pts = enumerate_deterministic_set(random_joint((2, 2, 2), rng), card_out=1)
        assert pts == [FrontierPoint(v=0.0, u=0.0, provenance="f0")]

    def test_perfect_fair_prediction_point_present(self):
        pts = enumerate_deterministic_set(independence_fixture(), card_out=2)
        fair_perfect = [p for p in pts if p.v <= 1e-12 and abs(p.u - LN2) <= 1e-12]
        assert fair_perfect, "identity-in-x predictor should reach (0, H(Y))"

    def test_all_16_points_match_first_principles(self):
        rng = np.random.default_rng(314)
        joint = random_joint((2, 2, 2), rng)
        pts = enumerate_deterministic_set(joint, card_out=2, dedup_tol=0)
        # dedup off: every one of the 16 tables is listed
        assert len(pts) == 16
        for p in pts:
            pid = int(p.provenance[1:])
            pred = predictor_from_index(joint, 2, pid)
            v_ref, u_ref = uv_first_principles(joint, np.asarray(pred.map), 2)
            assert p.v == pytest.approx(v_ref, abs=1e-12)
            assert p.u == pytest.approx(u_ref, abs=1e-12)

    def test_cap_enforced(self):
        rng = np.random.default_rng(1)
        joint = random_joint((8, 2, 8), rng)
        with pytest.raises(EnumerationCapError):
            enumerate_deterministic_set(joint, card_out=2)  # 2^64 tables


class TestEnvelope:
    def test_two_point_hull(self):
        f = upper_concave_envelope(
            [FrontierPoint(0, 0, "a"), FrontierPoint(1, 1, "b")]
        )
        assert [(p.v, p.u) for p in f.vertices] == [(0, 0), (1, 1)]
        assert f.evaluate(0.5) == pytest.approx(0.5)

    def test_point_below_chord_dropped(self):
        f = upper_concave_envelope(
            [FrontierPoint(0, 0, "a"), FrontierPoint(0.5, 0.2, "mid"), FrontierPoint(1, 1, "b")]
        )
        assert [(p.v, p.u) for p in f.vertices] == [(0, 0), (1, 1)]
        assert f.evaluate(0.5) == pytest.approx(0.5)

    def test_dominated_points_dropped(self):
        f = upper_concave_envelope(
            [
                FrontierPoint(0, 0.3, "a"),
                FrontierPoint(0.2, 0.25, "dominated"),
                FrontierPoint(0.4, 0.5, "b"),
            ]
        )
        assert [p.provenance for p in f.vertices] == ["a", "b"]

    def test_equal_v_keeps_max_u(self):
        f = upper_concave_envelope(
            [FrontierPoint(0, 0.1, "lo"), FrontierPoint(0, 0.4, "hi"), FrontierPoint(1, 0.6, "b")]
        )
        assert f.vertices[0].provenance == "hi"

    def test_slopes_non_increasing(self):
        rng = np.random.default_rng(8)
        joint = random_joint((2, 2, 2), rng)
        f = upper_concave_envelope(enumerate_deterministic_set(joint, 2))
        vs = [p.v for p in f.vertices]
        us = [p.u for p in f.vertices]
        slopes = np.diff(us) / np.diff(vs)
        assert np.all(np.diff(slopes) <= 1e-12)

    def test_mixtures_contained(self):
        rng = np.random.default_rng(21)
        joint = random_joint((2, 2, 2), rng)
        pts = enumerate_deterministic_set(joint, 2)
        env = upper_concave_envelope(pts)
        for _ in range(1000):
            i, j = rng.integers(0, 16, size=2)
            mix = RandomizedPredictor(
                f0=predictor_from_index(joint, 2, int(i)),
                f1=predictor_from_index(joint, 2, int(j)),
                mix=float(rng.uniform()),
            )
            v, u = uv_of_predictor(joint, mix)
            assert u <= env.evaluate(v) + 1e-9

    def test_independence_fixture_single_vertex(self):
        env = upper_concave_envelope(enumerate_deterministic_set(independence_fixture(), 2))
        assert len(env.vertices) == 1
        assert env.vertices[0].v == pytest.approx(0.0, abs=1e-12)
        assert env.vertices[0].u == pytest.approx(LN2, abs=1e-12)
        assert env.evaluate(0.3) == pytest.approx(LN2, abs=1e-12)  # constant beyond max v


class TestDetFrontier:
    def test_step_values(self):
        pts = [FrontierPoint(0, 0, "a"), FrontierPoint(0.5, 0.4, "b"), FrontierPoint(0.9, 0.6, "c")]
        got = det_frontier(pts, [0.0, 0.4, 0.5, 1.0])
        assert got == [(0.0, 0.0), (0.4, 0.0), (0.5, 0.4), (1.0, 0.6)]

    def test_non_decreasing_and_dominated_by_envelope(self):
        rng = np.random.default_rng(33)
        joint = random_joint((2, 2, 2), rng)
        pts = enumerate_deterministic_set(joint, 2)
        env = upper_concave_envelope(pts)
        grid = np.linspace(0, max(p.v for p in pts), 32)
        det = det_frontier(pts, grid)
        us = [u for _, u in det]
        assert all(b >= a - 1e-15 for a, b in zip(us, us[1:]))
        for v, u in det:
            assert u <= env.evaluate(v) + 1e-12

    def test_endpoint_identities(self):
        rng = np.random.default_rng(54)
        joint = random_joint((2, 2, 2), rng)
        pts = enumerate_deterministic_set(joint, 2)
        env = upper_concave_envelope(pts)
        pair_yz = joint.pair(1, 2).probs
        h_z_given_y = entropy(pair_yz.ravel()) - entropy(pair_yz.sum(axis=1))
        max_u = max(p.u for p in pts)
        assert env.evaluate(h_z_given_y) == pytest.approx(max_u, abs=1e-12)
        fair_u = max((p.u for p in pts if p.v <= 1e-10), default=0.0)
        assert env.evaluate(0.0) >= fair_u - 1e-12


class TestBudget:
    def test_constant_predictor(self):
        rng = np.random.default_rng(2)
        joint = random_joint((2, 2, 2), rng)
        rep = budget_check(joint, PredictorTable(map=np.zeros((2, 2), dtype=int), card_out=2))
        assert rep.identity_ok and rep.bound_ok
        assert rep.u == pytest.approx(0, abs=1e-14) and rep.v == pytest.approx(0, abs=1e-14)

    def test_identity_predictor_saturates_budget(self):
        # U = (X, Z) achieves u + v = I((X,Z);(Y,Z)) exactly
        rng = np.random.default_rng(17)
        joint = random_joint((2, 2, 2), rng)
        table = np.array([[0, 1], [2, 3]])
        rep = budget_check(joint, PredictorTable(map=table, card_out=4))
        assert rep.identity_ok and rep.bound_ok
        assert rep.u + rep.v == pytest.approx(rep.budget, abs=1e-12)

    def test_all_16_predictors(self):
        rng = np.random.default_rng(90)
        joint = random_joint((2, 2, 2), rng)
        for pid in range(16):
            rep = budget_check(joint, predictor_from_index(joint, 2, pid))
            assert rep.identity_ok and rep.bound_ok


class TestNecessity:
    def test_necessity_fixture_limit_and_tradeoff(self):
        rep = necessity_analysis(necessity_fixture(), card_out=2)
        u_x_expected = LN2 - entropy([0.25, 0.75])
        assert rep.assumption_holds
        assert rep.u_x_star == pytest.approx(u_x_expected, abs=1e-12)
        assert rep.u_x_star == pytest.approx(0.130812, abs=1e-6)
        assert rep.max_fair_utility == pytest.approx(rep.u_x_star, abs=1e-9)
        assert rep.u_xz_star > rep.u_x_star + 1e-3  # someone beats the fair limit
        assert rep.fairness_limit_ok and rep.strict_tradeoff_ok

    def test_every_predictor_beyond_limit_violates(self):
        joint = necessity_fixture()
        rep = necessity_analysis(joint, card_out=2)
        found_beyond = False
        for pid in range(16):
            v, u = uv_of_predictor(joint, predictor_from_index(joint, 2, pid))
            if u > rep.u_x_star + 1e-9:
                found_beyond = True
                assert v > 1e-10
        assert found_beyond

    def test_degenerate_fixture_flagged_not_asserted(self):
        rep = necessity_analysis(degenerate_fixture(), card_out=2)
        assert rep.degenerate_z_given_y
        assert not rep.assumption_holds
        assert rep.fairness_limit_ok is None and rep.strict_tradeoff_ok is None
        # the shortcut is real: copying z is fair here and beats the x-only optimum
        assert rep.max_fair_utility > rep.u_x_star + 1e-3

    def test_witnesses_decode(self):
        joint = necessity_fixture()
        rep = necessity_analysis(joint, card_out=2)
        fair_id = int(rep.witnesses["max_fair"][1:])
        v, u = uv_of_predictor(joint, predictor_from_index(joint, 2, fair_id))
        assert v <= 1e-10 and u == pytest.approx(rep.max_fair_utility, abs=1e-12)


class TestLawMatching:
    def test_x_only_predictor_exact_match(self):
        joint = necessity_fixture()
        pred = PredictorTable(map=np.array([[0, 0], [1, 1]]), card_out=2)
        rep = conditional_law_matching_check(joint, pred)
        assert rep.max_deviation <= 1e-12
        assert rep.max_mi_deviation <= 1e-12 and rep.ok

    def test_all_fair_predictors_match(self):
        joint = necessity_fixture()
        for pid in range(16):
            pred = predictor_from_index(joint, 2, pid)
            v, _ = uv_of_predictor(joint, pred)
            if v <= 1e-10:
                rep = conditional_law_matching_check(joint, pred)
                assert rep.max_deviation <= 1e-10
                assert rep.ok

    def test_precondition_violations(self):
        # joint without X indep Z | Y
        probs = np.zeros((2, 2, 2))
        probs[0, 0, 0] = probs[1, 0, 1] = 0.25
        probs[0, 1, 0] = probs[1, 1, 1] = 0.25
        coupled = JointPMF3(probs)
        with pytest.raises(PreconditionError):
            conditional_law_matching_check(
                coupled, PredictorTable(map=np.zeros((2, 2), dtype=int), card_out=2)
            )
        # unfair predictor on a valid joint
        with pytest.raises(PreconditionError):
            conditional_law_matching_check(
                necessity_fixture(), PredictorTable(map=np.array([[0, 1], [0, 1]]), card_out=2)
            )

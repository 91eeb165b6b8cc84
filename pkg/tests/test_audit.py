"""Audit layer: truthfulness gates, hidden-partition runs, menu geometry,
amplification certificates, scalar inequalities, concentration checks.

Separation results are validated two ways: against a brute-force mixture
grid and against the defining inequalities of each branch.
"""
import math

import numpy as np
import pytest

from symgap.setfn import ItemSet, make_additive, scale_oracle
from symgap.instances import (
    AuctionInstance,
    CPPInstance,
    PhiAlpha,
    make_scaled_symgap_valuation,
    make_symgap_valuation,
)
from symgap.mechanisms import GreedyCPP, RandomSubsetCPP, VCGExhaustiveAuction, PayYourBidGreedyAuction
from symgap.audit import (
    AmplificationState,
    MenuObservation,
    MenuSample,
    amplification_step,
    audit_truthfulness,
    auction_special_closure,
    basic_instance_counting,
    chernoff_bisection_test,
    cpp_allocation_closure,
    DELTA_PAPER,
    extract_menu,
    figure_triple,
    hypothesis_satisfying_distribution,
    map_menu_to_qp,
    mix_menus,
    quadrant_feasible_by_grid,
    run_amplification,
    scalar_inequality_suite,
    scaling_probe,
    separate_quadrant,
    symmetry_gap_experiment,
)


class TestTruthAudit:
    def _auction(self):
        v1 = make_additive([0.6, 0.4, 0.3, 0.2])
        v2 = make_additive([0.5, 0.5, 0.1, 0.4])
        return AuctionInstance((v1, v2))

    def test_vcg_clean(self):
        inst = self._auction()
        devs = [
            (0, make_additive([0.3, 0.2, 0.15, 0.1])),
            (0, make_additive([1.0, 0.8, 0.6, 0.4])),
            (1, make_additive([0.1, 0.9, 0.2, 0.3])),
        ]
        rep = audit_truthfulness(VCGExhaustiveAuction(), inst, devs, trials=50, seed=5)
        assert rep.passed
        assert len(rep.entries) == 3
        for e in rep.entries:
            assert not e.violation
            assert e.gap >= -1e-9

    def test_pay_your_bid_flagged(self):
        big = make_additive([10.0, 10.0])
        small = make_additive([0.5, 0.5])
        inst = AuctionInstance((big, small))
        devs = [(0, make_additive([1.0, 1.0]))]
        rep = audit_truthfulness(PayYourBidGreedyAuction(), inst, devs, trials=50, seed=5)
        assert not rep.passed
        e = rep.entries[0]
        assert e.violation
        # truth: value 20 pay 20 -> 0; shading to (1,1): value 20 pay 2 -> 18
        assert e.gap == pytest.approx(-18.0, abs=1e-9)

    def test_deterministic_reruns(self):
        inst = self._auction()
        devs = [(0, make_additive([0.3, 0.2, 0.15, 0.1]))]
        a = audit_truthfulness(VCGExhaustiveAuction(), inst, devs, trials=20, seed=9)
        b = audit_truthfulness(VCGExhaustiveAuction(), inst, devs, trials=20, seed=9)
        assert a.to_dict() == b.to_dict()

    def test_eps_discounts_deviation_score(self):
        # with eps = 1 the deviation value term vanishes, so even the
        # pay-your-bid shading stops looking profitable on the value side
        big = make_additive([10.0, 10.0])
        small = make_additive([0.5, 0.5])
        inst = AuctionInstance((big, small))
        devs = [(0, make_additive([1.0, 1.0]))]
        rep = audit_truthfulness(
            PayYourBidGreedyAuction(), inst, devs, trials=20, seed=5, eps=1.0
        )
        # truth utility 0 vs deviation -(payment 2) = -2: no violation
        assert rep.passed


class TestSymmetryGapRun:
    def test_small_run_bounds_hold(self):
        rep = symmetry_gap_experiment(
            m=32,
            k=16,
            n=2,
            beta=0.25,
            phi=PhiAlpha(1.0),
            mechanisms=[RandomSubsetCPP(), GreedyCPP()],
            partitions=8,
            seed=21,
        )
        assert rep["passed"]
        assert len(rep["mechanisms"]) == 2
        informed = 0.75  # phi_1(1 - 0.25)
        for stats in rep["mechanisms"]:
            assert stats["ceiling_ok"] and stats["unbalanced_ok"] and stats["planted_ok"]
            assert stats["informed_benchmark"] == pytest.approx(informed)
            assert stats["planted_value"] >= informed - 1e-12
            assert 0.0 <= stats["X_mean"] <= 1.0
            assert stats["queries_total"] > 0

    def test_unbalanced_rate_definition(self):
        rep = symmetry_gap_experiment(
            m=16,
            k=8,
            n=2,
            beta=0.25,
            phi=PhiAlpha(1.0),
            mechanisms=[GreedyCPP()],
            partitions=4,
            seed=3,
        )
        s = rep["mechanisms"][0]
        assert s["unbalanced_rate"] == pytest.approx(
            s["unbalanced_queries"] / s["queries_total"]
        )


class TestMenus:
    def _setup(self):
        m = 6
        A = ItemSet.from_indices([0, 1], m)
        B = ItemSet.from_indices([2, 3], m)
        phi = PhiAlpha(0.5)
        family = [
            make_scaled_symgap_valuation(A, B, phi, 0.25, lam) for lam in (0.5, 1.0)
        ]
        opponent = make_additive([0.0, 0.0, 0.0, 0.0, 0.3, 0.3])
        inst = AuctionInstance((family[1].oracle(), opponent))
        return inst, family

    def test_weights_sum_to_one(self):
        inst, family = self._setup()
        menu = extract_menu(VCGExhaustiveAuction(), inst, 0, family, trials=4, seed=2)
        assert menu.total_weight() == pytest.approx(1.0, abs=1e-12)
        assert len(menu.samples) == len(family) * 4
        for s in menu.samples:
            assert 0.0 <= s.X <= 1.0

    def test_mix_is_convex_in_qp_space(self):
        inst, family = self._setup()
        a = extract_menu(VCGExhaustiveAuction(), inst, 0, family, trials=3, seed=2)
        b = extract_menu(VCGExhaustiveAuction(), inst, 0, family, trials=3, seed=40)
        w = 0.3
        mixed = mix_menus(a, b, w)
        assert mixed.total_weight() == pytest.approx(1.0, abs=1e-12)
        phi = PhiAlpha(0.5)
        for role in ("level_j", "level_j_plus_1"):
            pa = map_menu_to_qp(a, role, phi, eps=0.01, ell=1)
            pb = map_menu_to_qp(b, role, phi, eps=0.01, ell=1)
            pm = map_menu_to_qp(mixed, role, phi, eps=0.01, ell=1)
            for qa, qb, qm in zip(pa, pb, pm):
                assert qm.q == pytest.approx(w * qa.q + (1 - w) * qb.q, abs=1e-12)
                assert qm.p == pytest.approx(w * qa.p + (1 - w) * qb.p, abs=1e-12)

    def test_role_formulas_against_inline_reference(self):
        phi = PhiAlpha(0.5)
        obs = [
            MenuObservation(0.9, 0.2, 0.25, 0),
            MenuObservation(0.4, 0.1, 0.25, 0),
            MenuObservation(0.7, 0.05, 0.5, 1),
        ]
        menu = MenuSample(obs, 2, 1, 0)
        eps, ell = 0.02, 1
        err = 0.1

        def phi_v(t):
            return min(t / 0.5, 1.0) if t > 0 else 0.0

        pts = map_menu_to_qp(menu, "level_j", phi, eps, ell)
        q0_ref = 0.5 * ((1 - eps) * phi_v(0.8) - err) + 0.5 * ((1 - eps) * phi_v(0.3) - err)
        assert pts[0].q == pytest.approx(q0_ref, abs=1e-12)
        assert pts[0].p == pytest.approx(0.15, abs=1e-12)
        assert pts[1].q == pytest.approx((1 - eps) * phi_v(0.6) - err, abs=1e-12)
        pts2 = map_menu_to_qp(menu, "level_j_plus_1", phi, eps, ell)
        q_ref = 0.5 * (1 - (1 - phi_v(0.9)) ** 2) + 0.5 * (1 - (1 - phi_v(0.4)) ** 2)
        assert pts2[0].q == pytest.approx(q_ref, abs=1e-12)

    def test_unknown_role_rejected(self):
        menu = MenuSample([MenuObservation(0.5, 0.1, 1.0, 0)], 1, 1, 0)
        with pytest.raises(ValueError):
            map_menu_to_qp(menu, "level_j_plus_2", PhiAlpha(1.0), 0.0, 1)


class TestSeparation:
    def _check_result(self, points, q0, p0, res):
        if res.branch == "witness":
            assert len(res.indices) <= 2
            assert sum(res.weights) == pytest.approx(1.0, abs=1e-12)
            assert all(w >= -1e-12 for w in res.weights)
            q = sum(w * points[i][0] for i, w in zip(res.indices, res.weights))
            p = sum(w * points[i][1] for i, w in zip(res.indices, res.weights))
            assert q >= q0 - 1e-9
            assert p <= p0 + 1e-9
            assert res.point == pytest.approx((q, p), abs=1e-12)
        else:
            assert res.lam_q >= 0 and res.lam_p >= 0
            assert res.lam_q + res.lam_p > 0
            assert res.margin > 0
            ref = res.lam_q * q0 - res.lam_p * p0
            for q, p in points:
                assert res.lam_q * q - res.lam_p * p < ref - res.margin + 1e-9

    def test_single_point_witness(self):
        pts = [(0.2, 0.9), (0.8, 0.1)]
        res = separate_quadrant(pts, 0.7, 0.2)
        assert res.branch == "witness"
        assert res.indices == (1,)
        self._check_result(pts, 0.7, 0.2, res)

    def test_pair_witness(self):
        # neither point is in the quadrant but their midpoint is
        pts = [(1.0, 0.5), (0.0, -0.5)]
        res = separate_quadrant(pts, 0.4, 0.1)
        assert res.branch == "witness"
        assert len(res.indices) == 2
        self._check_result(pts, 0.4, 0.1, res)

    def test_dominated_points_get_line(self):
        pts = [(0.1, 0.5), (0.3, 0.9), (0.2, 0.7)]
        res = separate_quadrant(pts, 0.5, 0.1)
        assert res.branch == "line"
        self._check_result(pts, 0.5, 0.1, res)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            separate_quadrant([], 0.0, 0.0)

    def test_agrees_with_grid_oracle(self):
        rng = np.random.default_rng(77)
        witness = line = 0
        for _ in range(120):
            n = int(rng.integers(1, 6))
            pts = [tuple(rng.uniform(-1, 1, 2)) for _ in range(n)]
            q0, p0 = rng.uniform(-1, 1, 2)
            res = separate_quadrant(pts, q0, p0)
            feasible = quadrant_feasible_by_grid(pts, q0, p0)
            assert (res.branch == "witness") == feasible
            self._check_result(pts, q0, p0, res)
            witness += res.branch == "witness"
            line += res.branch == "line"
        assert witness > 10 and line > 10


class TestAmplification:
    def test_case1_arithmetic(self):
        st = AmplificationState(0, 1.0, 0.5, 0.05)
        xs = np.array([0.9, 0.6])
        ws = np.array([0.5, 0.5])
        # both atoms above sqrt(0.05) ~ 0.2236: tail 1 > 2*0.05*0.5
        nxt, cert = amplification_step(st, xs, ws)
        assert cert.case == 1
        assert cert.tail_probability == pytest.approx(1.0)
        alpha_next = 0.5 * 1.05
        assert nxt.alpha == pytest.approx(alpha_next)
        xi_ref = 0.5 * min(0.9 / alpha_next, 1.0) + 0.5 * min(0.6 / alpha_next, 1.0)
        assert nxt.xi == pytest.approx(xi_ref, abs=1e-12)
        assert cert.lhs == pytest.approx(nxt.alpha * nxt.xi**1.05, abs=1e-12)
        assert cert.rhs == pytest.approx(0.5 * (1 + 0.05**2) * 1.0 * 0.5**1.05, abs=1e-12)
        assert nxt.j == 1

    def test_case2_arithmetic(self):
        delta = 0.05
        st = AmplificationState(2, 0.8, 0.4, delta)
        xs = np.array([0.1, 0.05])  # below sqrt(delta) * alpha ~ 0.179
        nxt, cert = amplification_step(st, xs)
        assert cert.case == 2
        assert cert.tail_probability == 0.0
        assert nxt.alpha == pytest.approx(math.sqrt(delta) * 0.8)
        xi_ref = 0.5 * min(0.1 / nxt.alpha, 1.0) + 0.5 * min(0.05 / nxt.alpha, 1.0)
        assert nxt.xi == pytest.approx(xi_ref, abs=1e-12)

    def test_quad_and_hypothesis_fields(self):
        st = AmplificationState(0, 1.0, 0.3, 0.05)
        xs, ws = np.array([0.5]), np.array([1.0])
        _, cert = amplification_step(st, xs, ws)
        assert cert.quad_value == pytest.approx(1 - (1 - 0.5) ** 2)
        assert cert.hypothesis_satisfied  # 0.75 >= (1 - 2 eps) 0.3
        assert cert.holds is not None

    def test_vacuous_when_hypothesis_fails(self):
        st = AmplificationState(0, 1.0, 0.9, 0.05)
        xs, ws = np.array([0.01]), np.array([1.0])
        _, cert = amplification_step(st, xs, ws)
        assert not cert.hypothesis_satisfied
        assert cert.holds is None

    def test_weights_must_sum_to_one(self):
        st = AmplificationState(0, 1.0, 0.5, 0.05)
        with pytest.raises(ValueError):
            amplification_step(st, [0.5, 0.6], [0.7, 0.7])

    def test_certificates_hold_on_hypothesis_distributions(self):
        rng = np.random.default_rng(123)
        for delta in (DELTA_PAPER, 0.05):
            state = AmplificationState(0, 1.0, 0.6, delta)
            for _ in range(150):
                xs, ws = hypothesis_satisfying_distribution(state, rng)
                _, cert = amplification_step(state, xs, ws)
                assert cert.hypothesis_satisfied
                assert cert.holds

    def test_run_chains_and_telescopes(self):
        rep = run_amplification(ell=4, delta=0.05, c=0.7, seed=11)
        assert rep["passed"]
        assert rep["telescoping_ok"] and rep["feasibility_floor_ok"]
        assert len(rep["certificates"]) == 4
        target = (0.5 * (1 + 0.05**2)) ** 4 * 0.7**1.05
        assert rep["telescoped_target"] == pytest.approx(target, abs=1e-15)
        assert rep["potential"] >= target * (1 - 1e-9)
        assert rep["final_state"]["j"] == 4

    def test_paper_profile_label(self):
        st = AmplificationState(0, 1.0, 0.5, DELTA_PAPER)
        assert st.profile == "paper"
        assert st.eps == pytest.approx(DELTA_PAPER**4)
        assert AmplificationState(0, 1.0, 0.5, 0.05).profile == "non_paper"

    def test_c_validated(self):
        with pytest.raises(ValueError):
            run_amplification(2, 0.05, 0.0, 1)
        with pytest.raises(ValueError):
            run_amplification(2, 0.05, 1.5, 1)


class TestScalarInequalities:
    def test_suite_passes(self):
        rep = scalar_inequality_suite(grid=20_000)
        assert rep["passed"]
        names = [r["name"] for r in rep["records"]]
        assert names[:3] == ["pow_delta", "case2_chain", "case1_chain"]
        assert len(names) == 5
        for r in rep["records"]:
            assert r["worst_margin"] >= -1e-12
        for b in rep["boundary_equalities"].values():
            assert b["equality_ok"]

    def test_random_spot_checks(self):
        # recompute each inequality with a different float arrangement
        rng = np.random.default_rng(5)
        for d in rng.uniform(1e-12, 1.0, 200):
            assert math.exp(d * math.log1p(d)) <= 1.0 + d * d + 1e-12
        for d in rng.uniform(0.0, 0.25, 200):
            base = 1.0 - 4.0 * d + 2.0 * d**1.5
            assert base ** (1.0 + d) >= 1.0 - 4.0 * d - 1e-12
        for d in rng.uniform(0.0, 0.5, 200):
            base = 1.0 + 2.0 * d * d - 2.0 * d**4
            assert base ** (1.0 + d) >= 1.0 + 2.0 * d * d + d**4 - 1e-12
        delta = 0.05
        for t in rng.uniform(math.sqrt(delta), 1.5, 200):
            lhs = min(2.0 * t, 1.0 + delta)
            rhs = 1.0 - (1.0 - min(t, 1.0)) ** 2 + delta
            assert lhs >= rhs - 1e-12

    def test_figure_triple_shape(self):
        rows = figure_triple(0.05, points=301)
        assert len(rows) == 301
        assert rows[0] == (0.0, 0.0, 0.05, 0.0)
        for t, ramp, shifted, quad in rows:
            assert shifted == pytest.approx(quad + 0.05, abs=1e-15)
            assert ramp == pytest.approx(min(2 * t, 1.05), abs=1e-15)
        assert rows[-1][0] == pytest.approx(1.5)


class TestConcentration:
    def test_chernoff_small(self):
        rep = chernoff_bisection_test(100, 0.2, trials=20_000, seed=4)
        assert rep["passed"]
        assert rep["bound"] == pytest.approx(4 * math.exp(-0.04 * 100 / 2))
        assert 0.0 <= rep["empirical_tail"] <= 1.0

    def test_chernoff_odd_rejected(self):
        with pytest.raises(ValueError):
            chernoff_bisection_test(101, 0.1, 10, 0)

    def test_counting_small(self):
        rep = basic_instance_counting(2, 4, trials=30_000, seed=6)
        assert rep["passed"]
        assert rep["expected"] == pytest.approx(3.0)
        assert abs(rep["empirical_mean"] - 3.0) <= 3 * rep["stderr"] + 1e-9

    def test_counting_divisibility(self):
        with pytest.raises(ValueError):
            basic_instance_counting(3, 4, 10, 0)


class TestScalingProbe:
    def test_greedy_cpp_scale_invariant(self):
        oracle = make_additive([0.5, 0.4, 0.3, 0.2, 0.1])
        closure = cpp_allocation_closure(GreedyCPP(), 2)
        wm = [
            (scale_oracle(oracle, 0.5), oracle),
            (make_additive([0.1, 0.2, 0.3, 0.4, 0.5]), oracle),
        ]
        rep = scaling_probe(
            closure, oracle, schedule=[0.5, 1.0, 2.0], trials=8, seed=9, wm_pairs=wm
        )
        assert rep["passed"]
        # greedy picks the same top-2 items at every scale
        vals = [t["value"] for t in rep["trace"]]
        assert max(vals) - min(vals) <= 1e-12
        assert len(rep["weak_monotonicity"]) == 2

    def test_auction_closure_traces_special_player(self):
        special = make_additive([0.6, 0.5, 0.1, 0.1])
        other = make_additive([0.2, 0.2, 0.4, 0.4])
        closure = auction_special_closure(VCGExhaustiveAuction(), [other], 0)
        rep = scaling_probe(closure, special, schedule=[0.25, 1.0, 4.0], trials=6, seed=3)
        assert rep["envelope_ok"]
        assert rep["trace"][1]["value"] == pytest.approx(1.1)

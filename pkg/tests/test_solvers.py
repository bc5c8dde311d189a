import math

import numpy as np
import pytest

import oracles as orc
from l0spline import (
    BudgetExceededError,
    KnotVector,
    ModelParams,
    ValidationError,
    check_membership,
    evaluate_spline,
    iter_knot_vectors,
    raw_basis,
)
from l0spline.solvers import (
    FitResult,
    PenaltySpec,
    adaptive_fit,
    default_k_max,
    dp_fit,
    estimate_sigma,
    exhaustive_fit,
    fit_given_knots,
    penalty,
    segment_cost,
)


class TestSegmentCost:
    def test_mean_fit(self):
        sse, coef = segment_cost([1, 2, 3], 0)
        assert sse == pytest.approx(2.0)
        np.testing.assert_allclose(coef, [2.0])

    def test_collinear_is_exact(self):
        y = 0.5 * np.arange(1, 8) - 2.0
        sse, _ = segment_cost(y, 1)
        assert sse == pytest.approx(0.0, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            segment_cost([1.0, 2.0], 2)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(99)
        y = rng.standard_normal(9)
        sse, _ = segment_cost(y, 2)
        o_sse, _ = orc.segment_poly_fit(y, 0, 9, 2, 9)
        assert sse == pytest.approx(o_sse, abs=1e-9)


class TestFitGivenKnots:
    def test_noiseless_interpolation(self):
        rng = np.random.default_rng(5)
        knots = (0, 4, 8)
        X = orc.truncated_power_design(8, 1, 0, knots)
        theta0 = X @ rng.standard_normal(3)
        p = ModelParams(d=1, d0=0, k=2, n=8)
        fr = fit_given_knots(theta0, p, knots)
        assert fr.sse == pytest.approx(0.0, abs=1e-18)
        np.testing.assert_allclose(fr.theta_hat.values, theta0, atol=1e-9)

    def test_decoupling_matches_segment_costs(self):
        rng = np.random.default_rng(6)
        y = rng.standard_normal(10)
        p = ModelParams(d=1, d0=-1, k=2, n=10)
        fr = fit_given_knots(y, p, (0, 4, 10))
        s1, _ = segment_cost(y[:4], 1)
        s2, _ = segment_cost(y[4:], 1)
        assert fr.sse == pytest.approx(s1 + s2, abs=1e-10)

    def test_matches_dense_constrained_solve(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal(6)
        p = ModelParams(d=1, d0=0, k=2, n=6)
        fr = fit_given_knots(y, p, (0, 3, 6))
        X = orc.truncated_power_design(6, 1, 0, (0, 3, 6))
        _, o_sse = orc.ls_fit(X, y)
        assert fr.sse == pytest.approx(o_sse, abs=1e-9)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            d = int(rng.integers(0, 3))
            d0 = int(rng.integers(-1, d))
            n = 12
            knots = (0, 6, 12)
            y = rng.standard_normal(n)
            p = ModelParams(d=d, d0=d0, k=2, n=n)
            fr = fit_given_knots(y, p, knots)
            X = raw_basis(n, d, d0, knots)
            resid = y - fr.theta_hat.values
            assert np.max(np.abs(X.T @ resid)) < 1e-7 * np.linalg.norm(y)

    def test_piece_count_mismatch(self):
        p = ModelParams(d=0, d0=-1, k=3, n=6)
        with pytest.raises(ValidationError):
            fit_given_knots(np.zeros(6), p, (0, 3, 6))

    def test_empty_pieces_carry_none(self):
        y = np.arange(6.0)
        p = ModelParams(d=0, d0=-1, k=3, n=6)
        fr = fit_given_knots(y, p, (0, 3, 3, 6))
        assert fr.coeffs[1] is None
        assert fr.coeffs[0] is not None


class TestDpFit:
    def test_step_recovery(self):
        y = np.array([0, 0, 0, 5, 5, 5], float)
        fr = dp_fit(y, ModelParams(d=0, d0=-1, k=2, n=6))
        assert fr.knots.knots == (0, 3, 6)
        assert fr.sse == pytest.approx(0.0, abs=1e-18)

    def test_single_piece_equals_segment_cost(self):
        rng = np.random.default_rng(10)
        y = rng.standard_normal(15)
        fr = dp_fit(y, ModelParams(d=1, d0=-1, k=1, n=15))
        sse, _ = segment_cost(y, 1)
        assert fr.sse == pytest.approx(sse, abs=1e-9)

    def test_matches_exhaustive_on_random_instances(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            n = int(rng.integers(6, 21))
            d = int(rng.integers(0, 2))
            k = int(rng.integers(1, 4))
            y = rng.standard_normal(n)
            p = ModelParams(d=d, d0=-1, k=k, n=n)
            f1 = dp_fit(y, p)
            f2 = exhaustive_fit(y, p)
            assert f1.sse == pytest.approx(f2.sse, abs=1e-9)

    def test_matches_brute_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            n = int(rng.integers(8, 16))
            y = rng.standard_normal(n)
            p = ModelParams(d=0, d0=-1, k=3, n=n)
            fr = dp_fit(y, p)
            o_sse, o_knots = orc.brute_force_best_fit(y, 0, -1, 3)
            assert fr.sse == pytest.approx(o_sse, abs=1e-9)

    def test_lex_tie_break_prefers_leading_empties(self):
        y = np.zeros(8)
        fr = dp_fit(y, ModelParams(d=0, d0=-1, k=3, n=8))
        assert fr.knots.knots == (0, 0, 0, 8)

    def test_requires_discontinuous_class(self):
        with pytest.raises(ValidationError):
            dp_fit(np.zeros(6), ModelParams(d=0, d0=0, k=2, n=6))


class TestExhaustiveFit:
    def test_budget_refusal_reports_count(self):
        from l0spline import count_knot_vectors

        p = ModelParams(d=0, d0=-1, k=4, n=60)
        with pytest.raises(BudgetExceededError) as exc:
            exhaustive_fit(np.zeros(60), p, budget=100)
        assert str(count_knot_vectors(60, 4, 0)) in str(exc.value)

    def test_best_single_split_scan(self):
        rng = np.random.default_rng(15)
        y = rng.standard_normal(12)
        p = ModelParams(d=0, d0=-1, k=2, n=12)
        fr = exhaustive_fit(y, p)
        best = np.inf
        for m in range(0, 13):
            sse = 0.0
            for seg in (y[:m], y[m:]):
                if seg.size:
                    sse += float(np.sum((seg - seg.mean()) ** 2))
            best = min(best, sse)
        assert fr.sse == pytest.approx(best, abs=1e-9)

    def test_nested_classes_decrease_sse(self):
        rng = np.random.default_rng(16)
        y = rng.standard_normal(10)
        sses = []
        for k in (1, 2, 3):
            p = ModelParams(d=0, d0=-1, k=k, n=10)
            sses.append(exhaustive_fit(y, p).sse)
        assert sses[0] >= sses[1] - 1e-12 >= sses[2] - 2e-12

    def test_lex_tie_break(self):
        y = np.zeros(8)
        fr = exhaustive_fit(y, ModelParams(d=0, d0=-1, k=3, n=8))
        assert fr.knots.knots == (0, 0, 0, 8)

    def test_smooth_classes_against_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n = int(rng.integers(8, 14))
            d = int(rng.integers(1, 3))
            d0 = int(rng.integers(0, d))
            k = int(rng.integers(2, 4))
            y = rng.standard_normal(n)
            p = ModelParams(d=d, d0=d0, k=k, n=n)
            fr = exhaustive_fit(y, p)
            o_sse, _ = orc.brute_force_best_fit(y, d, d0, k)
            assert fr.sse == pytest.approx(o_sse, abs=1e-9)


class TestPenalty:
    def test_single_piece(self):
        spec = PenaltySpec(tau=2.5, sigma=1.5, d=0, d0=-1, n=64)
        assert penalty(1, spec) == pytest.approx(2.5 * 1.5 ** 2)

    def test_iterated_log_regime(self):
        spec = PenaltySpec(tau=1.0, sigma=1.0, d=0, d0=-1, n=64)
        assert penalty(2, spec) == pytest.approx(
            2 * math.log(math.log(8 * 64)))

    def test_log_regime_above_boundary(self):
        spec = PenaltySpec(tau=1.0, sigma=2.0, d=0, d0=-1, n=64)
        k0 = 2
        expect = 4.0 * (k0 + 1) * math.log(math.e * 64 / (k0 + 1))
        assert penalty(k0 + 1, spec) == pytest.approx(expect)

    def test_positive_for_all_k(self):
        spec = PenaltySpec(tau=0.7, sigma=0.3, d=3, d0=1, n=256)
        assert all(penalty(k, spec) > 0 for k in range(1, 257))

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            PenaltySpec(tau=-1.0, sigma=1.0, d=0, d0=-1, n=16)
        with pytest.raises(ValidationError):
            PenaltySpec(tau=1.0, sigma=0.0, d=0, d0=-1, n=16)
        with pytest.raises(ValidationError):
            penalty(0, PenaltySpec(tau=1.0, sigma=1.0, d=0, d0=-1, n=16))


class TestAdaptiveFit:
    def test_huge_tau_selects_one_piece(self):
        rng = np.random.default_rng(18)
        y = np.concatenate([np.zeros(8), np.ones(8)]) \
            + 0.01 * rng.standard_normal(16)
        p = ModelParams(d=0, d0=-1, k=1, n=16)
        spec = PenaltySpec(tau=1e9, sigma=1.0, d=0, d0=-1, n=16)
        fr = adaptive_fit(y, p, spec)
        assert fr.k_selected == 1

    def test_zero_tau_ties_to_smallest_k(self):
        theta0 = np.repeat([1.0, 4.0], 5)
        p = ModelParams(d=0, d0=-1, k=1, n=10)
        spec = PenaltySpec(tau=0.0, sigma=1.0, d=0, d0=-1, n=10)
        fr = adaptive_fit(theta0, p, spec, k_max=4)
        assert fr.k_selected == 2
        assert fr.sse == pytest.approx(0.0, abs=1e-18)

    def test_objective_minimal_at_selection(self):
        rng = np.random.default_rng(20)
        y = rng.standard_normal(24)
        p = ModelParams(d=0, d0=-1, k=1, n=24)
        spec = PenaltySpec(tau=2.5, sigma=1.0, d=0, d0=-1, n=24)
        fr, trace = adaptive_fit(y, p, spec, with_trace=True)
        objs = {k: obj for k, sse, pen, obj in trace}
        assert min(objs, key=objs.get) == fr.k_selected
        assert objs[fr.k_selected] == min(objs.values())

    def test_default_k_max(self):
        assert default_k_max(ModelParams(d=0, d0=-1, k=1, n=256)) == 5
        assert default_k_max(ModelParams(d=3, d0=2, k=1, n=12)) == 3

    def test_jump_detection_rate(self):
        """Two-piece step of size 10 sigma is found in at least 95 percent
        of 200 seeded replicates under the default multiplier."""
        n, sigma, tau = 256, 1.0, 2.5
        theta0 = np.concatenate([np.zeros(n // 2), np.full(n // 2, 10.0)])
        p = ModelParams(d=0, d0=-1, k=1, n=n, sigma=sigma)
        spec = PenaltySpec(tau=tau, sigma=sigma, d=0, d0=-1, n=n)
        hits = 0
        for rep in range(200):
            rng = np.random.Generator(np.random.Philox(key=[1234, rep]))
            y = theta0 + sigma * rng.standard_normal(n)
            fr = adaptive_fit(y, p, spec)
            hits += fr.k_selected == 2
        assert hits >= 190

    def test_dp_solver_rejected_for_smooth_classes(self):
        p = ModelParams(d=1, d0=0, k=1, n=8)
        spec = PenaltySpec(tau=1.0, sigma=1.0, d=1, d0=0, n=8)
        with pytest.raises(ValidationError):
            adaptive_fit(np.zeros(8), p, spec, solver="dp")


class TestFitResultInvariants:
    def test_sse_recomputable(self):
        rng = np.random.default_rng(22)
        y = rng.standard_normal(12)
        p = ModelParams(d=1, d0=-1, k=2, n=12)
        fr = dp_fit(y, p)
        recomputed = float(np.sum((y - fr.theta_hat.values) ** 2))
        assert fr.sse == pytest.approx(recomputed, rel=1e-9)

    def test_fit_is_class_member(self):
        rng = np.random.default_rng(23)
        y = rng.standard_normal(10)
        p = ModelParams(d=0, d0=-1, k=2, n=10)
        fr = dp_fit(y, p)
        ok, _ = check_membership(fr.theta_hat.values, p, tol=1e-7)
        assert ok

    def test_spline_property_round_trips(self):
        rng = np.random.default_rng(24)
        y = rng.standard_normal(9)
        p = ModelParams(d=2, d0=1, k=2, n=9)
        fr = exhaustive_fit(y, p)
        np.testing.assert_allclose(evaluate_spline(fr.spline),
                                   fr.theta_hat.values, atol=1e-10)


def test_estimate_sigma_recovers_scale():
    rng = np.random.default_rng(25)
    y = 3.0 + 2.0 * rng.standard_normal(4000)
    assert estimate_sigma(y) == pytest.approx(2.0, rel=0.1)


def test_estimate_sigma_ignores_sparse_jumps():
    rng = np.random.default_rng(26)
    theta = np.concatenate([np.zeros(500), np.full(500, 50.0)])
    y = theta + 1.0 * rng.standard_normal(1000)
    assert estimate_sigma(y) == pytest.approx(1.0, rel=0.15)

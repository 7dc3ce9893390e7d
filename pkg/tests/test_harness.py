import math
from fractions import Fraction

import pytest

from opte.constructions import build_advice_argmin_estimator, build_erm_estimator, zoo_make
from opte.core import (
    ConditionalEnsemble,
    EstimationProblem,
    ExplicitEnsemble,
    FnEstimator,
    IndexK,
    NativeConstEstimator,
    Sampler,
    conditional_expectation_estimator,
    exact_sq_error,
)
from opte.harness import (
    ProgramClass,
    calibration_report,
    constant_grid,
    counterfactual_uniqueness,
    extract_decider,
    fiber_indicator_tests,
    optimality_gap,
    orthogonality_residual,
    regret_curve,
    residual_bound_from_gap,
    uniqueness_distance,
    RegretCurve,
)
from opte.rng import RngStream

K = IndexK(4, 30)
C = NativeConstEstimator


def fair_coin():
    return zoo_make("fair_coin", n=2, k0s=(4,))


# --- calibration ----------------------------------------------------------------


def test_calibration_constant_half_on_fair_coin():
    entry = fair_coin()
    rep = calibration_report(
        C(Fraction(1, 2), bound=Fraction(1)), entry.problem, K,
        [(-1.0, 0.4), (0.4, 0.6), (0.6, 1.0)],
    )
    mid = rep.buckets[1]
    assert mid.alpha == pytest.approx(1.0, abs=1e-12)
    assert mid.mean == pytest.approx(0.5, abs=1e-12)
    assert mid.passed
    assert not rep.buckets[0].evaluated and not rep.buckets[2].evaluated
    assert rep.passed


def test_calibration_oracle_every_occupied_bucket():
    entry = zoo_make("first_bit", k0s=(4,))
    oracle = conditional_expectation_estimator(entry.problem, lambda w: w)
    rep = calibration_report(oracle, entry.problem, K,
                             [(-1.0, 0.25), (0.25, 0.75), (0.75, 1.0)])
    for b in rep.buckets:
        if b.evaluated:
            assert b.lo <= b.mean <= b.hi  # P = f pointwise: mean inside exactly
            assert b.eps_hat <= 1e-15
    assert rep.passed


def test_calibration_bucket_validation():
    entry = fair_coin()
    with pytest.raises(ValueError):
        calibration_report(C(Fraction(1, 2)), entry.problem, K, [(0.0, 0.4)])


def test_calibration_mc_mode_reproducible():
    entry = fair_coin()
    args = (C(Fraction(1, 2), bound=Fraction(1)), entry.problem, K,
            [(-1.0, 0.4), (0.4, 0.6), (0.6, 1.0)])
    a = calibration_report(*args, mode="mc", n=300, rng=RngStream(5, ("c",)), stat_tol=0.05)
    b = calibration_report(*args, mode="mc", n=300, rng=RngStream(5, ("c",)), stat_tol=0.05)
    assert [x.mean for x in a.buckets] == [x.mean for x in b.buckets]


# --- orthogonality ----------------------------------------------------------------


def test_orthogonality_examples():
    entry = fair_coin()
    prob = entry.problem
    rep = orthogonality_residual(C(Fraction(1, 2)), prob, K, [("one", lambda w, v: 1.0)])
    assert abs(rep.rows[0][1]) <= 1e-15

    pm = EstimationProblem(ExplicitEnsemble({4: [("0", 1.0)]}), lambda x: Fraction(1), Fraction(1))
    rep = orthogonality_residual(C(Fraction(0), bound=Fraction(1)), pm, K,
                                 [("one", lambda w, v: 1.0)])
    assert rep.rows[0][1] == pytest.approx(-1.0, abs=1e-15)
    assert rep.max_residual == pytest.approx(1.0, abs=1e-15)


def test_oracle_orthogonal_to_fiber_indicators():
    entry = zoo_make("first_bit", k0s=(4,))
    m = lambda w: w[0]
    oracle = conditional_expectation_estimator(entry.problem, m)
    tests = fiber_indicator_tests(m, ["0", "1"])
    rep = orthogonality_residual(oracle, entry.problem, K, tests)
    assert rep.max_residual <= 1e-12


# --- optimality gap ---------------------------------------------------------------


def test_gap_advice_argmin_nonpositive():
    entry = fair_coin()
    est = build_advice_argmin_estimator(entry.problem)
    rep = optimality_gap(est, entry.problem, K, ProgramClass(max_code_bits=5))
    assert rep.gap <= 1e-15


def test_gap_constant_grid():
    entry = fair_coin()
    rep = optimality_gap(C(Fraction(1, 2), bound=Fraction(1)), entry.problem, K,
                         constant_grid(Fraction(1, 20), Fraction(1)))
    assert abs(rep.gap) <= (1 / 20) ** 2 + 1e-12


def test_gap_positive_for_bad_estimator():
    pm = EstimationProblem(ExplicitEnsemble({4: [("0", 1.0)]}), lambda x: Fraction(1), Fraction(1))
    rep = optimality_gap(C(Fraction(0), bound=Fraction(1)), pm, K, ProgramClass(4))
    assert rep.gap == pytest.approx(1.0, abs=1e-12)
    assert rep.best_error == 0.0  # EMIT1-equivalent program nails f == 1


# --- residual bound ---------------------------------------------------------------


def test_residual_bound_oracle_case():
    entry = fair_coin()
    oracle = conditional_expectation_estimator(entry.problem, lambda w: w)
    rep = residual_bound_from_gap(oracle, entry.problem, K, lambda w, v: 1.0, 1.0)
    assert rep.consistent
    assert rep.bound <= 0.5 * (1.0 * (1 / 2) + 0.0) + 1e-12  # min_t t * supS^2 / 2


def test_residual_bound_zero_test_function():
    entry = fair_coin()
    rep = residual_bound_from_gap(C(Fraction(1, 2)), entry.problem, K,
                                  lambda w, v: 0.0, 0.0)
    assert rep.bound <= 1e-12 and abs(rep.residual) <= 1e-15


def test_residual_bound_consistency_fuzz():
    entry = zoo_make("first_bit", k0s=(4,))
    prob = entry.problem
    rng = RngStream(11, ("fuzz",))
    for trial in range(25):
        c = Fraction(rng.randint(21) - 10, 10)
        P = C(c, bound=Fraction(1))
        which = rng.randint(3)
        S = [lambda w, v: 1.0,
             lambda w, v: v,
             lambda w, v: 1.0 if w and w[0] == "1" else -1.0][which]
        rep = residual_bound_from_gap(P, prob, K, S, 1.0)
        assert abs(rep.residual) <= rep.bound + 1e-9


# --- uniqueness --------------------------------------------------------------------


def test_uniqueness_examples():
    entry = fair_coin()
    e = entry.problem.ensemble
    assert uniqueness_distance(C(Fraction(1, 3)), C(Fraction(1, 3)), e, K) == 0.0
    assert uniqueness_distance(C(Fraction(0), bound=Fraction(1)),
                               C(Fraction(1)), e, K) == 1.0


def test_uniqueness_mc_close_to_exact():
    entry = fair_coin()
    e = entry.problem.ensemble
    P = conditional_expectation_estimator(entry.problem, lambda w: w[0])
    Q = C(Fraction(1, 2), bound=Fraction(1))
    exact = uniqueness_distance(P, Q, e, K)
    mc = uniqueness_distance(P, Q, e, K, mode="mc", n=500, rng=RngStream(3))
    assert abs(exact - mc) <= 0.05


def test_counterfactual_uniqueness_equal_estimators():
    entry = zoo_make("first_bit", k0s=(4,))
    e = entry.problem.ensemble
    L = lambda w: w[0] == "1"
    R_L = C(Fraction(1, 2), bound=Fraction(1))
    rep = counterfactual_uniqueness(C(Fraction(1, 4)), C(Fraction(1, 4)), R_L, 0.5, e, K, L)
    assert rep.precondition_ok and rep.full_distance == 0.0 and rep.passed


def test_counterfactual_precondition_flagged():
    entry = zoo_make("first_bit", k0s=(4,))
    e = entry.problem.ensemble
    rep = counterfactual_uniqueness(
        C(Fraction(0), bound=Fraction(1)), C(Fraction(1)), C(Fraction(0), bound=Fraction(1)),
        0.5, e, K, lambda w: True,
    )
    assert not rep.precondition_ok and rep.passed is None


def test_counterfactual_two_empirical_oracles():
    # Conditional estimators fit on two different samplings stay close.
    entry = zoo_make("first_bit", k0s=(4,))
    prob = entry.problem
    e = prob.ensemble
    L = lambda w: w[1] == "1"
    m = lambda w: w[0]

    def empirical_oracle(seed):
        root = RngStream(seed, ("fit",))
        sums, cnts = {}, {}
        for i in range(4000):
            x = e.sample(K, root.child(i))
            key = m(x)
            sums[key] = sums.get(key, Fraction(0)) + prob.f(x)
            cnts[key] = cnts.get(key, 0) + 1
        table = {k: sums[k] / cnts[k] for k in sums}
        return FnEstimator(lambda Kk, x, c: table.get(m(x), Fraction(0)),
                           bound=Fraction(1), name=f"emp{seed}")

    P, Q = empirical_oracle(1), empirical_oracle(2)
    chi = EstimationProblem(e, lambda x: Fraction(1 if L(x) else 0), Fraction(1))
    R_L = conditional_expectation_estimator(chi, lambda w: "")
    rep = counterfactual_uniqueness(P, Q, R_L, 0.9, e, K, L, slack=0.01)
    assert rep.precondition_ok
    assert rep.full_distance <= 0.01


# --- decider extraction -------------------------------------------------------------


def tally_setup(truth):
    entry = zoo_make("tally", table={4} if truth else set(), k0s=(4,))
    return entry.problem, entry.sampler


def test_decider_exact_constant():
    prob, s = tally_setup(1)
    decide, rep = extract_decider(s, C(Fraction(1)), K, prob, 200, RngStream(0))
    assert rep.failure_rate == 0.0 and rep.passed and rep.truth == 1


def test_decider_half_convention():
    prob, s = tally_setup(1)  # truth 1, but P = 1/2 decides 0
    decide, rep = extract_decider(s, C(Fraction(1, 2), bound=Fraction(1)), K, prob,
                                  100, RngStream(0))
    assert rep.failure_rate == 1.0
    assert rep.bound >= 1.0  # 4 * 1/4 = 1
    assert rep.passed


def test_decider_noisy_estimator():
    prob, s = tally_setup(1)

    def noisy(Kk, x, coins):
        # wrong side with probability 1/16 (all four coin bits one)
        return Fraction(0) if coins == "1111" else Fraction(1)

    P = FnEstimator(noisy, bound=Fraction(1), rand_bits=4, name="noisy")
    decide, rep = extract_decider(s, P, K, prob, 1000, RngStream(7))
    assert rep.err_hat == pytest.approx(1 / 16, abs=1e-12)
    assert rep.failure_rate <= 4 * rep.err_hat + rep.tv_residual + 3 * rep.sigma
    assert rep.passed


def test_decider_rejects_non_tally():
    entry = zoo_make("first_bit", k0s=(4,))
    with pytest.raises(ValueError):
        extract_decider(entry.sampler, C(Fraction(1, 2)), K, entry.problem, 10, RngStream(0))


# --- regret curves -----------------------------------------------------------------


def test_regret_partial_sums_zero():
    curve = RegretCurve(4, [(k, 0.0) for k in range(2, 6)])
    assert all(s == 0.0 for _, s in curve.partial_sums())


def test_regret_synthetic_unit_terms():
    curve = RegretCurve(4, [(k, k * math.log2(k)) for k in range(2, 6)])
    sums = dict(curve.partial_sums())
    assert sums[5] == pytest.approx(4.0, abs=1e-12)


def test_regret_monotonized_sups():
    curve = RegretCurve(4, [(2, 0.5), (3, 1.0), (4, 0.25)])
    mono = curve.partial_sums(monotonized=True)
    raw = curve.partial_sums()
    assert mono[-1][1] >= raw[-1][1]


def test_regret_curve_on_constant_problem():
    e = ExplicitEnsemble({4: [("0", 1.0)]})
    prob = EstimationProblem(e, lambda x: Fraction(1), Fraction(1))
    est = build_advice_argmin_estimator(prob)
    curve = regret_curve(
        lambda Kk: est, prob, 4, list(range(2, 20)),
        lambda Kk: ProgramClass(max_code_bits=min((Kk.k1 + 2).bit_length() - 1, 16)),
    )
    # Zero-risk program "111" enters the class at l >= 3 (K1 >= 6); the
    # argmin matches the class optimum everywhere, so all regrets are 0.
    assert all(abs(r) <= 1e-15 for _, r in curve.rows)
    assert curve.fitted_bound_constant() == 0.0


def test_orthogonality_implies_optimality_identity():
    # Direct computation of E[(P-f)^2] <= E[(Q-f)^2] + 2 E[(P-Q)(P-f)] on an
    # explicit instance, and the induced gap bound from difference tests.
    entry = zoo_make("first_bit", k0s=(4,))
    prob = entry.problem
    P = conditional_expectation_estimator(prob, lambda w: w[:1])
    err_p = exact_sq_error(P, prob, K)
    table = prob.ensemble.support_table(K)
    value_range = 2.0  # targets and estimators live in [-1, 1]
    competitors = constant_grid(Fraction(1, 10), Fraction(1))
    rho = 0.0
    for Q in competitors:
        err_q = exact_sq_error(Q, prob, K)
        cross = math.fsum(
            p * (float(P.evaluate(K, w, "")) - float(Q.evaluate(K, w, "")))
            * (float(P.evaluate(K, w, "")) - float(prob.f(w)))
            for w, p in table
        )
        assert err_p <= err_q + 2 * cross + 1e-12
        # rho: residual against the difference test S = P - Q (bounded by range).
        S = lambda w, v, QQ=Q: float(P.evaluate(K, w, "")) - float(QQ.evaluate(K, w, ""))
        resid = orthogonality_residual(P, prob, K, [("diff", S)]).rows[0][1]
        rho = max(rho, abs(resid))
    gap = optimality_gap(P, prob, K, competitors).gap
    assert gap <= 2 * rho * value_range + 1e-12


def test_regret_curve_erm_first_bit_spot():
    entry = zoo_make("first_bit", k0s=(8,))
    erm = build_erm_estimator(entry.sampler, bound_M=Fraction(1), selection_seed=4)
    curve = regret_curve(
        lambda Kk: erm, entry.problem, 8, [510, 1022],
        lambda Kk: ProgramClass(max_code_bits=(Kk.k1 + 2).bit_length() - 1),
    )
    regs = dict(curve.rows)
    # At l = 9 the class optimum is the constant 1/2; the ERM matches it.
    assert abs(regs[510]) <= 1e-12
    # At l = 10 the copy program enters the class and the ERM finds it.
    assert abs(regs[1022]) <= 1e-12
    sums = curve.partial_sums()
    assert sums[-1][1] <= 1e-12

"""Statistical verification suites over estimators and problems.

Exact mode enumerates support and coin distributions; Monte-Carlo mode
derives every draw from a seeded stream so reports are reproducible.
Pass/fail conventions: Monte-Carlo checks allow three standard errors
plus any declared analytic slack; exact checks use declared thresholds
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .codec import Word
from .core import (
    EstimationProblem,
    Estimator,
    IndexK,
    Sampler,
    SamplerEnsemble,
    WordEnsemble,
    as_index,
    eval_estimator,
    exact_sq_error,
    tv_distance_tables,
)
from .constructions import collapse_problem_by_view, program_true_error
from .rng import RngStream
from .vm import enumerate_programs


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


@dataclass
class CalibrationBucket:
    lo: float
    hi: float
    alpha: float
    mean: Optional[float]
    eps_hat: float
    bound: float
    evaluated: bool
    passed: Optional[bool]


@dataclass
class CalibrationReport:
    buckets: List[CalibrationBucket]
    mode: str

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.buckets if b.evaluated)


def _validate_buckets(buckets: Sequence[Tuple[float, float]], bound_M: float) -> None:
    bs = sorted(buckets)
    if not bs:
        raise ValueError("need at least one bucket")
    if bs[0][0] > -bound_M + 1e-12 or bs[-1][1] < bound_M - 1e-12:
        raise ValueError("buckets must cover [-M, M]")
    for (a1, b1), (a2, b2) in zip(bs, bs[1:]):
        if a1 >= b1 or a2 < b1 - 1e-12:
            raise ValueError("buckets must be nondegenerate and cover without gaps")


def calibration_report(
    P: Estimator,
    prob: EstimationProblem,
    K,
    buckets: Sequence[Tuple[float, float]],
    mode: str = "exact",
    n: int = 0,
    rng: Optional[RngStream] = None,
    alpha_min: float = 0.05,
    stat_tol: float = 0.0,
) -> CalibrationReport:
    """Bucketed calibration audit: per bucket, conditional target mean versus
    the interval widened by sqrt(weighted squared error / bucket mass)."""
    K = as_index(K)
    _validate_buckets(buckets, float(prob.bound_M))
    bs = sorted((float(a), float(b)) for a, b in buckets)

    def bucket_of(v: float) -> Optional[int]:
        for i, (a, b) in enumerate(bs):
            if a <= v <= b:
                return i
        return None

    acc = [[0.0, 0.0, 0.0] for _ in bs]  # mass, f-mass, (P-f)^2-mass
    if mode == "exact":
        for w, p in prob.ensemble.support_table(K):
            fx = float(prob.f(w))
            for q, v in P.exact_values(K, w):
                i = bucket_of(float(v))
                if i is None:
                    continue
                m = p * q
                acc[i][0] += m
                acc[i][1] += m * fx
                acc[i][2] += m * (float(v) - fx) ** 2
    elif mode == "mc":
        if rng is None or n <= 0:
            raise ValueError("mc mode needs n > 0 and an rng stream")
        for j in range(n):
            cell = rng.child("calib", j)
            x = prob.ensemble.sample(K, cell.child("x"))
            v = float(eval_estimator(P, K, x, cell.child("coins")))
            fx = float(prob.f(x))
            i = bucket_of(v)
            if i is None:
                continue
            acc[i][0] += 1.0 / n
            acc[i][1] += fx / n
            acc[i][2] += (v - fx) ** 2 / n
    else:
        raise ValueError(f"unknown mode {mode!r}")

    total = math.fsum(a[0] for a in acc)
    if abs(total - 1.0) > 1e-9:
        raise AssertionError(f"bucket masses sum to {total!r}")

    rows = []
    for (a, b), (mass, fmass, sq) in zip(bs, acc):
        if mass >= max(alpha_min, 1e-15):
            mean = fmass / mass
            bound = math.sqrt(sq / mass)
            ok = a - bound - stat_tol <= mean <= b + bound + stat_tol
            rows.append(CalibrationBucket(a, b, mass, mean, sq, bound, True, ok))
        else:
            rows.append(CalibrationBucket(a, b, mass, None, sq, math.inf, False, None))
    return CalibrationReport(rows, mode)


# ---------------------------------------------------------------------------
# Orthogonality
# ---------------------------------------------------------------------------

TestFn = Callable[[Word, float], float]


@dataclass
class OrthogonalityReport:
    rows: List[Tuple[str, float]]

    @property
    def max_residual(self) -> float:
        return max((abs(r) for _, r in self.rows), default=0.0)


def orthogonality_residual(
    P: Estimator,
    prob: EstimationProblem,
    K,
    tests: Sequence[Tuple[str, TestFn]],
) -> OrthogonalityReport:
    """Exact residuals E[(P - f) * S(x, P)] for bounded test functions."""
    K = as_index(K)
    rows = []
    table = prob.ensemble.support_table(K)
    for name, S in tests:
        terms = []
        for w, p in table:
            fx = float(prob.f(w))
            for q, v in P.exact_values(K, w):
                vf = float(v)
                terms.append(p * q * (vf - fx) * S(w, vf))
        rows.append((name, math.fsum(terms)))
    return OrthogonalityReport(rows)


def fiber_indicator_tests(m: Callable[[Word], Word], fibers: Sequence[Word]):
    return [
        (f"fiber[{fiber}]", (lambda w, v, fb=fiber: 1.0 if m(w) == fb else 0.0))
        for fiber in fibers
    ]


# ---------------------------------------------------------------------------
# Optimality gap
# ---------------------------------------------------------------------------


@dataclass
class ProgramClass:
    """Competitor family: every program of length <= max_code_bits, run
    deterministically on each listed coin view."""

    max_code_bits: int
    coin_views: Tuple[str, ...] = ("",)
    advice: Word = ""


@dataclass
class GapReport:
    gap: float
    estimator_error: float
    best_error: float
    best_name: str


def optimality_gap(
    P: Estimator,
    prob: EstimationProblem,
    K,
    competitors: Union[ProgramClass, Sequence[Estimator]],
) -> GapReport:
    K = as_index(K)
    err_p = exact_sq_error(P, prob, K)
    best_err, best_name = math.inf, ""
    if isinstance(competitors, ProgramClass):
        collapsed = collapse_problem_by_view(prob, K)
        for code in enumerate_programs(competitors.max_code_bits):
            err = min(
                program_true_error(code, collapsed, K.k1, prob.bound_M,
                                   competitors.advice, zv)
                for zv in competitors.coin_views
            )
            if err < best_err:
                best_err, best_name = err, code or "<empty>"
    else:
        for Q in competitors:
            err = exact_sq_error(Q, prob, K)
            if err < best_err:
                best_err, best_name = err, Q.name
    return GapReport(err_p - best_err, err_p, best_err, best_name)


def constant_grid(step: Fraction, bound: Fraction) -> List[Estimator]:
    from .core import NativeConstEstimator

    step, bound = Fraction(step), Fraction(bound)
    out = []
    v = -bound
    while v <= bound:
        out.append(NativeConstEstimator(v, bound=bound))
        v += step
    return out


# ---------------------------------------------------------------------------
# Orthogonality bound from perturbation gaps
# ---------------------------------------------------------------------------


class PerturbedEstimator(Estimator):
    """P - t * S(x, P); the test-function perturbation used by the gap bound."""

    def __init__(self, P: Estimator, S: TestFn, t: Fraction, sup_S: Fraction):
        self.P = P
        self.S = S
        self.t = Fraction(t)
        self.bound = P.bound + abs(self.t) * Fraction(sup_S)
        self.name = f"perturb({P.name},{t})"

    def rand_bits(self, K):
        return self.P.rand_bits(K)

    def advice(self, K):
        return self.P.advice(K)

    def _shift(self, x: Word, v: Fraction) -> Fraction:
        return v - self.t * Fraction(self.S(x, float(v)))

    def evaluate(self, K, x, coins):
        return self._shift(x, self.P.evaluate(as_index(K), x, coins))

    def exact_values(self, K, x):
        out: Dict[Fraction, float] = {}
        for q, v in self.P.exact_values(as_index(K), x):
            s = self._shift(x, v)
            out[s] = out.get(s, 0.0) + q
        return [(q, v) for v, q in sorted(out.items())]


@dataclass
class ResidualBoundReport:
    bound: float
    residual: float
    best_t: float
    consistent: bool


def residual_bound_from_gap(
    P: Estimator,
    prob: EstimationProblem,
    K,
    S: TestFn,
    sup_S: float,
    t_grid: Sequence[Fraction] = tuple(Fraction(1, 2 ** i) for i in range(1, 9)),
    tol: float = 1e-9,
) -> ResidualBoundReport:
    """Bound |E[(P - f) S]| via the error change under P -> P -+ t*S."""
    K = as_index(K)
    err_p = exact_sq_error(P, prob, K)
    best, best_t = math.inf, 0.0
    for t in t_grid:
        t = Fraction(t)
        if t <= 0:
            raise ValueError("t grid must be positive")
        gaps = []
        for signed in (t, -t):
            q = PerturbedEstimator(P, S, signed, Fraction(sup_S))
            gaps.append(err_p - exact_sq_error(q, prob, K))
        g = max(gaps[0], gaps[1], 0.0)
        val = (float(sup_S) ** 2 * float(t) + g / float(t)) / 2.0
        if val < best:
            best, best_t = val, float(t)
    residual = orthogonality_residual(P, prob, K, [("S", S)]).rows[0][1]
    return ResidualBoundReport(best, residual, best_t, abs(residual) <= best + tol)


# ---------------------------------------------------------------------------
# Uniqueness
# ---------------------------------------------------------------------------


def uniqueness_distance(
    P: Estimator,
    Q: Estimator,
    e: WordEnsemble,
    K,
    mode: str = "exact",
    n: int = 0,
    rng: Optional[RngStream] = None,
) -> float:
    """E over the ensemble and both coin streams of (P - Q)^2."""
    K = as_index(K)
    if mode == "exact":
        terms = []
        for w, p in e.support_table(K):
            pv = P.exact_values(K, w)
            qv = Q.exact_values(K, w)
            for a, va in pv:
                for b, vb in qv:
                    d = float(va) - float(vb)
                    terms.append(p * a * b * d * d)
        return math.fsum(terms)
    if mode == "mc":
        if rng is None or n <= 0:
            raise ValueError("mc mode needs n > 0 and an rng stream")
        terms = []
        for i in range(n):
            cell = rng.child("uniq", i)
            x = e.sample(K, cell.child("x"))
            vp = float(eval_estimator(P, K, x, cell.child("p")))
            vq = float(eval_estimator(Q, K, x, cell.child("q")))
            terms.append((vp - vq) ** 2)
        return math.fsum(terms) / n
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class CounterfactualReport:
    precondition_ok: bool
    full_distance: Optional[float]
    conditional_distance: Optional[float]
    event_mass: float
    bound: Optional[float]
    passed: Optional[bool]


def counterfactual_uniqueness(
    P: Estimator,
    Q: Estimator,
    R_L: Estimator,
    eps: float,
    e: WordEnsemble,
    K,
    L: Callable[[Word], bool],
    slack: float = 0.0,
) -> CounterfactualReport:
    """Distance of P and Q over the full ensemble, bounded through an
    event estimator R_L that stays above eps * D(L) everywhere."""
    K = as_index(K)
    d_l = e.mass(K, L)
    floor = eps * d_l
    for w, _ in e.support_table(K):
        if any(float(v) < floor - 1e-15 for _, v in R_L.exact_values(K, w)):
            return CounterfactualReport(False, None, None, d_l, None, None)
    full = uniqueness_distance(P, Q, e, K)
    from .core import ConditionalEnsemble

    cond = uniqueness_distance(P, Q, ConditionalEnsemble(e, L), K)
    bound = (cond / d_l + slack) / eps
    return CounterfactualReport(True, full, cond, d_l, bound, full <= bound + 1e-12)


# ---------------------------------------------------------------------------
# Decider extraction
# ---------------------------------------------------------------------------


@dataclass
class DeciderReport:
    truth: int
    failure_rate: float
    err_hat: float
    tv_residual: float
    sigma: float
    bound: float
    passed: bool


def extract_decider(
    s: Sampler,
    P: Estimator,
    K,
    prob: EstimationProblem,
    n_trials: int,
    rng: RngStream,
) -> Tuple[Callable[[RngStream], int], DeciderReport]:
    """Threshold P over sampler draws at 1/2 to decide a tally problem.

    Values at exactly 1/2 decide 0 (strict inequality for 1).
    """
    K = as_index(K)
    values = {prob.f(w) for w, _ in prob.ensemble.support_table(K)}
    if len(values) != 1 or not values <= {Fraction(0), Fraction(1)}:
        raise ValueError("decider extraction needs a tally problem: f constant in {0,1} per K")
    truth = int(next(iter(values)))

    def decide(stream: RngStream) -> int:
        word, _ = s.draw(K, stream.child("sigma"))
        v = eval_estimator(P, K, word, stream.child("p"))
        return 1 if v > Fraction(1, 2) else 0

    failures = sum(1 for i in range(n_trials) if decide(rng.child("trial", i)) != truth)
    rate = failures / n_trials
    err_hat = exact_sq_error(P, prob, K)
    try:
        tv = tv_distance_tables(
            dict(prob.ensemble.support_table(K)),
            dict(SamplerEnsemble(s).support_table(K)),
        )
    except Exception:
        tv = 0.0
    p_bar = min(max(4.0 * err_hat + tv, 0.0), 1.0)
    sigma = math.sqrt(p_bar * (1.0 - p_bar) / n_trials) if 0 < p_bar < 1 else 1.0 / n_trials
    bound = p_bar + 3.0 * sigma
    return decide, DeciderReport(truth, rate, err_hat, tv, sigma, bound, rate <= bound)


# ---------------------------------------------------------------------------
# Regret curves
# ---------------------------------------------------------------------------


@dataclass
class RegretCurve:
    k0: int
    rows: List[Tuple[int, float]]  # (k1, regret), regret may be negative

    def partial_sums(self, monotonized: bool = False) -> List[Tuple[int, float]]:
        """Log-weighted partial sums S(N) = sum over grid k <= N of
        regret / (k log2 k), with negative regrets floored at zero inside
        the sum; bounded sums certify asymptotically negligible regret."""
        rows = self.rows
        if monotonized:
            regs = [max((r for _, r in rows[i:]), default=0.0) for i in range(len(rows))]
            rows = [(k, r) for (k, _), r in zip(rows, regs)]
        out = []
        acc = 0.0
        for k, r in rows:
            if k >= 2:
                acc += max(r, 0.0) / (k * math.log2(k))
            out.append((k, acc))
        return out

    def fitted_bound_constant(self, p_shift: int = 2) -> float:
        """Least M with S(N) <= M * log2 log2 (N + p_shift) over the grid."""
        best = 0.0
        for k, ssum in self.partial_sums():
            denom = math.log2(math.log2(k + p_shift)) if k + p_shift > 2 else None
            if denom and denom > 0:
                best = max(best, ssum / denom)
        return best


def regret_curve(
    estimator_at: Callable[[IndexK], Estimator],
    prob: EstimationProblem,
    k0: int,
    k1_values: Sequence[int],
    competitors_at: Callable[[IndexK], Union[ProgramClass, Sequence[Estimator]]],
) -> RegretCurve:
    rows = []
    for k1 in k1_values:
        K = IndexK(k0, k1)
        rep = optimality_gap(estimator_at(K), prob, K, competitors_at(K))
        rows.append((k1, rep.gap))
    return RegretCurve(k0, rows)

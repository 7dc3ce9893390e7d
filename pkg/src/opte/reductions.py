"""Pseudo-invertible reductions, estimator pullbacks, dominance checks,
ensemble re-indexing, and the canonical complete-problem construction.

A reduction maps a source problem at index K to a target problem at
index alpha(K).  Verification is numeric and exhaustive: pushforwards,
fiber distributions, and dominance residuals are computed exactly by
enumerating the (small) coin spaces involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .codec import (
    DecodeError,
    Word,
    chev_decode,
    chev_encode,
    decode_nat,
    encode_nat,
)
from .core import (
    EstimationProblem,
    Estimator,
    ExhaustionRefused,
    IndexK,
    PullbackEnsemble,
    Sampler,
    SamplerEnsemble,
    WordEnsemble,
    as_index,
    tv_distance_tables,
)
from . import vm

MAX_ENUM_COINS = 20


class ConstructionError(ValueError):
    """A reduction or complete-problem construction cannot be realized."""


def _identity_alpha(K: IndexK) -> IndexK:
    return K


@dataclass
class Reduction:
    """Forward map pi with coin count, optional pseudo-inverse tau, width gamma.

    `alpha` re-indexes the target; `weight` and `dominating_table`
    switch residual (i) of verification into dominance form, comparing
    the pushforward against the weighted target masses on the support
    of the weight.
    """

    pi: Callable[[IndexK, Word, Word], Word]
    pi_rand_bits: Callable[[IndexK], int]
    tau: Optional[Callable[[IndexK, Word, Word], Word]] = None
    tau_rand_bits: Callable[[IndexK], int] = lambda K: 0
    gamma: Callable[[IndexK], int] = lambda K: 1
    alpha: Callable[[IndexK], IndexK] = _identity_alpha
    weight: Optional[Estimator] = None
    dominating_table: Optional[Callable[[IndexK], Dict[Word, float]]] = None
    lax: bool = False
    name: str = "reduction"

    def pushforward(self, source: WordEnsemble, K: IndexK) -> Dict[Word, float]:
        """Exact pushforward of the source distribution through pi at K."""
        K = as_index(K)
        out: Dict[Word, float] = {}
        for x, p, y, q in self._joint(source, K):
            out[y] = out.get(y, 0.0) + p * q
        return out

    def _joint(self, source: WordEnsemble, K: IndexK):
        """Yield (x, p_x, y, q_coins) over support and exhaustive pi coins."""
        r = self.pi_rand_bits(K)
        if r > MAX_ENUM_COINS:
            raise ExhaustionRefused(f"pi uses {r} coins; exhaustive check capped")
        coin_words = [""] if r == 0 else [format(v, f"0{r}b") for v in range(1 << r)]
        q = 1.0 / len(coin_words)
        for x, p in source.support_table(K):
            for z in coin_words:
                yield x, p, self.pi(K, x, z), q


def identity_reduction() -> Reduction:
    return Reduction(
        pi=lambda K, x, z: x,
        pi_rand_bits=lambda K: 0,
        tau=lambda K, y, z: y,
        name="identity",
    )


def relabel_reduction(forward: Callable[[Word], Word],
                      inverse: Callable[[Word], Word], name: str = "relabel") -> Reduction:
    return Reduction(
        pi=lambda K, x, z: forward(x),
        pi_rand_bits=lambda K: 0,
        tau=lambda K, y, z: inverse(y),
        name=name,
    )


# ---------------------------------------------------------------------------
# Estimator pullbacks
# ---------------------------------------------------------------------------


class ReductionPullbackEstimator(Estimator):
    """gamma-fold average of P(pi(x, z_i), w_i) over independent pairs.

    Coin layout per pair: the target estimator's coins first, then pi's,
    pairs concatenated in order.
    """

    def __init__(self, red: Reduction, P_target: Estimator, name: str = ""):
        self.red = red
        self.P = P_target
        self.bound = P_target.bound
        self.name = name or f"pullback({red.name},{P_target.name})"

    def _pair_bits(self, K: IndexK) -> Tuple[int, int]:
        KT = as_index(self.red.alpha(K))
        return self.P.rand_bits(KT), self.red.pi_rand_bits(K)

    def rand_bits(self, K: IndexK) -> int:
        K = as_index(K)
        rp, rpi = self._pair_bits(K)
        total = self.red.gamma(K) * (rp + rpi)
        if total > 1 << 16:
            raise ExhaustionRefused("averaged reduction exceeds the coin budget")
        return total

    def advice(self, K: IndexK) -> Word:
        return self.P.advice(as_index(self.red.alpha(as_index(K))))

    def evaluate(self, K: IndexK, x: Word, coins: Word) -> Fraction:
        K = as_index(K)
        KT = as_index(self.red.alpha(K))
        rp, rpi = self._pair_bits(K)
        g = self.red.gamma(K)
        total = Fraction(0)
        off = 0
        for _ in range(g):
            w = coins[off : off + rp]
            z = coins[off + rp : off + rp + rpi]
            off += rp + rpi
            total += self.P.evaluate(KT, self.red.pi(K, x, z), w)
        return total / g

    def _pair_distribution(self, K: IndexK, x: Word) -> List[Tuple[float, Fraction]]:
        KT = as_index(self.red.alpha(K))
        rpi = self.red.pi_rand_bits(K)
        if rpi > MAX_ENUM_COINS:
            raise ExhaustionRefused("cannot exhaust pi coins")
        ys: Dict[Word, float] = {}
        n = 1 << rpi
        for v in range(n):
            z = format(v, f"0{rpi}b") if rpi else ""
            y = self.red.pi(K, x, z)
            ys[y] = ys.get(y, 0.0) + 1.0 / n
        out: Dict[Fraction, float] = {}
        for y, py in ys.items():
            for q, val in self.P.exact_values(KT, y):
                out[val] = out.get(val, 0.0) + py * q
        return [(q, v) for v, q in sorted(out.items())]

    def exact_values(self, K: IndexK, x: Word) -> List[Tuple[float, Fraction]]:
        K = as_index(K)
        pair = self._pair_distribution(K, x)
        g = self.red.gamma(K)
        sums: Dict[Fraction, float] = {Fraction(0): 1.0}
        for _ in range(g):
            nxt: Dict[Fraction, float] = {}
            for s, ps in sums.items():
                for q, v in pair:
                    t = s + v
                    nxt[t] = nxt.get(t, 0.0) + ps * q
            sums = nxt
        return [(q, s / g) for s, q in sorted(sums.items())]


def apply_precise_reduction(red: Reduction, P_target: Estimator) -> Estimator:
    if red.gamma(IndexK(0, 0)) != 1:
        raise ValueError("precise application requires gamma = 1")
    return ReductionPullbackEstimator(red, P_target)


def apply_averaged_reduction(red: Reduction, P_target: Estimator) -> Estimator:
    return ReductionPullbackEstimator(red, P_target)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass
class ReductionReport:
    K: IndexK
    residual_i: float
    residual_ii: float
    residual_iii: Optional[float]
    thresholds: Dict[str, float]
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "K": [self.K.k0, self.K.k1],
            "residual_i": self.residual_i,
            "residual_ii": self.residual_ii,
            "residual_iii": self.residual_iii,
            "thresholds": self.thresholds,
            "pass": self.passed,
        }


DEFAULT_THRESHOLDS = {"i": 1e-9, "ii": 1e-9, "iii": 1e-9}


def verify_reduction(
    red: Reduction,
    source: EstimationProblem,
    target: EstimationProblem,
    K,
    thresholds: Optional[Dict[str, float]] = None,
) -> ReductionReport:
    """Exhaustively measure the three reduction conditions at one index.

    (i) pushforward against the target distribution (total variation),
    or against the weighted target masses when the reduction carries a
    dominance weight; (ii) target agreement through pi, pointwise for
    precise reductions and in expectation for lax ones; (iii) mean total
    variation between true fibers and the pseudo-inverse sampler.
    """
    K = as_index(K)
    KT = as_index(red.alpha(K))
    thresholds = dict(DEFAULT_THRESHOLDS, **(thresholds or {}))

    push: Dict[Word, float] = {}
    joint: Dict[Word, Dict[Word, float]] = {}
    for x, p, y, q in red._joint(source.ensemble, K):
        push[y] = push.get(y, 0.0) + p * q
        fiber = joint.setdefault(y, {})
        fiber[x] = fiber.get(x, 0.0) + p * q

    # (i)
    if red.weight is not None and red.dominating_table is not None:
        dom = red.dominating_table(K)
        keys = set(dom) | set(push)
        residual_i = math.fsum(
            abs(dom.get(y, 0.0) * red.weight.exact_mean(KT, y) - push.get(y, 0.0))
            for y in keys
        )
    else:
        residual_i = tv_distance_tables(push, dict(target.ensemble.support_table(KT)))

    # (ii)
    try:
        support = target.support_set(KT) if target.f_total is None else None
    except ExhaustionRefused:
        support = None
    r = red.pi_rand_bits(K)
    ncoins = 1 << r
    if red.lax:
        terms = []
        for x, p in source.ensemble.support_table(K):
            acc = []
            for v in range(ncoins):
                z = format(v, f"0{r}b") if r else ""
                acc.append(float(target.f_bar(red.pi(K, x, z), support)))
            terms.append(p * abs(float(source.f(x)) - math.fsum(acc) / ncoins))
        residual_ii = math.fsum(terms)
    else:
        terms = []
        for x, p, y, q in red._joint(source.ensemble, K):
            terms.append(p * q * abs(float(source.f(x)) - float(target.f_bar(y, support))))
        residual_ii = math.fsum(terms)

    # (iii)
    residual_iii = None
    if red.tau is not None:
        rt = red.tau_rand_bits(K)
        if rt > MAX_ENUM_COINS:
            raise ExhaustionRefused("tau coin space too large for exact fibers")
        tau_coins = [""] if rt == 0 else [format(v, f"0{rt}b") for v in range(1 << rt)]
        qt = 1.0 / len(tau_coins)
        terms = []
        for y, fiber in joint.items():
            mass = math.fsum(fiber.values())
            true_fiber = {x: w / mass for x, w in fiber.items()}
            tau_dist: Dict[Word, float] = {}
            for z in tau_coins:
                w = red.tau(K, y, z)
                tau_dist[w] = tau_dist.get(w, 0.0) + qt
            terms.append(mass * tv_distance_tables(true_fiber, tau_dist))
        residual_iii = math.fsum(terms)

    passed = (
        residual_i <= thresholds["i"]
        and residual_ii <= thresholds["ii"]
        and (residual_iii is None or residual_iii <= thresholds["iii"])
    )
    return ReductionReport(K, residual_i, residual_ii, residual_iii, thresholds, passed)


def check_dominance(
    dominated: WordEnsemble,
    dominating: WordEnsemble,
    W: Estimator,
    Ks: Sequence,
) -> List[Tuple[IndexK, float]]:
    """Per-index L1 residual of E(x) * E[W(x)] against the dominated masses."""
    out = []
    for K in Ks:
        K = as_index(K)
        d = dict(dominated.support_table(K))
        e = dict(dominating.support_table(K))
        keys = set(d) | set(e)
        residual = math.fsum(
            abs(e.get(x, 0.0) * W.exact_mean(K, x) - d.get(x, 0.0)) for x in keys
        )
        out.append((K, residual))
    return out


def pullback_ensemble(e: WordEnsemble, alpha: Callable[[IndexK], IndexK],
                      eta_lifted: Optional[bool] = None) -> WordEnsemble:
    flag = e.eta_lifted if eta_lifted is None else eta_lifted
    return PullbackEnsemble(e, alpha, eta_lifted=flag)


def alpha_p(coeffs: Sequence[int]) -> Callable[[IndexK], IndexK]:
    """Index map (K0, K1) -> (K0, p(K1)) for a natural-coefficient polynomial p."""
    cs = tuple(int(c) for c in coeffs)
    if any(c < 0 for c in cs):
        raise ValueError("polynomial coefficients must be natural")

    def poly(k: int) -> int:
        return sum(c * k ** i for i, c in enumerate(cs))

    def a(K: IndexK) -> IndexK:
        K = as_index(K)
        return IndexK(K.k0, poly(K.k1))

    a.poly = poly  # type: ignore[attr-defined]
    a.coeffs = cs  # type: ignore[attr-defined]
    return a


# ---------------------------------------------------------------------------
# Complete problem
# ---------------------------------------------------------------------------


def encode_index(K: IndexK) -> Word:
    K = as_index(K)
    return chev_encode([encode_nat(K.k0), encode_nat(K.k1)])


def parse_self_delimiting_prefix(b: Word) -> Optional[Tuple[Word, Word]]:
    """Split b = chev_encode([phi]) + rest; None when no such prefix exists."""
    content = []
    i = 0
    n = len(b)
    while i + 2 <= n:
        pair = b[i : i + 2]
        if pair == "01":
            return "".join(content), b[i + 2 :]
        if pair == "00":
            content.append("0")
        elif pair == "11":
            content.append("1")
        else:
            return None
        i += 2
    return None


@dataclass
class CompleteProblemSpec:
    """Bounded evaluator F(phi, k, x) over a finite registry of phi words,
    plus the resource policies of the universal instance.

    Policies must satisfy 1 <= r(K) <= s(K) <= 16 at every used index
    and be nondecreasing in K1.
    """

    f_eval: Callable[[Word, int, Word], Fraction]
    registry: frozenset
    bound: Fraction
    r: Callable[[IndexK], int]
    s: Callable[[IndexK], int]

    def policies_at(self, K: IndexK) -> Tuple[int, int]:
        K = as_index(K)
        rK, sK = self.r(K), self.s(K)
        if not (1 <= rK <= sK):
            raise ConstructionError(f"need 1 <= r(K) <= s(K), got r={rK}, s={sK}")
        if sK > 16:
            raise ExhaustionRefused(f"s(K)={sK} exceeds the desk-scale cap of 16")
        return rK, sK


def make_complete_target(spec: CompleteProblemSpec) -> Callable[[Word], Fraction]:
    bound = Fraction(spec.bound)

    def f_total(word: Word) -> Fraction:
        try:
            parts = chev_decode(word)
        except DecodeError:
            return Fraction(0)
        if len(parts) != 4:
            return Fraction(0)
        b, k_enc, a, x = parts
        try:
            k = decode_nat(k_enc)
        except DecodeError:
            return Fraction(0)
        hit = parse_self_delimiting_prefix(b)
        if hit is None or hit[0] not in spec.registry:
            return Fraction(0)
        value = Fraction(spec.f_eval(hit[0], k, x))
        return max(min(value, bound), -bound)

    return f_total


def build_complete_problem(spec: CompleteProblemSpec) -> Tuple[EstimationProblem, Sampler]:
    """The universal samplable problem: words <b, nat(K1), a, Ev(a; En(K), w)>."""
    f_total = make_complete_target(spec)

    def gen(K: IndexK, coins: Word) -> Tuple[Word, Fraction]:
        K = as_index(K)
        rK, sK = spec.policies_at(K)
        b, a, w = coins[:rK], coins[rK : 2 * rK], coins[2 * rK :]
        x = vm.eval(a, K.k1, [encode_index(K), w]).output
        word = chev_encode([b, encode_nat(K.k1), a, x])
        return word, f_total(word)

    def rand_bits(K: IndexK) -> int:
        rK, sK = spec.policies_at(as_index(K))
        return 2 * rK + sK

    sampler = Sampler(gen, rand_bits=rand_bits, label_bound=Fraction(spec.bound),
                      name="complete", eta_lifted=False)
    ensemble = SamplerEnsemble(sampler, eta_lifted=False)
    problem = EstimationProblem(ensemble, f_total, Fraction(spec.bound), "complete",
                                f_total=f_total)
    return problem, sampler


def build_canonical_reduction(
    source: EstimationProblem,
    sampler: Sampler,
    phi: Word,
    q_coeffs: Sequence[int],
    spec: CompleteProblemSpec,
    p_coeffs: Optional[Sequence[int]] = None,
    probe_k1s: Sequence[int] = (0, 1, 2, 4, 8),
) -> Tuple[Reduction, Callable[[IndexK], IndexK]]:
    """The reduction x -> <b z_b, nat(p(K1)), a, x> onto the complete problem.

    `a` is the sampler's machine program; the policies must satisfy
    r(alpha_p(K)) = |a| exactly (the machine has no prefix-free program
    tape, so no padding may follow the program bits) and >= |b|.
    """
    if phi not in spec.registry:
        raise ConstructionError(f"phi {phi!r} is not in the registry")
    a0 = sampler.program
    if a0 is None:
        raise ConstructionError("sampler has no machine-program representation")
    b0 = chev_encode([phi])

    q = lambda n: sum(c * n ** i for i, c in enumerate(q_coeffs))

    if p_coeffs is None:
        # Smallest shift p(k) = k + c covering the probe indices.
        need = 0
        for k1 in probe_k1s:
            for k0 in range(0, 13):
                try:
                    table = source.ensemble.support_table(IndexK(k0, k1))
                except KeyError:
                    continue
                max_len = max((len(w) for w, _ in table), default=0)
                need = max(need, q(max_len))
        p_coeffs = (need, 1)
    alpha = alpha_p(p_coeffs)

    def check_policies(K: IndexK) -> Tuple[int, int, IndexK]:
        KT = as_index(alpha(K))
        rT, sT = spec.policies_at(KT)
        if rT != len(a0):
            raise ConstructionError(
                f"need r(alpha(K)) = |a| = {len(a0)}, got {rT} at {tuple(KT)}"
            )
        if rT < len(b0):
            raise ConstructionError(f"need r(alpha(K)) >= |b| = {len(b0)}")
        if sT < sampler.coin_count(K):
            raise ConstructionError("need s(alpha(K)) >= sampler coin count")
        max_len = max((len(w) for w, _ in source.ensemble.support_table(K)), default=0)
        if KT.k1 < q(max_len):
            raise ConstructionError("need p(K1) >= q(max support length)")
        return rT, sT, KT

    def pi(K: IndexK, x: Word, coins: Word) -> Word:
        K = as_index(K)
        rT, _, KT = check_policies(K)
        z_b = coins[: rT - len(b0)]
        return chev_encode([b0 + z_b, encode_nat(KT.k1), a0, x])

    def pi_rand_bits(K: IndexK) -> int:
        rT, _, _ = check_policies(as_index(K))
        return (rT - len(b0)) + (rT - len(a0))

    def tau(K: IndexK, y: Word, coins: Word) -> Word:
        return chev_decode(y)[3]

    weight_value = Fraction(1 << (len(a0) + len(b0)))

    class _DominanceWeight(Estimator):
        bound = weight_value
        name = "canonical-W"

        def evaluate(self, KT, y, coins):
            KT = as_index(KT)
            try:
                parts = chev_decode(y)
            except DecodeError:
                return Fraction(0)
            if len(parts) != 4:
                return Fraction(0)
            b, k_enc, a, _ = parts
            ok = (
                k_enc == encode_nat(KT.k1)
                and len(b) == spec.r(KT)
                and b.startswith(b0)
                and a == a0
            )
            return weight_value if ok else Fraction(0)

        def exact_values(self, KT, y):
            return [(1.0, self.evaluate(KT, y, ""))]

    def dominating_table(K: IndexK) -> Dict[Word, float]:
        """Exact complete-problem masses on the weight's support at alpha(K)."""
        K = as_index(K)
        rT, sT, KT = check_policies(K)
        en = encode_index(KT)
        eff = min(sT, vm.VIEW_BITS)
        outs: Dict[Word, float] = {}
        for v in range(1 << eff):
            wview = format(v, f"0{eff}b") if eff else ""
            x = vm.eval(a0, KT.k1, [en, wview + "0" * (sT - eff)]).output
            outs[x] = outs.get(x, 0.0) + 1.0 / (1 << eff)
        table: Dict[Word, float] = {}
        pad = rT - len(b0)
        base = (0.5 ** rT) * (0.5 ** rT)
        for zv in range(1 << pad):
            z_b = format(zv, f"0{pad}b") if pad else ""
            for x, px in outs.items():
                word = chev_encode([b0 + z_b, encode_nat(KT.k1), a0, x])
                table[word] = table.get(word, 0.0) + base * px
        return table

    red = Reduction(
        pi=pi,
        pi_rand_bits=pi_rand_bits,
        tau=tau,
        alpha=alpha,
        weight=_DominanceWeight(),
        dominating_table=dominating_table,
        name=f"canonical({source.name})",
    )
    return red, alpha

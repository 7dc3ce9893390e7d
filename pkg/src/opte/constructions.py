"""Existence constructions and the problem zoo.

Two estimator builders live here: empirical-risk minimization over all
programs up to a length bound, fed by a sampler, and the per-index
advice argmin that stores the best program for each index as advice.
Both break ties by the canonical length-then-lex program order.

Scan loops collapse inputs by their machine-visible views (the first
vm.VIEW_BITS bits of each tape), which is exact because program output
cannot depend on anything else; see vm.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .codec import Word, chev_decode, chev_encode, decode_nat, encode_nat, encode_rat
from .core import (
    ConditionalEnsemble,
    EstimationProblem,
    Estimator,
    ExplicitEnsemble,
    IndexK,
    Sampler,
    SamplerEnsemble,
    as_index,
)
from .rng import RngStream
from . import vm
from .vm import cached_program_value, enumerate_programs, tape_view

DEFAULT_K0S = tuple(range(0, 13))


class ZooError(KeyError):
    """Unknown zoo registry name."""


@dataclass(frozen=True)
class ResourcePolicy:
    """Resource schedule: budget K1, program length log2(K1+2), l^4 samples.

    `deterministic` forces the coin count to zero (programs run with an
    empty random tape), which the advice-argmin construction requires.
    """

    deterministic: bool = False
    max_program_len: int = 16

    def step_budget(self, K: IndexK) -> int:
        return as_index(K).k1

    def program_len(self, K: IndexK) -> int:
        return min((as_index(K).k1 + 2).bit_length() - 1, self.max_program_len)

    def sample_count(self, K: IndexK) -> int:
        return self.program_len(K) ** 4

    def coin_count(self, K: IndexK) -> int:
        if self.deterministic:
            return 0
        return min(as_index(K).k1, 1 << 16)


DEFAULT_POLICY = ResourcePolicy()
DETERMINISTIC_POLICY = ResourcePolicy(deterministic=True)


# ---------------------------------------------------------------------------
# Empirical risk
# ---------------------------------------------------------------------------


def _group_samples(
    samples: Sequence[Tuple[Word, Fraction]],
    coins: Optional[Sequence[Word]],
) -> List[Tuple[Tuple[str, str], List[float]]]:
    """Collapse (x, z, label) triples by machine-visible views, keeping label moments."""
    groups: Dict[Tuple[str, str], List[float]] = {}
    for i, (x, t) in enumerate(samples):
        z = coins[i] if coins is not None else ""
        key = (tape_view(x), tape_view(z))
        t = float(t)
        g = groups.get(key)
        if g is None:
            groups[key] = [1.0, t, t * t]
        else:
            g[0] += 1.0
            g[1] += t
            g[2] += t * t
    return list(groups.items())


_DECODE_MEMO: Dict[Tuple[Word, Fraction], float] = {}


def _decoded(output: Word, bound_M: Fraction) -> float:
    key = (output, bound_M)
    v = _DECODE_MEMO.get(key)
    if v is None:
        from .codec import decode_clamped

        if len(_DECODE_MEMO) > 1 << 16:
            _DECODE_MEMO.clear()
        v = float(decode_clamped(output, bound_M))
        _DECODE_MEMO[key] = v
    return v


def _grouped_risk(
    code: Word,
    groups: Sequence[Tuple[Tuple[str, str], Sequence[float]]],
    m: int,
    step_budget: int,
    advice: Word,
    bound_M: Fraction,
) -> float:
    advice_view = tape_view(advice)
    if vm.reads_no_tape(code):
        # Input-independent program: one run decides every sample.
        v = _decoded(vm.eval(code, step_budget, ()).output, bound_M)
        c = math.fsum(g[0] for _, g in groups)
        st = math.fsum(g[1] for _, g in groups)
        st2 = math.fsum(g[2] for _, g in groups)
        return (c * v * v - 2.0 * v * st + st2) / m
    keys = [k for k, _ in groups]
    outs = vm.outputs_on_views(code, step_budget, keys, advice_view)
    terms = []
    for out, (_, (c, st, st2)) in zip(outs, groups):
        v = _decoded(out, bound_M)
        terms.append(c * v * v - 2.0 * v * st + st2)
    return math.fsum(terms) / m


def empirical_risk(
    program: Word,
    samples: Sequence[Tuple[Word, Fraction]],
    step_budget: int,
    bound_M: Fraction,
    coins: Optional[Sequence[Word]] = None,
    advice: Word = "",
) -> float:
    """Mean squared residual of a program over labeled samples.

    `coins[i]` is the random tape for sample i (empty words when omitted);
    `advice` rides on tape 2.
    """
    if not samples:
        raise ValueError("need at least one sample")
    groups = _group_samples(samples, coins)
    return _grouped_risk(program, groups, len(samples), step_budget, advice, Fraction(bound_M))


def draw_erm_samples(
    sampler: Sampler,
    K,
    rng: RngStream,
    policy: ResourcePolicy = DEFAULT_POLICY,
    l_override: Optional[int] = None,
) -> Tuple[List[Tuple[Word, Fraction]], List[Word]]:
    """The sample pairs and per-sample risk coins used by one ERM selection."""
    K = as_index(K)
    l = policy.program_len(K) if l_override is None else l_override
    m = l ** 4 if l_override is not None else policy.sample_count(K)
    m = max(m, 1)
    r = policy.coin_count(K)
    samples = [sampler.draw(K, rng.child("sample", i)) for i in range(m)]
    coins = [rng.child("risk-coin", i).word(r) for i in range(m)]
    return samples, coins


def erm_select(
    sampler: Sampler,
    K,
    rng: RngStream,
    policy: ResourcePolicy = DEFAULT_POLICY,
    bound_M: Fraction = Fraction(1),
    l_override: Optional[int] = None,
) -> Tuple[Word, float]:
    """Draw l^4 labeled samples once, return the canonical-order empirical-risk argmin."""
    K = as_index(K)
    l = policy.program_len(K) if l_override is None else l_override
    samples, coins = draw_erm_samples(sampler, K, rng, policy, l_override)
    groups = _group_samples(samples, coins)
    m = len(samples)
    budget = policy.step_budget(K)
    advice = sampler.advice(K)
    bound_M = Fraction(bound_M)
    best_code, best_risk = "", math.inf
    for code in enumerate_programs(l):
        risk = _grouped_risk(code, groups, m, budget, advice, bound_M)
        if risk < best_risk:
            best_code, best_risk = code, risk
    return best_code, best_risk


def erm_rescan(
    sampler: Sampler,
    K,
    rng: RngStream,
    policy: ResourcePolicy = DEFAULT_POLICY,
    bound_M: Fraction = Fraction(1),
    l_override: Optional[int] = None,
) -> List[Tuple[Word, float]]:
    """Risk of every candidate program on one selection's sample draw.

    Re-derives the samples from the stream and scores all programs,
    grouping once; each reported value equals what empirical_risk
    returns for that program on the same draw.
    """
    K = as_index(K)
    l = policy.program_len(K) if l_override is None else l_override
    samples, coins = draw_erm_samples(sampler, K, rng, policy, l_override)
    groups = _group_samples(samples, coins)
    m = len(samples)
    budget = policy.step_budget(K)
    advice = sampler.advice(K)
    bound_M = Fraction(bound_M)
    return [
        (code, _grouped_risk(code, groups, m, budget, advice, bound_M))
        for code in enumerate_programs(l)
    ]


@dataclass
class ErmAuditRecord:
    K: IndexK
    seed: int
    program: Word
    risk: float

    def line(self) -> str:
        return f"{self.K.k0}\t{self.K.k1}\t{self.seed}\t{self.program or '-'}\t{self.risk!r}"


class ErmEstimator(Estimator):
    """Estimator that selects a program by empirical risk per index, then runs it.

    Selection is deterministic given (selection_seed, K) and cached; the
    audit trail records every selection for reporting.  The lazy cache
    makes first evaluation at an index non-reentrant: build one instance
    per worker (the experiment runner does).
    """

    def __init__(
        self,
        sampler: Sampler,
        policy: ResourcePolicy = DEFAULT_POLICY,
        bound: Fraction = Fraction(1),
        selection_seed: int = 0,
        name: str = "erm",
    ):
        self.sampler = sampler
        self.policy = policy
        self.bound = Fraction(bound)
        self.selection_seed = selection_seed
        self.name = name
        self._cache: Dict[Tuple[int, int], Tuple[Word, float]] = {}
        self.audit: List[ErmAuditRecord] = []

    def selection(self, K) -> Tuple[Word, float]:
        K = as_index(K)
        key = (K.k0, K.k1)
        if key not in self._cache:
            rng = RngStream(self.selection_seed, ("erm-select", K.k0, K.k1))
            code, risk = erm_select(self.sampler, K, rng, self.policy, self.bound)
            self._cache[key] = (code, risk)
            self.audit.append(ErmAuditRecord(K, self.selection_seed, code, risk))
        return self._cache[key]

    def rand_bits(self, K) -> int:
        return self.policy.coin_count(as_index(K))

    def advice(self, K) -> Word:
        return self.sampler.advice(as_index(K))

    def evaluate(self, K, x: Word, coins: Word) -> Fraction:
        K = as_index(K)
        code, _ = self.selection(K)
        return cached_program_value(
            code, self.policy.step_budget(K), x, coins, self.advice(K), self.bound
        )

    def exact_values(self, K, x: Word):
        K = as_index(K)
        r = self.rand_bits(K)
        eff = min(r, vm.VIEW_BITS)
        p = 1.0 / (1 << eff)
        out: Dict[Fraction, float] = {}
        for v in range(1 << eff):
            coins = format(v, f"0{eff}b") if eff else ""
            value = self.evaluate(K, x, coins + "0" * (r - eff))
            out[value] = out.get(value, 0.0) + p
        return [(q, val) for val, q in sorted(out.items())]


def build_erm_estimator(
    sampler: Sampler,
    policy: ResourcePolicy = DEFAULT_POLICY,
    bound_M: Fraction = Fraction(1),
    selection_seed: int = 0,
    name: str = "erm",
) -> ErmEstimator:
    return ErmEstimator(sampler, policy, bound_M, selection_seed, name)


# ---------------------------------------------------------------------------
# True-error scans over the program class
# ---------------------------------------------------------------------------


def collapse_problem_by_view(problem: EstimationProblem, K) -> List[Tuple[str, List[float]]]:
    """Aggregate a problem table by x-view: (view, [mass, sum p*f, sum p*f^2])."""
    K = as_index(K)
    groups: Dict[str, List[float]] = {}
    for w, p in problem.ensemble.support_table(K):
        fx = float(problem.f(w))
        key = tape_view(w)
        g = groups.get(key)
        if g is None:
            groups[key] = [p, p * fx, p * fx * fx]
        else:
            g[0] += p
            g[1] += p * fx
            g[2] += p * fx * fx
    return list(groups.items())


def program_true_error(
    code: Word,
    collapsed: Sequence[Tuple[str, Sequence[float]]],
    step_budget: int,
    bound_M: Fraction,
    advice: Word = "",
    coin_view: str = "",
) -> float:
    """Exact squared error of a program run deterministically (fixed coin view)."""
    if vm.reads_no_tape(code):
        v = _decoded(vm.eval(code, step_budget, ()).output, bound_M)
        mass = math.fsum(g[0] for _, g in collapsed)
        pf = math.fsum(g[1] for _, g in collapsed)
        pf2 = math.fsum(g[2] for _, g in collapsed)
        return mass * v * v - 2.0 * v * pf + pf2
    keys = [(xv, coin_view) for xv, _ in collapsed]
    outs = vm.outputs_on_views(code, step_budget, keys, tape_view(advice))
    terms = []
    for out, (_, (mass, pf, pf2)) in zip(outs, collapsed):
        v = _decoded(out, bound_M)
        terms.append(mass * v * v - 2.0 * v * pf + pf2)
    return math.fsum(terms)


def scan_program_class(
    problem: EstimationProblem,
    K,
    max_code_bits: int,
    bound_M: Fraction = Fraction(1),
    advice: Word = "",
    coin_views: Sequence[str] = ("",),
) -> List[Tuple[Word, float]]:
    """Exact error of every program of length <= max_code_bits; deterministic slices.

    With several coin views the reported error is the minimum over the
    views, a lower bound on any randomized use of the same program.
    """
    K = as_index(K)
    collapsed = collapse_problem_by_view(problem, K)
    budget = K.k1
    bound_M = Fraction(bound_M)
    out = []
    for code in enumerate_programs(max_code_bits):
        err = min(
            program_true_error(code, collapsed, budget, bound_M, advice, zv)
            for zv in coin_views
        )
        out.append((code, err))
    return out


# ---------------------------------------------------------------------------
# Advice argmin
# ---------------------------------------------------------------------------


class AdviceArgminEstimator(Estimator):
    """Per-index advice = the program with least exact error; evaluation runs it.

    Programs are evaluated deterministically (coin count 0): integrating
    the exact error over coin words for every candidate is out of desk
    scale, and the construction permits the zero-coin instance.
    """

    def __init__(
        self,
        problem: EstimationProblem,
        policy: ResourcePolicy = DETERMINISTIC_POLICY,
        bound: Optional[Fraction] = None,
        name: str = "advice-argmin",
    ):
        self.problem = problem
        self.policy = ResourcePolicy(deterministic=True, max_program_len=policy.max_program_len)
        self.bound = Fraction(bound if bound is not None else problem.bound_M)
        self.name = name
        self._cache: Dict[Tuple[int, int], Tuple[Word, float]] = {}

    def selection(self, K) -> Tuple[Word, float]:
        K = as_index(K)
        key = (K.k0, K.k1)
        if key not in self._cache:
            collapsed = collapse_problem_by_view(self.problem, K)
            budget = self.policy.step_budget(K)
            best_code, best_err = "", math.inf
            for code in enumerate_programs(self.policy.program_len(K)):
                err = program_true_error(code, collapsed, budget, self.bound)
                if err < best_err:
                    best_code, best_err = code, err
            self._cache[key] = (best_code, best_err)
        return self._cache[key]

    def rand_bits(self, K) -> int:
        return 0

    def advice(self, K) -> Word:
        return self.selection(K)[0]

    def evaluate(self, K, x: Word, coins: Word) -> Fraction:
        K = as_index(K)
        code, _ = self.selection(K)
        return cached_program_value(code, self.policy.step_budget(K), x, "", "", self.bound)

    def exact_values(self, K, x: Word):
        return [(1.0, self.evaluate(as_index(K), x, ""))]


def build_advice_argmin_estimator(
    problem: EstimationProblem,
    policy: ResourcePolicy = DETERMINISTIC_POLICY,
    bound_M: Optional[Fraction] = None,
    name: str = "advice-argmin",
) -> AdviceArgminEstimator:
    return AdviceArgminEstimator(problem, policy, bound_M, name)


# ---------------------------------------------------------------------------
# Problem zoo
# ---------------------------------------------------------------------------


@dataclass
class ZooEntry:
    problem: EstimationProblem
    sampler: Optional[Sampler] = None
    extras: dict = field(default_factory=dict)


def _word_len_for(k0: int, lo: int = 1, hi: int = 8) -> int:
    return max(lo, min(k0, hi))


def _uniform_tables(k0s: Iterable[int], nbits_of: Callable[[int], int]):
    tables = {}
    for k0 in k0s:
        n = nbits_of(k0)
        tables[k0] = [(format(v, f"0{n}b"), 1.0 / (1 << n)) for v in range(1 << n)]
    return tables


def _uniform_word_sampler(nbits_of: Callable[[IndexK], int], f, bound) -> Sampler:
    def gen(K: IndexK, coins: Word):
        return coins, f(coins)

    return Sampler(gen, rand_bits=lambda K: nbits_of(K), label_bound=Fraction(bound),
                   name="uniform-exact")


# Encoded first-bit source: support {encode_rat(0), encode_rat(1)}, and a
# 10-bit machine program that reproduces its sampler from one coin bit
# (READBIT tape1 idx0; EMITBIT, trailing zeros dropped).
ENCODED_FIRST_BIT_PROGRAM = "1001010011"
FIRST_BIT_COPY_PROGRAM = "1001000011"  # READBIT tape0 idx0; EMITBIT


def zoo_first_bit(n: Optional[int] = None, encoded: bool = False,
                  k0s: Iterable[int] = DEFAULT_K0S) -> ZooEntry:
    if encoded:
        words = [encode_rat(Fraction(0)), encode_rat(Fraction(1))]
        tables = {k0: [(w, 0.5) for w in words] for k0 in k0s}
        ensemble = ExplicitEnsemble(tables)
        f = lambda x: Fraction(int(x[0]))
        problem = EstimationProblem(ensemble, f, Fraction(1), "first_bit_encoded")

        def gen(K: IndexK, coins: Word):
            b = int(coins[0])
            return encode_rat(Fraction(b)), Fraction(b)

        sampler = Sampler(gen, rand_bits=lambda K: 1, label_bound=Fraction(1),
                          name="first_bit_encoded", program=ENCODED_FIRST_BIT_PROGRAM)
        return ZooEntry(problem, sampler, {"copy_program": ENCODED_FIRST_BIT_PROGRAM})

    nbits_of = (lambda k0: _word_len_for(k0)) if n is None else (lambda k0: n)
    ensemble = ExplicitEnsemble(_uniform_tables(k0s, nbits_of))
    f = lambda x: Fraction(int(x[0]))
    problem = EstimationProblem(ensemble, f, Fraction(1), "first_bit")
    sampler = _uniform_word_sampler(lambda K: nbits_of(K.k0), f, 1)
    return ZooEntry(problem, sampler, {"copy_program": FIRST_BIT_COPY_PROGRAM})


def zoo_fair_coin(n: Optional[int] = None, k0s: Iterable[int] = DEFAULT_K0S) -> ZooEntry:
    nbits_of = (lambda k0: _word_len_for(k0, lo=2)) if n is None else (lambda k0: n)
    ensemble = ExplicitEnsemble(_uniform_tables(k0s, nbits_of))
    f = lambda x: Fraction(x.count("1") % 2)
    problem = EstimationProblem(ensemble, f, Fraction(1), "fair_coin")
    sampler = _uniform_word_sampler(lambda K: nbits_of(K.k0), f, 1)
    return ZooEntry(problem, sampler)


def zoo_parity(k: int = 2, n: Optional[int] = None,
               k0s: Iterable[int] = DEFAULT_K0S) -> ZooEntry:
    nbits_of = (lambda k0: max(_word_len_for(k0), k)) if n is None else (lambda k0: n)
    ensemble = ExplicitEnsemble(_uniform_tables(k0s, nbits_of))
    f = lambda x: Fraction(x[:k].count("1") % 2)
    problem = EstimationProblem(ensemble, f, Fraction(1), f"parity({k})")
    sampler = _uniform_word_sampler(lambda K: nbits_of(K.k0), f, 1)
    return ZooEntry(problem, sampler)


def zoo_tally(table, k0s: Iterable[int] = DEFAULT_K0S) -> ZooEntry:
    """Point-mass supports with an index-determined Boolean target.

    `table` is a collection of K0 values where the answer is 1.
    """
    members = frozenset(int(v) for v in table)
    tables = {k0: [(encode_nat(k0), 1.0)] for k0 in k0s}
    ensemble = ExplicitEnsemble(tables)

    def f(x: Word) -> Fraction:
        return Fraction(1 if decode_nat(x) in members else 0)

    problem = EstimationProblem(ensemble, f, Fraction(1), "tally")

    def gen(K: IndexK, coins: Word):
        return encode_nat(K.k0), Fraction(1 if K.k0 in members else 0)

    sampler = Sampler(gen, rand_bits=lambda K: 0, label_bound=Fraction(1), name="tally")
    return ZooEntry(problem, sampler, {"members": members})


def _rotl8(v: int, r: int) -> int:
    return ((v << r) | (v >> (8 - r))) & 255


def _rotr8(v: int, r: int) -> int:
    return ((v >> r) | (v << (8 - r))) & 255


_MIX_ROUNDS = (0x1D, 0x3B, 0x65)
_INV5 = 205  # 5 * 205 = 1 mod 256


def mixer8(v: int) -> int:
    """Fixed 8-bit keyed mixer (xor-rotate-multiply, 3 rounds); a permutation."""
    for c in _MIX_ROUNDS:
        v = (v * 5 + c) & 255
        v ^= v >> 3
        v = _rotl8(v, 2)
    return v


def mixer8_inverse(v: int) -> int:
    for c in reversed(_MIX_ROUNDS):
        v = _rotr8(v, 2)
        v ^= (v >> 3) ^ (v >> 6)
        v = ((v - c) * _INV5) & 255
    return v


def _dot_bits(a: Word, b: Word) -> int:
    return sum(int(x) & int(y) for x, y in zip(a, b)) % 2


def zoo_goldreich_levin(nbits: int = 8) -> ZooEntry:
    """Inner-product target over the image of the fixed toy mixer.

    Support words are <mixer(x), y> for uniform (x, y); the target is
    the inner product of the preimage x with y.  The mixer is a
    permutation, so the target is a well-defined word function.
    """
    if nbits != 8:
        raise ValueError("the toy mixer is fixed at 8 bits")

    def gen(K: IndexK, coins: Word):
        x, y = coins[:nbits], coins[nbits:]
        u = format(mixer8(int(x, 2)), "08b")
        return chev_encode([u, y]), Fraction(_dot_bits(x, y))

    sampler = Sampler(gen, rand_bits=lambda K: 2 * nbits, label_bound=Fraction(1),
                      name="goldreich_levin")

    def f(word: Word) -> Fraction:
        u, y = chev_decode(word)
        x = format(mixer8_inverse(int(u, 2)), "08b")
        return Fraction(_dot_bits(x, y))

    problem = EstimationProblem(SamplerEnsemble(sampler), f, Fraction(1), "goldreich_levin")
    return ZooEntry(problem, sampler, {"owf": mixer8, "owf_inverse": mixer8_inverse})


def zoo_product(entry1: ZooEntry, entry2: ZooEntry,
                k0s: Iterable[int] = DEFAULT_K0S) -> ZooEntry:
    p1, p2 = entry1.problem, entry2.problem
    tables = {}
    for k0 in k0s:
        try:
            t1 = p1.ensemble.support_table(IndexK(k0, 0))
            t2 = p2.ensemble.support_table(IndexK(k0, 0))
        except KeyError:
            continue
        if len(t1) * len(t2) > 4096:
            continue
        tables[k0] = [
            (chev_encode([w1, w2]), q1 * q2) for w1, q1 in t1 for w2, q2 in t2
        ]
    if not tables:
        raise ValueError("no index with a product support of at most 4096 words")
    ensemble = ExplicitEnsemble(tables)

    def f(word: Word) -> Fraction:
        x1, x2 = chev_decode(word)
        return p1.f(x1) * p2.f(x2)

    problem = EstimationProblem(ensemble, f, p1.bound_M * p2.bound_M,
                                f"product({p1.name},{p2.name})")
    sampler = None
    if entry1.sampler is not None and entry2.sampler is not None:
        s1, s2 = entry1.sampler, entry2.sampler

        def gen(K: IndexK, coins: Word):
            r1 = s1.coin_count(K)
            w1, l1 = s1.generate(K, coins[:r1])
            w2, l2 = s2.generate(K, coins[r1:])
            return chev_encode([w1, w2]), l1 * l2

        sampler = Sampler(
            gen,
            rand_bits=lambda K: s1.coin_count(K) + s2.coin_count(K),
            label_bound=s1.label_bound * s2.label_bound,
            name=f"product({s1.name},{s2.name})",
        )
    return ZooEntry(problem, sampler, {"components": (entry1, entry2)})


def zoo_point(value, word: Word = "0", k0s: Iterable[int] = DEFAULT_K0S) -> ZooEntry:
    """Point-mass ensemble with a constant target; building block for products."""
    value = Fraction(value)
    ensemble = ExplicitEnsemble({k0: [(word, 1.0)] for k0 in k0s})
    problem = EstimationProblem(ensemble, lambda x: value, max(abs(value), Fraction(1)),
                                f"point({value})")
    sampler = Sampler(lambda K, coins: (word, value), rand_bits=lambda K: 0,
                      label_bound=max(abs(value), Fraction(1)), name="point")
    return ZooEntry(problem, sampler)


@dataclass
class ConditionalPair:
    chi_problem: EstimationProblem       # (D, chi_L)
    chif_problem: EstimationProblem      # (D, chi_L * f)
    conditional_problem: EstimationProblem  # (D | L, f)
    predicate: Callable[[Word], bool]


def zoo_conditional_pair(base: ZooEntry, predicate: Callable[[Word], bool]) -> ZooEntry:
    prob = base.problem
    chi = EstimationProblem(
        prob.ensemble, lambda x: Fraction(1 if predicate(x) else 0), Fraction(1),
        f"{prob.name}|chi"
    )
    chif = EstimationProblem(
        prob.ensemble,
        lambda x: prob.f(x) if predicate(x) else Fraction(0),
        prob.bound_M,
        f"{prob.name}|chif",
    )
    conditional = EstimationProblem(
        ConditionalEnsemble(prob.ensemble, predicate), prob.target_f, prob.bound_M,
        f"{prob.name}|cond"
    )
    pair = ConditionalPair(chi, chif, conditional, predicate)
    return ZooEntry(prob, base.sampler, {"pair": pair})


PREDICATES = {
    "all": lambda w: True,
    "first1": lambda w: bool(w) and w[0] == "1",
    "first0": lambda w: bool(w) and w[0] == "0",
}

_REGISTRY: Dict[str, Callable[..., ZooEntry]] = {
    "first_bit": zoo_first_bit,
    "fair_coin": zoo_fair_coin,
    "parity": zoo_parity,
    "tally": zoo_tally,
    "goldreich_levin": zoo_goldreich_levin,
    "product": zoo_product,
    "point": zoo_point,
    "conditional_pair": zoo_conditional_pair,
}


def zoo_names() -> List[str]:
    return sorted(_REGISTRY)


def zoo_make(name: str, /, **params) -> ZooEntry:
    try:
        builder = _REGISTRY[name]
    except KeyError:
        raise ZooError(f"unknown zoo problem {name!r}; known: {', '.join(zoo_names())}")
    return builder(**params)

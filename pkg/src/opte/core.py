"""Word ensembles, estimation problems, estimators, samplers, and exact error
functionals at rank 2.

Instances are indexed by K = (K0, K1): K0 scales the problem, K1 the
resources.  Probabilities are 64-bit floats; estimator values are exact
rationals.  Everything is immutable after construction and evaluation
is pure given (inputs, seed), so objects are safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .codec import Word, check_word
from .rng import RngStream
from . import vm

MAX_INDEX = 1 << 20
MAX_EXPLICIT_SUPPORT = 4096
MAX_RAND_BITS = 1 << 16
MAX_ADVICE_BITS = 1 << 12
EXACT_COIN_LIMIT = 20
PROB_TOL = 1e-9


class ExhaustionRefused(RuntimeError):
    """Exact enumeration is infeasible here; fall back to Monte Carlo."""


class EnsembleIndexError(KeyError):
    """The ensemble has no distribution at the requested index."""


@dataclass(frozen=True, order=True)
class IndexK:
    k0: int
    k1: int

    def __post_init__(self):
        if not (0 <= self.k0 <= MAX_INDEX and 0 <= self.k1 <= MAX_INDEX):
            raise ValueError(f"index components must lie in [0, {MAX_INDEX}]")

    def __iter__(self):
        return iter((self.k0, self.k1))


def as_index(K) -> IndexK:
    if isinstance(K, IndexK):
        return K
    k0, k1 = K
    return IndexK(k0, k1)


def _sort_table(entries: Iterable[Tuple[Word, float]]) -> Tuple[Tuple[Word, float], ...]:
    return tuple(sorted(entries, key=lambda e: (len(e[0]), e[0])))


# ---------------------------------------------------------------------------
# Word ensembles
# ---------------------------------------------------------------------------


class WordEnsemble:
    """A family of distributions over words, indexed by K = (K0, K1)."""

    eta_lifted: bool = True

    def support_table(self, K: IndexK) -> Tuple[Tuple[Word, float], ...]:
        raise NotImplementedError

    def sample(self, K: IndexK, rng: RngStream) -> Word:
        table = self.support_table(K)
        u = rng.uniform()
        acc = 0.0
        for word, p in table:
            acc += p
            if u < acc:
                return word
        return table[-1][0]

    def mass(self, K: IndexK, predicate: Callable[[Word], bool]) -> float:
        return math.fsum(p for w, p in self.support_table(K) if predicate(w))


class ExplicitEnsemble(WordEnsemble):
    """Validated per-K0 probability tables with support at most 4096 words."""

    def __init__(self, tables: Dict[int, Sequence[Tuple[Word, float]]], eta_lifted: bool = True):
        self.eta_lifted = eta_lifted
        self._tables: Dict[int, Tuple[Tuple[Word, float], ...]] = {}
        for k0, entries in tables.items():
            if len(entries) > MAX_EXPLICIT_SUPPORT:
                raise ValueError(
                    f"support of {len(entries)} words at K0={k0} exceeds {MAX_EXPLICIT_SUPPORT}"
                )
            total = math.fsum(p for _, p in entries)
            if abs(total - 1.0) > PROB_TOL:
                raise ValueError(f"probabilities at K0={k0} sum to {total!r}, not 1")
            seen = set()
            for w, p in entries:
                check_word(w)
                if p <= 0:
                    raise ValueError(f"nonpositive probability {p!r} for word {w!r}")
                if w in seen:
                    raise ValueError(f"duplicate word {w!r} at K0={k0}")
                seen.add(w)
            self._tables[k0] = _sort_table(entries)

    def support_table(self, K: IndexK) -> Tuple[Tuple[Word, float], ...]:
        K = as_index(K)
        try:
            return self._tables[K.k0]
        except KeyError:
            raise EnsembleIndexError(f"no table at K0={K.k0}") from None


class FixedTableEnsemble(WordEnsemble):
    """Derived per-K tables (pushforwards, restrictions); no support cap."""

    def __init__(self, tables: Dict[Tuple[int, int], Sequence[Tuple[Word, float]]],
                 eta_lifted: bool = False):
        self.eta_lifted = eta_lifted
        self._tables = {k: _sort_table(v) for k, v in tables.items()}

    def support_table(self, K: IndexK) -> Tuple[Tuple[Word, float], ...]:
        K = as_index(K)
        try:
            return self._tables[(K.k0, K.k1)]
        except KeyError:
            raise EnsembleIndexError(f"no table at K={tuple(K)}") from None


class SamplerEnsemble(WordEnsemble):
    """Distribution induced by a sampler; exact tables come from exhausting its coins."""

    def __init__(self, sampler: "Sampler", eta_lifted: Optional[bool] = None):
        self.sampler = sampler
        self.eta_lifted = sampler.eta_lifted if eta_lifted is None else eta_lifted
        self._cache: Dict[Tuple[int, int], Tuple[Tuple[Word, float], ...]] = {}

    def _cache_key(self, K: IndexK) -> Tuple[int, int]:
        return (K.k0, 0) if self.eta_lifted else (K.k0, K.k1)

    def support_table(self, K: IndexK) -> Tuple[Tuple[Word, float], ...]:
        K = as_index(K)
        key = self._cache_key(K)
        if key not in self._cache:
            masses: Dict[Word, float] = {}
            for p, word, _ in self.sampler.enumerate_draws(K):
                masses[word] = masses.get(word, 0.0) + p
            self._cache[key] = _sort_table(masses.items())
        return self._cache[key]

    def sample(self, K: IndexK, rng: RngStream) -> Word:
        word, _ = self.sampler.draw(as_index(K), rng)
        return word


class PullbackEnsemble(WordEnsemble):
    """Re-indexing D^alpha with (D^alpha)^K := D^(alpha(K))."""

    def __init__(self, base: WordEnsemble, alpha: Callable[[IndexK], IndexK],
                 eta_lifted: bool = False):
        self.base = base
        self.alpha = alpha
        self.eta_lifted = eta_lifted

    def support_table(self, K: IndexK) -> Tuple[Tuple[Word, float], ...]:
        return self.base.support_table(as_index(self.alpha(as_index(K))))

    def sample(self, K: IndexK, rng: RngStream) -> Word:
        return self.base.sample(as_index(self.alpha(as_index(K))), rng)


class ConditionalEnsemble(WordEnsemble):
    """D | L for a word predicate L with positive mass at every used index."""

    def __init__(self, base: WordEnsemble, predicate: Callable[[Word], bool]):
        self.base = base
        self.predicate = predicate
        self.eta_lifted = base.eta_lifted

    def support_table(self, K: IndexK) -> Tuple[Tuple[Word, float], ...]:
        entries = [(w, p) for w, p in self.base.support_table(K) if self.predicate(w)]
        total = math.fsum(p for _, p in entries)
        if total <= 0:
            raise ValueError("conditioning event has zero mass")
        return _sort_table((w, p / total) for w, p in entries)


def load_ensemble_file(path: str, eta_lifted: bool = True) -> ExplicitEnsemble:
    """Line format: K0 <tab> word <tab> probability.  Blank lines and # comments ok."""
    tables: Dict[int, List[Tuple[Word, float]]] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            k0, word, p = int(fields[0]), fields[1], float(fields[2])
            tables.setdefault(k0, []).append(("" if word == "-" else word, p))
    return ExplicitEnsemble(tables, eta_lifted=eta_lifted)


# ---------------------------------------------------------------------------
# Estimation problems
# ---------------------------------------------------------------------------


@dataclass
class EstimationProblem:
    """A word ensemble plus a bounded rational-valued target on its support.

    `f_total`, when set, extends the target by its defining formula to
    all words (used by problems whose target has a closed form off
    support, e.g. the complete problem); otherwise the extension by 0
    is used wherever a total target is required.
    """

    ensemble: WordEnsemble
    target_f: Callable[[Word], Fraction]
    bound_M: Fraction
    name: str = "problem"
    f_total: Optional[Callable[[Word], Fraction]] = None

    def f(self, x: Word) -> Fraction:
        return Fraction(self.target_f(x))

    def f_bar(self, x: Word, support: Optional[frozenset] = None) -> Fraction:
        """Target extended by 0 outside the support (or by f_total when given)."""
        if self.f_total is not None:
            return Fraction(self.f_total(x))
        if support is not None:
            return self.f(x) if x in support else Fraction(0)
        try:
            return self.f(x)
        except Exception:
            return Fraction(0)

    def support_set(self, K: IndexK) -> frozenset:
        return frozenset(w for w, _ in self.ensemble.support_table(K))


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


@dataclass
class Sampler:
    """Randomized generator of (word, label) pairs; labels are unbiased targets.

    `generate` must be a pure function of (K, coin word) consuming the
    word it is given in full, so that exhausting the coin space yields
    the exact output distribution.
    """

    generate: Callable[[IndexK, Word], Tuple[Word, Fraction]]
    rand_bits: Callable[[IndexK], int]
    label_bound: Fraction
    advice: Callable[[IndexK], Word] = lambda K: ""
    name: str = "sampler"
    eta_lifted: bool = True
    program: Optional[Word] = None  # VM word reproducing `generate` on tapes [En(K), w]

    def coin_count(self, K: IndexK) -> int:
        r = self.rand_bits(as_index(K))
        if not (0 <= r <= MAX_RAND_BITS):
            raise ValueError(f"sampler coin count {r} out of range")
        return r

    def draw(self, K: IndexK, rng: RngStream) -> Tuple[Word, Fraction]:
        K = as_index(K)
        coins = rng.word(self.coin_count(K))
        word, label = self.generate(K, coins)
        if abs(label) > self.label_bound:
            raise ValueError(f"label {label} exceeds declared bound {self.label_bound}")
        return word, Fraction(label)

    def enumerate_draws(self, K: IndexK):
        """Yield (probability, word, label) over every coin word; exact."""
        K = as_index(K)
        r = self.coin_count(K)
        if r > EXACT_COIN_LIMIT:
            raise ExhaustionRefused(
                f"sampler uses {r} coins; exhaustive enumeration capped at {EXACT_COIN_LIMIT}"
            )
        p = 1.0 / (1 << r)
        if r == 0:
            word, label = self.generate(K, "")
            yield 1.0, word, Fraction(label)
            return
        for v in range(1 << r):
            coins = format(v, f"0{r}b")
            word, label = self.generate(K, coins)
            yield p, word, Fraction(label)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


class Estimator:
    """Evaluable scheme with per-K advice and per-K coin count; values in [-M, M]."""

    bound: Fraction = Fraction(1)
    name: str = "estimator"

    def rand_bits(self, K: IndexK) -> int:
        return 0

    def advice(self, K: IndexK) -> Word:
        return ""

    def evaluate(self, K: IndexK, x: Word, coins: Word) -> Fraction:
        raise NotImplementedError

    def exact_values(self, K: IndexK, x: Word) -> List[Tuple[float, Fraction]]:
        """Exact output distribution on input x as (probability, value) pairs."""
        K = as_index(K)
        r = self.rand_bits(K)
        if r == 0:
            return [(1.0, self.evaluate(K, x, ""))]
        if r > 12:
            raise ExhaustionRefused(
                f"{self.name}: cannot exhaust 2^{r} coin words; use Monte Carlo"
            )
        p = 1.0 / (1 << r)
        out: Dict[Fraction, float] = {}
        for v in range(1 << r):
            coins = format(v, f"0{r}b")
            value = self.evaluate(K, x, coins)
            out[value] = out.get(value, 0.0) + p
        return [(q, val) for val, q in sorted(out.items())]

    def exact_mean(self, K: IndexK, x: Word) -> float:
        return math.fsum(p * float(v) for p, v in self.exact_values(K, x))


class NativeConstEstimator(Estimator):
    def __init__(self, value: Fraction, bound: Optional[Fraction] = None, name: str = ""):
        self.value = Fraction(value)
        self.bound = Fraction(bound) if bound is not None else abs(self.value)
        self.name = name or f"const({self.value})"

    def evaluate(self, K: IndexK, x: Word, coins: Word) -> Fraction:
        return self.value

    def exact_values(self, K: IndexK, x: Word) -> List[Tuple[float, Fraction]]:
        return [(1.0, self.value)]


class FnEstimator(Estimator):
    """Estimator backed by a plain function of (K, x, coins); used by tests and the zoo."""

    def __init__(self, fn, bound: Fraction, rand_bits=0, advice=None, name: str = "fn"):
        self._fn = fn
        self.bound = Fraction(bound)
        self._rand_bits = rand_bits if callable(rand_bits) else (lambda K, r=rand_bits: r)
        self._advice = advice if callable(advice) else (lambda K, a=(advice or ""): a)
        self.name = name

    def rand_bits(self, K: IndexK) -> int:
        return self._rand_bits(as_index(K))

    def advice(self, K: IndexK) -> Word:
        return self._advice(as_index(K))

    def evaluate(self, K: IndexK, x: Word, coins: Word) -> Fraction:
        return Fraction(self._fn(as_index(K), x, coins))


class VmProgramEstimator(Estimator):
    """Estimator running a machine program on tapes [x, coins, advice]."""

    def __init__(
        self,
        program: Union[Word, Callable[[IndexK], Word]],
        bound: Fraction,
        budget: Union[int, Callable[[IndexK], int], None] = None,
        coin_bits: Union[int, Callable[[IndexK], int]] = 0,
        advice: Union[Word, Callable[[IndexK], Word]] = "",
        name: str = "program",
    ):
        self._program = program if callable(program) else (lambda K, w=program: w)
        self.bound = Fraction(bound)
        if budget is None:
            self._budget = lambda K: K.k1
        else:
            self._budget = budget if callable(budget) else (lambda K, b=budget: b)
        self._coin_bits = coin_bits if callable(coin_bits) else (lambda K, c=coin_bits: c)
        self._advice = advice if callable(advice) else (lambda K, a=advice: a)
        self.name = name

    def program(self, K: IndexK) -> Word:
        return self._program(as_index(K))

    def budget(self, K: IndexK) -> int:
        return self._budget(as_index(K))

    def rand_bits(self, K: IndexK) -> int:
        r = self._coin_bits(as_index(K))
        if not (0 <= r <= MAX_RAND_BITS):
            raise ValueError(f"coin count {r} out of range")
        return r

    def advice(self, K: IndexK) -> Word:
        a = self._advice(as_index(K))
        if len(a) > MAX_ADVICE_BITS:
            raise ValueError(f"advice of {len(a)} bits exceeds {MAX_ADVICE_BITS}")
        return a

    def evaluate(self, K: IndexK, x: Word, coins: Word) -> Fraction:
        K = as_index(K)
        return vm.cached_program_value(
            self.program(K), self.budget(K), x, coins, self.advice(K), self.bound
        )

    def exact_values(self, K: IndexK, x: Word) -> List[Tuple[float, Fraction]]:
        # Machine output depends only on the first vm.VIEW_BITS coin bits.
        K = as_index(K)
        r = self.rand_bits(K)
        eff = min(r, vm.VIEW_BITS)
        out: Dict[Fraction, float] = {}
        p = 1.0 / (1 << eff)
        for v in range(1 << eff):
            coins = format(v, f"0{eff}b") if eff else ""
            value = self.evaluate(K, x, coins + "0" * (r - eff))
            out[value] = out.get(value, 0.0) + p
        return [(q, val) for val, q in sorted(out.items())]


class ConditionalExpectationEstimator(Estimator):
    """The exact least-squares optimum among functions of an observation map m."""

    def __init__(self, problem: EstimationProblem, m: Callable[[Word], Word],
                 name: str = "oracle"):
        self.problem = problem
        self.m = m
        self.bound = Fraction(problem.bound_M)
        self.name = name
        self._tables: Dict[Tuple[int, int], Dict[Word, Fraction]] = {}

    def _table(self, K: IndexK) -> Dict[Word, Fraction]:
        key = (K.k0, 0 if self.problem.ensemble.eta_lifted else K.k1)
        if key not in self._tables:
            sums: Dict[Word, Fraction] = {}
            masses: Dict[Word, Fraction] = {}
            for w, p in self.problem.ensemble.support_table(K):
                fiber = self.m(w)
                pf = Fraction(p)
                sums[fiber] = sums.get(fiber, Fraction(0)) + pf * self.problem.f(w)
                masses[fiber] = masses.get(fiber, Fraction(0)) + pf
            self._tables[key] = {k: sums[k] / masses[k] for k in sums}
        return self._tables[key]

    def evaluate(self, K: IndexK, x: Word, coins: Word) -> Fraction:
        return self._table(as_index(K)).get(self.m(x), Fraction(0))

    def exact_values(self, K: IndexK, x: Word) -> List[Tuple[float, Fraction]]:
        return [(1.0, self.evaluate(as_index(K), x, ""))]


def conditional_expectation_estimator(
    problem: EstimationProblem, m: Callable[[Word], Word], name: str = "oracle"
) -> ConditionalExpectationEstimator:
    return ConditionalExpectationEstimator(problem, m, name=name)


# ---------------------------------------------------------------------------
# Evaluation and error functionals
# ---------------------------------------------------------------------------


def sample_ensemble(e: WordEnsemble, K, rng: RngStream) -> Word:
    return e.sample(as_index(K), rng)


def eval_estimator(P: Estimator, K, x: Word, rng: RngStream) -> Fraction:
    K = as_index(K)
    coins = rng.word(P.rand_bits(K))
    value = P.evaluate(K, x, coins)
    if abs(value) > P.bound:
        raise AssertionError(f"{P.name} produced {value} outside [-{P.bound}, {P.bound}]")
    return value


def exact_sq_error(P: Estimator, prob: EstimationProblem, K) -> float:
    """E over the ensemble and all coins of (P - f)^2, summed exactly."""
    K = as_index(K)
    terms = []
    for w, p in prob.ensemble.support_table(K):
        fx = float(prob.f(w))
        for q, v in P.exact_values(K, w):
            d = float(v) - fx
            terms.append(p * q * d * d)
    return math.fsum(terms)


def mc_sq_error(P: Estimator, prob: EstimationProblem, K, n_samples: int,
                rng: RngStream) -> Tuple[float, float]:
    """Monte-Carlo mean of (P - f)^2 with its standard error; seed-reproducible."""
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    K = as_index(K)
    draws = []
    for i in range(n_samples):
        cell = rng.child("mc", i)
        x = prob.ensemble.sample(K, cell.child("x"))
        v = eval_estimator(P, K, x, cell.child("coins"))
        d = float(v) - float(prob.f(x))
        draws.append(d * d)
    mean = math.fsum(draws) / n_samples
    var = math.fsum((d - mean) ** 2 for d in draws) / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)


def tv_distance(e1: WordEnsemble, e2: WordEnsemble, K) -> float:
    """Exact half-L1 distance between two exhaustible ensembles at K."""
    K = as_index(K)
    d1 = dict(e1.support_table(K))
    d2 = dict(e2.support_table(K))
    return tv_distance_tables(d1, d2)


def tv_distance_tables(d1: Dict[Word, float], d2: Dict[Word, float]) -> float:
    keys = set(d1) | set(d2)
    return 0.5 * math.fsum(abs(d1.get(w, 0.0) - d2.get(w, 0.0)) for w in keys)


def sampler_label_mean(s: Sampler, K, x: Word, mode="exact", n: int = 0,
                       rng: Optional[RngStream] = None) -> float:
    """Conditional mean of the label given the emitted word equals x; 0 if never."""
    K = as_index(K)
    if mode == "exact":
        num, den = [], []
        for p, word, label in s.enumerate_draws(K):
            if word == x:
                num.append(p * float(label))
                den.append(p)
        total = math.fsum(den)
        return math.fsum(num) / total if total > 0 else 0.0
    if mode == "mc":
        if rng is None or n <= 0:
            raise ValueError("mc mode needs n > 0 and an rng stream")
        hits = []
        for i in range(n):
            word, label = s.draw(K, rng.child("label-mean", i))
            if word == x:
                hits.append(float(label))
        return math.fsum(hits) / len(hits) if hits else 0.0
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class SamplerCheckRow:
    test_name: str
    exact_mean: float
    sampled_mean: float
    stderr: float

    @property
    def residual(self) -> float:
        return abs(self.exact_mean - self.sampled_mean)


@dataclass
class SamplerConsistencyReport:
    rows: List[SamplerCheckRow]
    label_bias: float
    marginal_tv: Optional[float] = None


def check_sampler_consistency(
    s: Sampler,
    prob: EstimationProblem,
    K,
    test_functions: Sequence[Estimator],
    n: int,
    rng: RngStream,
) -> SamplerConsistencyReport:
    """Compare exact expectations over the problem against sampler-side estimates."""
    K = as_index(K)
    table = prob.ensemble.support_table(K)
    words = [s.draw(K, rng.child("draw", i))[0] for i in range(n)]
    rows = []
    for idx, h in enumerate(test_functions):
        exact = math.fsum(p * h.exact_mean(K, w) for w, p in table)
        vals = [float(eval_estimator(h, K, w, rng.child("h", idx, i)))
                for i, w in enumerate(words)]
        mean = math.fsum(vals) / n
        var = math.fsum((v - mean) ** 2 for v in vals) / max(n - 1, 1)
        rows.append(SamplerCheckRow(h.name, exact, mean, math.sqrt(var / n)))
    bias = math.fsum(
        p * abs(sampler_label_mean(s, K, w) - float(prob.f(w))) for w, p in table
    )
    try:
        marginal = tv_distance_tables(
            dict(table), dict(SamplerEnsemble(s).support_table(K))
        )
    except ExhaustionRefused:
        marginal = None
    return SamplerConsistencyReport(rows, bias, marginal)

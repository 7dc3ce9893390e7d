"""Estimator combinators: linear combination, conditional quotient with
clamping, chi-product, band clipping, and the independence product.

Every combinator concatenates its constituents' coin strings in declared
argument order and tuple-encodes their advice words, so coin counts add
and the parts draw independent randomness.  Values combine in exact
rational arithmetic.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Tuple

from .codec import DecodeError, Word, chev_decode, chev_encode
from .core import Estimator, IndexK, as_index


class CombinatorEstimator(Estimator):
    """Pointwise combination of two estimators over independent coins."""

    def __init__(self, part_a: Estimator, part_b: Estimator, bound: Fraction, name: str):
        self.part_a = part_a
        self.part_b = part_b
        self.bound = Fraction(bound)
        self.name = name

    def _combine(self, va: Fraction, vb: Fraction) -> Fraction:
        raise NotImplementedError

    def _part_inputs(self, x: Word) -> Tuple[Word, Word]:
        return x, x

    def rand_bits(self, K: IndexK) -> int:
        K = as_index(K)
        return self.part_a.rand_bits(K) + self.part_b.rand_bits(K)

    def advice(self, K: IndexK) -> Word:
        K = as_index(K)
        return chev_encode([self.part_a.advice(K), self.part_b.advice(K)])

    def evaluate(self, K: IndexK, x: Word, coins: Word) -> Fraction:
        K = as_index(K)
        ra = self.part_a.rand_bits(K)
        xa, xb = self._part_inputs(x)
        va = self.part_a.evaluate(K, xa, coins[:ra])
        vb = self.part_b.evaluate(K, xb, coins[ra:])
        return self._combine(va, vb)

    def exact_values(self, K: IndexK, x: Word) -> List[Tuple[float, Fraction]]:
        K = as_index(K)
        xa, xb = self._part_inputs(x)
        out: Dict[Fraction, float] = {}
        for pa, va in self.part_a.exact_values(K, xa):
            for pb, vb in self.part_b.exact_values(K, xb):
                v = self._combine(va, vb)
                out[v] = out.get(v, 0.0) + pa * pb
        return [(q, val) for val, q in sorted(out.items())]


class LinearEstimator(CombinatorEstimator):
    def __init__(self, t1: Fraction, P1: Estimator, t2: Fraction, P2: Estimator):
        self.t1, self.t2 = Fraction(t1), Fraction(t2)
        bound = abs(self.t1) * P1.bound + abs(self.t2) * P2.bound
        super().__init__(P1, P2, bound, f"linear({t1},{P1.name},{t2},{P2.name})")

    def _combine(self, va: Fraction, vb: Fraction) -> Fraction:
        return self.t1 * va + self.t2 * vb


class CondQuotientEstimator(CombinatorEstimator):
    """P_chif / P_L clamped into [-M, M]; the zero-denominator case maps to +M."""

    def __init__(self, P_L: Estimator, P_chif: Estimator, M: Fraction):
        self.M = Fraction(M)
        super().__init__(P_L, P_chif, self.M, f"cond({P_L.name},{P_chif.name})")

    def _combine(self, v_l: Fraction, v_chif: Fraction) -> Fraction:
        if v_l == 0:
            return self.M
        q = v_chif / v_l
        if q > self.M:
            return self.M
        if q < -self.M:
            return -self.M
        return q


class ChiProductEstimator(CombinatorEstimator):
    def __init__(self, P_L: Estimator, P_f_given_L: Estimator):
        bound = P_L.bound * P_f_given_L.bound
        super().__init__(P_L, P_f_given_L, bound, f"chiprod({P_L.name},{P_f_given_L.name})")

    def _combine(self, v_l: Fraction, v_f: Fraction) -> Fraction:
        return v_l * v_f


class ClipBetweenEstimator(CombinatorEstimator):
    """min(max(P_chif, P_L * s), P_L * t); coins split in argument order."""

    def __init__(self, P_chif: Estimator, P_L: Estimator, s: Fraction, t: Fraction):
        self.s, self.t = Fraction(s), Fraction(t)
        if self.s > self.t:
            raise ValueError("clip needs s <= t")
        bound = max(P_chif.bound, P_L.bound * max(abs(self.s), abs(self.t)))
        super().__init__(P_chif, P_L, bound, f"clip({P_chif.name},{P_L.name})")

    def _combine(self, v_chif: Fraction, v_l: Fraction) -> Fraction:
        return min(max(v_chif, v_l * self.s), v_l * self.t)


class ProductEstimator(CombinatorEstimator):
    """Component-wise product on pair words <x1, x2>.

    Words that do not parse as pairs evaluate both components on the
    empty word; this keeps the estimator total without touching any
    expectation over a pair-supported ensemble.
    """

    def __init__(self, P1: Estimator, P2: Estimator):
        super().__init__(P1, P2, P1.bound * P2.bound, f"product({P1.name},{P2.name})")

    def _part_inputs(self, x: Word) -> Tuple[Word, Word]:
        try:
            parts = chev_decode(x)
        except DecodeError:
            return "", ""
        if len(parts) != 2:
            return "", ""
        return parts[0], parts[1]

    def _combine(self, va: Fraction, vb: Fraction) -> Fraction:
        return va * vb


def linear_combine(t1, P1: Estimator, t2, P2: Estimator) -> LinearEstimator:
    return LinearEstimator(t1, P1, t2, P2)


def conditional_quotient(P_L: Estimator, P_chif: Estimator, M) -> CondQuotientEstimator:
    return CondQuotientEstimator(P_L, P_chif, M)


def chi_product(P_L: Estimator, P_f_given_L: Estimator) -> ChiProductEstimator:
    return ChiProductEstimator(P_L, P_f_given_L)


def clip_between(P_chif: Estimator, P_L: Estimator, s, t) -> ClipBetweenEstimator:
    return ClipBetweenEstimator(P_chif, P_L, s, t)


def product_estimator(P1: Estimator, P2: Estimator) -> ProductEstimator:
    return ProductEstimator(P1, P2)

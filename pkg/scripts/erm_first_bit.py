#!/usr/bin/env python3
"""Select empirical-risk-minimizing programs for the first-bit problem
across a resource grid and print the audit trail plus the regret curve.

Usage: python scripts/erm_first_bit.py [--seed N] [--k0 N]
"""

import argparse
import sys
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from opte.constructions import DEFAULT_POLICY, build_erm_estimator, zoo_make
from opte.core import IndexK, exact_sq_error
from opte.harness import ProgramClass, regret_curve


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k0", type=int, default=8)
    args = ap.parse_args()

    entry = zoo_make("first_bit", k0s=(args.k0,))
    erm = build_erm_estimator(entry.sampler, bound_M=Fraction(1),
                              selection_seed=args.seed)
    k1s = [30, 126, 510, 1022, 2046, 4094]

    print("K0\tK1\tl\tprogram\temp_risk\texact_error")
    for k1 in k1s:
        K = IndexK(args.k0, k1)
        code, risk = erm.selection(K)
        err = exact_sq_error(erm, entry.problem, K)
        print(f"{K.k0}\t{K.k1}\t{DEFAULT_POLICY.program_len(K)}\t"
              f"{code or '-'}\t{risk!r}\t{err!r}")

    curve = regret_curve(
        lambda K: erm, entry.problem, args.k0, k1s,
        lambda K: ProgramClass(max_code_bits=DEFAULT_POLICY.program_len(K)),
    )
    print("\nregret curve (K1, regret, partial sum):")
    for (k1, reg), (_, ssum) in zip(curve.rows, curve.partial_sums()):
        print(f"{k1}\t{reg!r}\t{ssum!r}")
    print(f"fitted log-log bound constant: {curve.fitted_bound_constant()!r}")

    print("\naudit records:")
    for rec in erm.audit:
        print(rec.line())
    return 0


if __name__ == "__main__":
    sys.exit(main())

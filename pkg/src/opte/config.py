"""Experiment configs: line-oriented key=value blocks, estimator
expressions, the (check, K, seed) cell runner, and report emission.

Reports are byte-deterministic given (config, seed): every cell derives
its own stream from the experiment seed and the cell coordinates, cells
are assembled in declaration order regardless of worker count, and
floats are written with repr.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .algebra import (
    chi_product,
    clip_between,
    conditional_quotient,
    linear_combine,
    product_estimator,
)
from .constructions import (
    DEFAULT_POLICY,
    ZooEntry,
    build_advice_argmin_estimator,
    build_erm_estimator,
    zoo_make,
)
from .core import (
    Estimator,
    IndexK,
    NativeConstEstimator,
    conditional_expectation_estimator,
    exact_sq_error,
    mc_sq_error,
)
from .harness import (
    ProgramClass,
    calibration_report,
    constant_grid,
    extract_decider,
    optimality_gap,
    orthogonality_residual,
)
from .rng import RngStream

SCHEMA_VERSION = 1
CSV_HEADER = "check,K0,K1,seed,metric,value,threshold,pass"


class ConfigError(ValueError):
    """Config fails to parse or references unknown names."""


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


@dataclass
class CheckSpec:
    kind: str
    options: Dict[str, str]


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    problem: Dict[str, str]
    estimator_expr: str
    k0s: List[int]
    k1s: List[int]
    seeds: List[int]
    checks: List[CheckSpec]


def parse_config(text: str) -> ExperimentConfig:
    sections: List[Tuple[str, Dict[str, str]]] = []
    current: Optional[Dict[str, str]] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = {}
            sections.append((line[1:-1].strip(), current))
            continue
        if current is None or "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value' inside a section")
        key, _, value = line.partition("=")
        current[key.strip()] = value.strip()

    by_name = {name: opts for name, opts in sections if not name.startswith("check")}
    checks = [CheckSpec(name.split(None, 1)[1], opts)
              for name, opts in sections if name.startswith("check ")]

    try:
        exp = by_name["experiment"]
        problem = by_name["problem"]
        estimator = by_name["estimator"]
        grid = by_name["grid"]
    except KeyError as missing:
        raise ConfigError(f"missing section {missing}")

    def ints(s: str) -> List[int]:
        return [int(tok) for tok in s.split()]

    try:
        cfg = ExperimentConfig(
            name=exp.get("name", "experiment"),
            seed=int(exp.get("seed", "0")),
            problem=problem,
            estimator_expr=estimator["expr"],
            k0s=ints(grid["k0"]),
            k1s=ints(grid["k1"]),
            seeds=ints(grid.get("seeds", "0")),
            checks=checks,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad config field: {exc}")
    if not cfg.k0s or not cfg.k1s or not cfg.seeds:
        raise ConfigError("grid lists must be nonempty")
    for v in cfg.k0s + cfg.k1s:
        if not 0 <= v <= 1 << 20:
            raise ConfigError(f"grid index {v} outside [0, 2^20]")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="ascii"))


# ---------------------------------------------------------------------------
# Problem and estimator resolution
# ---------------------------------------------------------------------------


TARGET_REGISTRY = {
    "first_bit": lambda w: Fraction(int(w[0])) if w else Fraction(0),
    "parity": lambda w: Fraction(w.count("1") % 2),
    "one": lambda w: Fraction(1),
    "length_parity": lambda w: Fraction(len(w) % 2),
}


def build_problem(problem_opts: Dict[str, str]) -> ZooEntry:
    opts = dict(problem_opts)
    if "file" in opts:
        from .core import EstimationProblem, load_ensemble_file

        fname = opts.get("f", "first_bit")
        if fname not in TARGET_REGISTRY:
            raise ConfigError(f"unknown target registry name {fname!r}")
        try:
            ensemble = load_ensemble_file(opts["file"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load ensemble file: {exc}")
        problem = EstimationProblem(
            ensemble, TARGET_REGISTRY[fname],
            Fraction(opts.get("bound", "1")), Path(opts["file"]).stem,
        )
        return ZooEntry(problem, None)
    if "zoo" not in opts:
        raise ConfigError("problem section needs zoo = <name> or file = <path>")
    name = opts.pop("zoo")
    kwargs = {}
    for key, value in opts.items():
        if key in ("n", "k", "nbits"):
            kwargs[key] = int(value)
        elif key == "encoded":
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif key == "table":
            kwargs[key] = {int(tok) for tok in value.split()}
        elif key == "k0s":
            kwargs[key] = tuple(int(tok) for tok in value.split())
        else:
            raise ConfigError(f"unknown problem option {key!r}")
    try:
        return zoo_make(name, **kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build problem {name!r}: {exc}")


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z_0-9]*|-?\d+/\d+|-?\d+(?:\.\d+)?|[(),])")

_ORACLE_MAPS = {
    "identity": lambda w: w,
    "first_bit": lambda w: w[:1],
    "const": lambda w: "",
}


def _tokenize(expr: str) -> List[str]:
    out, i = [], 0
    while i < len(expr):
        m = _TOKEN.match(expr, i)
        if not m:
            raise ConfigError(f"bad estimator expression near {expr[i:i+12]!r}")
        out.append(m.group(1))
        i = m.end()
    return out


def _to_fraction(tok: str) -> Fraction:
    try:
        return Fraction(tok)
    except ValueError:
        raise ConfigError(f"expected a number, got {tok!r}")


@dataclass
class BuildContext:
    entry: ZooEntry
    seed: int
    policy: object = DEFAULT_POLICY


def parse_estimator(expr: str, ctx: BuildContext) -> Estimator:
    tokens = _tokenize(expr)
    pos = 0

    def peek() -> Optional[str]:
        return tokens[pos] if pos < len(tokens) else None

    def take(expected: Optional[str] = None) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ConfigError("truncated estimator expression")
        tok = tokens[pos]
        pos += 1
        if expected is not None and tok != expected:
            raise ConfigError(f"expected {expected!r}, got {tok!r}")
        return tok

    def parse_args() -> List[object]:
        take("(")
        args: List[object] = []
        if peek() == ")":
            take(")")
            return args
        while True:
            args.append(parse_term())
            tok = take()
            if tok == ")":
                return args
            if tok != ",":
                raise ConfigError(f"expected ',' or ')', got {tok!r}")

    def parse_term() -> object:
        tok = take()
        if re.fullmatch(r"-?\d+/\d+|-?\d+(?:\.\d+)?", tok):
            return _to_fraction(tok)
        if peek() != "(":
            return tok  # bare name (oracle map, etc.)
        args = parse_args()
        try:
            return build_node(tok, args)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad arguments for {tok!r}: {exc}")

    def need_estimator(arg: object, what: str) -> Estimator:
        if not isinstance(arg, Estimator):
            raise ConfigError(f"{what} must be an estimator expression")
        return arg

    def build_node(name: str, args: List[object]) -> Estimator:
        prob = ctx.entry.problem
        if name == "const":
            (q,) = args
            q = Fraction(q)
            return NativeConstEstimator(q, bound=max(abs(q), Fraction(1)))
        if name == "erm":
            offset = int(args[0]) if args else 0
            if ctx.entry.sampler is None:
                raise ConfigError("erm() needs a problem with a sampler")
            return build_erm_estimator(
                ctx.entry.sampler, ctx.policy, prob.bound_M,
                selection_seed=ctx.seed + offset,
            )
        if name == "advice_argmin":
            return build_advice_argmin_estimator(prob)
        if name == "oracle":
            map_name = args[0] if args else "identity"
            if map_name not in _ORACLE_MAPS:
                raise ConfigError(f"unknown oracle map {map_name!r}")
            return conditional_expectation_estimator(prob, _ORACLE_MAPS[map_name])
        if name == "linear":
            t1, e1, t2, e2 = args
            return linear_combine(Fraction(t1), need_estimator(e1, "linear arg"),
                                  Fraction(t2), need_estimator(e2, "linear arg"))
        if name == "chi_product":
            e1, e2 = args
            return chi_product(need_estimator(e1, "chi_product arg"),
                               need_estimator(e2, "chi_product arg"))
        if name == "cond_quotient":
            e1, e2, m = args
            return conditional_quotient(need_estimator(e1, "cond_quotient arg"),
                                        need_estimator(e2, "cond_quotient arg"), Fraction(m))
        if name == "clip":
            e1, e2, s, t = args
            return clip_between(need_estimator(e1, "clip arg"),
                                need_estimator(e2, "clip arg"), Fraction(s), Fraction(t))
        if name == "product":
            e1, e2 = args
            return product_estimator(need_estimator(e1, "product arg"),
                                     need_estimator(e2, "product arg"))
        raise ConfigError(f"unknown estimator term {name!r}")

    result = parse_term()
    if pos != len(tokens):
        raise ConfigError("trailing tokens in estimator expression")
    return need_estimator(result, "top-level expression")


# ---------------------------------------------------------------------------
# Check execution
# ---------------------------------------------------------------------------


@dataclass
class Row:
    check: str
    k0: int
    k1: int
    seed: int
    metric: str
    value: float
    threshold: float
    passed: bool

    def csv(self) -> str:
        return ",".join([
            self.check, str(self.k0), str(self.k1), str(self.seed), self.metric,
            repr(float(self.value)), repr(float(self.threshold)), str(self.passed),
        ])


def _parse_buckets(spec: str) -> List[Tuple[float, float]]:
    out = []
    for tok in spec.split():
        lo, _, hi = tok.partition(":")
        out.append((float(lo), float(hi)))
    return out


def run_check(check: CheckSpec, entry: ZooEntry, P: Estimator, K: IndexK,
              seed: int, rng: RngStream) -> List[Row]:
    prob = entry.problem
    opts = check.options
    rows: List[Row] = []

    def row(metric: str, value: float, threshold: float, passed: bool):
        rows.append(Row(check.kind, K.k0, K.k1, seed, metric, value, threshold, passed))

    if check.kind == "exact_error":
        thr = float(opts.get("threshold", "inf"))
        err = exact_sq_error(P, prob, K)
        row("exact_sq_error", err, thr, err <= thr)
    elif check.kind == "mc_error":
        n = int(opts.get("n", "1000"))
        thr = float(opts.get("threshold", "inf"))
        sigmas = float(opts.get("sigmas", "3"))
        mean, stderr = mc_sq_error(P, prob, K, n, rng.child("mc"))
        row("mc_sq_error", mean, thr + sigmas * stderr, mean <= thr + sigmas * stderr)
    elif check.kind == "calibration":
        buckets = _parse_buckets(opts["buckets"])
        mode = opts.get("mode", "exact")
        rep = calibration_report(
            P, prob, K, buckets,
            mode=mode,
            n=int(opts.get("n", "0")),
            rng=rng.child("calibration"),
            alpha_min=float(opts.get("alpha_min", "0.05")),
            stat_tol=float(opts.get("stat_tol", "0")),
        )
        for i, b in enumerate(rep.buckets):
            metric = f"bucket{i}_mean"
            if b.evaluated:
                row(metric, b.mean, b.bound, bool(b.passed))
            else:
                row(metric, math.nan, math.inf, True)
        row("all_buckets", 1.0 if rep.passed else 0.0, 0.5, rep.passed)
    elif check.kind == "orthogonality":
        thr = float(opts.get("threshold", "1e-9"))
        tests = []
        for name in opts.get("tests", "one").split():
            if name == "one":
                tests.append(("one", lambda w, v: 1.0))
            elif name == "value":
                tests.append(("value", lambda w, v: v))
            elif name == "first1":
                tests.append(("first1", lambda w, v: 1.0 if w[:1] == "1" else 0.0))
            else:
                raise ConfigError(f"unknown orthogonality test {name!r}")
        rep = orthogonality_residual(P, prob, K, tests)
        for name, resid in rep.rows:
            row(f"residual[{name}]", resid, thr, abs(resid) <= thr)
    elif check.kind == "gap":
        thr = float(opts.get("threshold", "0"))
        comp = opts.get("competitors", "programs:5")
        kind, _, arg = comp.partition(":")
        if kind == "programs":
            competitors = ProgramClass(max_code_bits=int(arg))
        elif kind == "constants":
            competitors = constant_grid(Fraction(arg), prob.bound_M)
        else:
            raise ConfigError(f"unknown competitor family {comp!r}")
        rep = optimality_gap(P, prob, K, competitors)
        row("gap", rep.gap, thr, rep.gap <= thr)
    elif check.kind == "decider":
        n = int(opts.get("n", "1000"))
        if entry.sampler is None:
            raise ConfigError("decider check needs a problem with a sampler")
        _, rep = extract_decider(entry.sampler, P, K, prob, n, rng.child("decider"))
        row("failure_rate", rep.failure_rate, rep.bound, rep.passed)
    else:
        raise ConfigError(f"unknown check kind {check.kind!r}")
    return rows


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    exit_code: int
    rows: List[Row]
    csv_path: Optional[Path]
    json_path: Optional[Path]


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str = ".",
    jobs: int = 1,
    seed_override: Optional[int] = None,
) -> ExperimentResult:
    seed = cfg.seed if seed_override is None else seed_override
    entry = build_problem(cfg.problem)

    cells = []
    for ci, check in enumerate(cfg.checks):
        for k0 in cfg.k0s:
            for k1 in cfg.k1s:
                for s in cfg.seeds:
                    cells.append((ci, check, IndexK(k0, k1), s))

    def run_cell(cell) -> Tuple[List[Row], List[str]]:
        ci, check, K, s = cell
        rng = RngStream(seed, ("cell", ci, K.k0, K.k1, s))
        ctx = BuildContext(entry=entry, seed=s)
        P = parse_estimator(cfg.estimator_expr, ctx)
        rows = run_check(check, entry, P, K, s, rng)
        audit = [rec.line() for rec in getattr(P, "audit", [])]
        return rows, audit

    if jobs > 1 and cells:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]
    rows = [r for cell_rows, _ in results for r in cell_rows]
    audit_lines = [line for _, lines in results for line in lines]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.name}.csv"
    csv_path.write_text("\n".join([CSV_HEADER] + [r.csv() for r in rows]) + "\n",
                        encoding="ascii")
    if audit_lines:
        with (out / f"{cfg.name}.audit").open("a", encoding="ascii") as fh:
            for line in audit_lines:
                fh.write(line + "\n")

    failures = sum(1 for r in rows if not r.passed)
    per_check: Dict[str, bool] = {}
    for r in rows:
        per_check[r.check] = per_check.get(r.check, True) and r.passed
    summary = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "seed": seed,
        "n_rows": len(rows),
        "n_failures": failures,
        "checks": per_check,
        "all_pass": failures == 0,
    }
    json_path = out / f"{cfg.name}.json"
    json_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n",
                         encoding="ascii")
    return ExperimentResult(0 if failures == 0 else 1, rows, csv_path, json_path)

"""Command line front end: experiment runner, reduction verifier, zoo
listing, and a machine trace dumper.

Exit codes: 0 all checks pass, 1 check failures, 2 config or usage
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import vm
from .config import ConfigError, build_problem, load_config, run_experiment
from .constructions import zoo_names
from .core import IndexK
from .reductions import (
    CompleteProblemSpec,
    ConstructionError,
    build_canonical_reduction,
    build_complete_problem,
    identity_reduction,
    relabel_reduction,
    verify_reduction,
)


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_experiment(cfg, out_dir=args.out_dir, jobs=args.jobs,
                                seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.format == "json":
        print(result.json_path.read_text(), end="")
    else:
        print(f"wrote {result.csv_path} and {result.json_path}")
        n_fail = sum(1 for r in result.rows if not r.passed)
        print(f"{len(result.rows)} rows, {n_fail} failures")
    return result.exit_code


def _parse_sections(path: str):
    text = Path(path).read_text(encoding="ascii")
    sections = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = {}
            sections[line[1:-1].strip()] = current
        elif current is not None and "=" in line:
            k, _, v = line.partition("=")
            current[k.strip()] = v.strip()
    return sections


def _cmd_verify_reduction(args) -> int:
    try:
        sections = _parse_sections(args.config)
        red_opts = sections["reduction"]
        grid = sections.get("grid", {"k0": "2", "k1": "6"})
        thresholds = {k: float(v) for k, v in sections.get("thresholds", {}).items()}
        kind = red_opts.get("kind", "identity")
        entry = build_problem(sections["source"])
        source = entry.problem

        if kind == "identity":
            red = identity_reduction()
            target = source
        elif kind == "relabel":
            red = relabel_reduction(lambda x: "1" + x, lambda y: y[1:])
            from .core import EstimationProblem, FixedTableEnsemble

            tables = {}
            for k0 in [int(t) for t in grid["k0"].split()]:
                for k1 in [int(t) for t in grid["k1"].split()]:
                    K = IndexK(k0, k1)
                    tables[(k0, k1)] = [("1" + w, p)
                                        for w, p in source.ensemble.support_table(K)]
            target = EstimationProblem(
                FixedTableEnsemble(tables), lambda y: source.f(y[1:]), source.bound_M
            )
        elif kind == "canonical":
            phi = red_opts.get("phi", "1")
            r = int(red_opts.get("r", "10"))
            s = int(red_opts.get("s", "10"))
            spec = CompleteProblemSpec(
                f_eval=lambda p, k, x: Fraction(int(x[0])) if x else Fraction(0),
                registry=frozenset({phi}),
                bound=Fraction(1),
                r=lambda K: r,
                s=lambda K: s,
            )
            target, _ = build_complete_problem(spec)
            red, _ = build_canonical_reduction(source, entry.sampler, phi, (0, 1), spec)
        else:
            print(f"unknown reduction kind {kind!r}", file=sys.stderr)
            return 2
    except (KeyError, OSError, ConfigError, ConstructionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    all_pass = True
    for k0 in [int(t) for t in grid["k0"].split()]:
        for k1 in [int(t) for t in grid["k1"].split()]:
            rep = verify_reduction(red, source, target, IndexK(k0, k1),
                                   thresholds=thresholds or None)
            print(json.dumps(rep.to_json_dict(), sort_keys=True))
            all_pass = all_pass and rep.passed
    return 0 if all_pass else 1


def _cmd_zoo(args) -> int:
    if args.action == "list":
        for name in zoo_names():
            print(name)
        return 0
    print(f"unknown zoo action {args.action!r}", file=sys.stderr)
    return 2


def _cmd_vm_trace(args) -> int:
    program = args.program
    if program == "-":
        program = ""
    if program.strip("01"):
        print("program must be a bit string", file=sys.stderr)
        return 2
    lines = []
    result = vm.eval(
        program, args.budget, args.inputs,
        trace=lambda step, pc, op, depth: lines.append(f"{step}\t{pc}\t{op}\t{depth}"),
    )
    for line in lines:
        print(line)
    print(f"output={result.output or '-'} halted={result.halted} steps={result.steps_used}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="opte",
                                     description="optimal-estimator experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out-dir", default=".")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.set_defaults(fn=_cmd_run)

    p_ver = sub.add_parser("verify-reduction", help="verify a reduction config")
    p_ver.add_argument("config")
    p_ver.set_defaults(fn=_cmd_verify_reduction)

    p_zoo = sub.add_parser("zoo", help="problem zoo utilities")
    p_zoo.add_argument("action", choices=("list",))
    p_zoo.set_defaults(fn=_cmd_zoo)

    p_vm = sub.add_parser("vm", help="machine utilities")
    vm_sub = p_vm.add_subparsers(dest="vm_command", required=True)
    p_trace = vm_sub.add_parser("trace", help="dump a per-step trace")
    p_trace.add_argument("program")
    p_trace.add_argument("budget", type=int)
    p_trace.add_argument("inputs", nargs="*")
    p_trace.set_defaults(fn=_cmd_vm_trace)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

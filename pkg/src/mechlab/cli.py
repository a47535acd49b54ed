"""Command-line entry point: solve, run, audit, sweep and probe.

Exit codes: 0 clean, 1 findings (violations, ratios below their floor,
failed sweep entries), 2 bad input, 3 size guard, 4 mechanism not
applicable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from fractions import Fraction
from math import lcm

from .audit import (
    SP_MODES,
    SP_SEMANTICS,
    audit_instance,
    lower_bound_probe,
    run_sweep,
)
from .core import (
    InstanceFormatError,
    InstanceTooLargeError,
    MechlabError,
    NotApplicableError,
    fractional_greedy,
    solve_opt,
    to_rational,
)
from .general import MECHANISM_NAMES, MechanismId, ratio_floor, run_mechanism
from .instances import (
    CATALOG_NAMES,
    GENERATOR_KINDS,
    GeneratorSpec,
    generate,
    loads_instance,
    paper_instance,
    read_instance,
)
from .unit_density import check_beta

EXIT_OK, EXIT_FINDINGS, EXIT_INPUT, EXIT_SIZE, EXIT_NOT_APPLICABLE = 0, 1, 2, 3, 4

CSV_COLUMNS = (
    "instance_id", "mechanism", "beta", "sp_mode", "sp_semantics", "violations",
    "worst_gain", "mech_value", "opt_value", "ratio", "degenerate_flag",
)
PROBE_COLUMNS = (
    "mechanism", "family", "k", "epsilon", "phi_k", "ratio_E", "ratio_E_prime", "min_ratio",
    "sp_linkage_ok", "ceiling", "floor", "degenerate_flag",
)


class UsageError(MechlabError):
    pass


def q(x) -> str:
    """Rational as "p/q" (or "p"); empty for missing values."""
    return "" if x is None else str(x)


def approx(x) -> str:
    return "" if x is None else f"{float(x):.6g}"


def human(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, Fraction) and x.denominator != 1:
        return f"{x} (~{approx(x)})"
    return str(x)


# --- argument handling ----------------------------------------------------

def _kind(text):
    return text.replace("-", "_")


def _source_args(p):
    g = p.add_argument_group("instance source (exactly one)")
    g.add_argument("--file", help="instance JSON file ('-' for stdin)")
    g.add_argument("--catalog", help=f"named instance: {', '.join(CATALOG_NAMES)}")
    g.add_argument("--kind", type=_kind, help=f"generator kind: {', '.join(GENERATOR_KINDS)}")
    g.add_argument("--index", type=int, help="instance index within the generator stream (with --kind)")


def _generator_args(p, count_default=None):
    g = p.add_argument_group("generator")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--min-items", type=int, default=1)
    g.add_argument("--max-items", type=int, default=7)
    g.add_argument("--min-agents", type=int, default=1)
    g.add_argument("--max-agents", type=int, default=3)
    g.add_argument("--max-value", default="10")
    g.add_argument("--max-size", default="10")
    g.add_argument("--max-denominator", type=int, default=64)
    g.add_argument("--capacity-rule", default="uniform", help="uniform | fixed:p/q | fraction:p/q")


def _format_arg(p):
    p.add_argument("--format", choices=("json", "csv", "human"), default="human")


def _audit_args(p):
    p.add_argument("--mode", type=_kind, default="full_subsets", choices=SP_MODES)
    p.add_argument("--semantics", type=_kind, default="universal", choices=SP_SEMANTICS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mechlab",
        description="Strategyproof knapsack mechanisms over exact rationals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact optimum and fractional greedy solution")
    _source_args(p)
    _generator_args(p)
    _format_arg(p)

    p = sub.add_parser("run", help="run one mechanism and show its outcome distribution")
    _source_args(p)
    _generator_args(p)
    _format_arg(p)
    p.add_argument("--mechanism", required=True, help=f"one of {', '.join(MECHANISM_NAMES)}; fit_two:p/q")
    p.add_argument("--beta", help="beta for fit_two (alternative to the name:p/q form)")
    p.add_argument("--sample", type=int, default=0, help="also draw N outcomes from the lottery")

    p = sub.add_parser("audit", help="strategyproofness and approximation audit of one instance")
    _source_args(p)
    _generator_args(p)
    _format_arg(p)
    _audit_args(p)
    p.add_argument("--mechanism", "--mechanisms", dest="mechanisms", required=True,
                   help="comma-separated mechanism list")

    p = sub.add_parser("sweep", help="audit a seeded stream of generated instances")
    _generator_args(p)
    _format_arg(p)
    _audit_args(p)
    p.add_argument("--kind", type=_kind, default="general_random", choices=GENERATOR_KINDS)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--mechanisms", "--mechanism", dest="mechanisms", required=True,
                   help="comma-separated mechanism list")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")

    p = sub.add_parser("probe", help="run a mechanism on a lower-bound witness pair")
    _format_arg(p)
    p.add_argument("--mechanism", required=True)
    p.add_argument("--family", choices=("det", "rand"), required=True)
    p.add_argument("--k", type=int, default=16, help="golden ratio approximation index")
    p.add_argument("--epsilon", default="1/1000", help="gap for the det family")
    return parser


def _mechanisms(text: str, beta=None) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if beta is not None and part.replace("-", "_") == "fit_two":
            part = f"fit_two:{beta}"
        try:
            mech = MechanismId.parse(part)
        except (ValueError, TypeError) as exc:
            raise UsageError(str(exc)) from None
        if mech.beta is not None:
            check_beta(mech.beta)
        out.append(mech)
    if not out:
        raise UsageError("no mechanism given")
    return out


def _spec(args, kind=None) -> GeneratorSpec:
    try:
        return GeneratorSpec(
            kind=kind or args.kind,
            min_items=args.min_items,
            max_items=args.max_items,
            min_agents=args.min_agents,
            max_agents=args.max_agents,
            max_value=to_rational(args.max_value),
            max_size=to_rational(args.max_size),
            max_denominator=args.max_denominator,
            capacity_rule=args.capacity_rule,
            seed=args.seed,
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad generator settings: {exc}") from None


def _resolve_instance(args):
    given = [name for name in ("file", "catalog", "kind") if getattr(args, name) is not None]
    if len(given) != 1:
        raise UsageError("give exactly one instance source: --file, --catalog or --kind with --index")
    if args.file is not None:
        if args.file == "-":
            return "stdin", loads_instance(sys.stdin.read())
        return args.file, read_instance(args.file)
    if args.catalog is not None:
        try:
            return args.catalog, paper_instance(args.catalog)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    if args.index is None:
        raise UsageError("--kind needs --index")
    spec = _spec(args)
    return f"{spec.kind}/{spec.seed}/{args.index}", generate(spec, args.index)


# --- report rendering -----------------------------------------------------

def _violation_json(v) -> dict:
    dev = v.deviation
    return {
        "agent": dev.agent,
        "hidden": sorted(dev.hidden),
        "base_items": sorted(dev.base_instance.ids),
        "branch": v.branch,
        "truthful_value": q(v.truthful_value),
        "deviant_value": q(v.deviant_value),
        "gain": q(v.gain),
        "degenerate": v.degenerate,
    }


def report_json(r) -> dict:
    return {
        "instance_id": r.instance_id,
        "mechanism": r.mechanism.name,
        "beta": q(r.mechanism.beta) or None,
        "sp_mode": r.sp_mode,
        "sp_semantics": r.sp_semantics,
        "violations": [_violation_json(v) for v in r.violations],
        "clean_violation_count": len(r.clean_violations),
        "degenerate_violation_count": len(r.degenerate_violations),
        "worst_gain": q(r.worst_gain) if r.error is None else None,
        "mechanism_value": q(r.mechanism_value) or None,
        "opt_value": q(r.opt_value) or None,
        "ratio": q(r.ratio) or None,
        "floor": q(r.floor) or None,
        "degenerate": r.degenerate,
        "error": r.error,
    }


def report_row(r) -> list:
    ok = r.error is None
    return [
        r.instance_id,
        r.mechanism.name,
        q(r.mechanism.beta),
        r.sp_mode or "",
        r.sp_semantics or "",
        str(len(r.violations)) if ok else "",
        q(r.worst_gain) if ok else "",
        q(r.mechanism_value),
        q(r.opt_value),
        q(r.ratio),
        "true" if r.degenerate else "false",
    ]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _report_human(r) -> str:
    lines = [f"{r.instance_id}  {r.mechanism}  [{r.sp_mode}, {r.sp_semantics}]"]
    if r.error is not None:
        lines.append(f"  error: {r.error}")
        return "\n".join(lines)
    lines.append(f"  value {human(r.mechanism_value)}  opt {human(r.opt_value)}  ratio {human(r.ratio)}"
                 f"  floor {human(r.floor)}  {'ok' if r.ratio_ok else 'BELOW FLOOR'}")
    lines.append(f"  violations {len(r.violations)} (degenerate {len(r.degenerate_violations)})"
                 f"{'  degenerate input' if r.degenerate else ''}")
    for v in r.violations:
        dev = v.deviation
        branch = f" [{v.branch}]" if v.branch else ""
        lines.append(f"    agent {dev.agent} hides {sorted(dev.hidden)} from {len(dev.base_instance)} items{branch}: "
                     f"{v.truthful_value} -> {v.deviant_value} (gain {v.gain})")
    return "\n".join(lines)


# --- commands -------------------------------------------------------------

def cmd_solve(args, out) -> int:
    name, inst = _resolve_instance(args)
    opt = solve_opt(inst.items, inst.capacity)
    sol = fractional_greedy(inst)
    packed = sorted(opt.packed)
    if args.format == "json":
        out.write(_dump({
            "instance_id": name,
            "opt": {"items": packed, "values": [q(inst.item(i).value) for i in packed],
                    "value": q(opt.value), "size": q(opt.size)},
            "fractional_greedy": {"order": list(sol.order), "ell": sol.ell,
                                  "x": {str(i): q(sol.x(i)) for i in sol.order},
                                  "value": q(sol.value(inst))},
        }))
    elif args.format == "csv":
        rows = [[i, inst.item(i).owner, q(inst.item(i).value), q(inst.item(i).size), q(sol.x(i)),
                 "1" if i in opt.packed else "0"] for i in sol.order]
        out.write(_csv(("item", "owner", "value", "size", "x", "in_opt"), rows))
    else:
        out.write(f"{name}: {len(inst)} items, {inst.agent_count} agents, capacity {human(inst.capacity)}\n")
        out.write(f"opt value {human(opt.value)}  size {human(opt.size)}  items {packed}\n")
        out.write(f"  packed values: {', '.join(q(inst.item(i).value) for i in packed)}\n")
        out.write(f"fractional greedy value {human(sol.value(inst))}, ell = {sol.ell}\n")
        for i in sol.order:
            it = inst.item(i)
            out.write(f"  item {i}: owner {it.owner} value {q(it.value)} size {q(it.size)} x = {q(sol.x(i))}\n")
    return EXIT_OK


def _sample(dist, n, seed):
    rng = random.Random(seed)
    D = lcm(*(b.probability.denominator for b in dist.branches))
    cum, edges = 0, []
    for b in dist.branches:
        cum += b.probability.numerator * (D // b.probability.denominator)
        edges.append(cum)
    labels = []
    for _ in range(n):
        u = rng.randrange(D)
        labels.append(next(b.label for b, e in zip(dist.branches, edges) if u < e))
    return labels


def cmd_run(args, out) -> int:
    (mech,) = _mechanisms(args.mechanism, args.beta)
    name, inst = _resolve_instance(args)
    dist = run_mechanism(mech, inst)
    opt = solve_opt(inst.items, inst.capacity).value
    expected = dist.expected_value()
    ratio = expected / opt if opt > 0 else Fraction(1)
    per_branch = dist.agent_values(inst)
    expected_agents = [dist.expected_agent_value(inst, a) for a in range(inst.agent_count)]
    samples = _sample(dist, args.sample, args.seed) if args.sample > 0 else []
    if args.format == "json":
        out.write(_dump({
            "instance_id": name,
            "mechanism": mech.name,
            "beta": q(mech.beta) or None,
            "branches": [{"label": b.label, "probability": q(b.probability), "items": sorted(b.outcome.packed),
                          "value": q(b.outcome.value), "agent_values": [q(x) for x in per_branch[b.label]]}
                         for b in dist.branches],
            "expected_value": q(expected),
            "expected_agent_values": [q(x) for x in expected_agents],
            "opt_value": q(opt),
            "ratio": q(ratio),
            "floor": q(ratio_floor(mech, inst)),
            "samples": samples,
        }))
    elif args.format == "csv":
        rows = [[b.label, q(b.probability), " ".join(map(str, sorted(b.outcome.packed))), q(b.outcome.value)]
                + [q(x) for x in per_branch[b.label]] for b in dist.branches]
        header = ["branch", "probability", "items", "value"] + [f"agent_{a}" for a in range(inst.agent_count)]
        out.write(_csv(header, rows))
    else:
        out.write(f"{name}: {mech}\n")
        for b in dist.branches:
            out.write(f"  {b.label}: p = {q(b.probability)}  value {human(b.outcome.value)}  "
                      f"items {sorted(b.outcome.packed)}  per agent "
                      f"[{', '.join(q(x) for x in per_branch[b.label])}]\n")
        out.write(f"expected value {human(expected)}  opt {human(opt)}  ratio {human(ratio)}\n")
        out.write(f"expected per agent [{', '.join(q(x) for x in expected_agents)}]\n")
        if samples:
            out.write(f"samples (seed {args.seed}): {' '.join(samples)}\n")
    return EXIT_OK


def cmd_audit(args, out) -> int:
    mechs = _mechanisms(args.mechanisms)
    name, inst = _resolve_instance(args)
    reports = [audit_instance(m, inst, args.mode, args.semantics, name) for m in mechs]
    if args.format == "json":
        out.write(_dump({"reports": [report_json(r) for r in reports]}))
    elif args.format == "csv":
        out.write(_csv(CSV_COLUMNS, [report_row(r) for r in reports]))
    else:
        out.write("\n".join(_report_human(r) for r in reports) + "\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FINDINGS


def _summary_json(s) -> dict:
    w = s.worst_violation
    return {
        "mechanism": str(s.mechanism),
        "instances": s.instances,
        "errors": s.errors,
        "violations": s.violations,
        "degenerate_violations": s.degenerate_violations,
        "min_ratio": q(s.min_ratio) or None,
        "min_ratio_instance": s.min_ratio_instance,
        "floor_breaches": s.floor_breaches,
        "worst_gain": q(w.gain) if w else None,
        "worst_violation_instance": s.worst_violation_instance,
    }


def cmd_sweep(args, out, err) -> int:
    mechs = _mechanisms(args.mechanisms)
    spec = _spec(args)
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    result = run_sweep(spec, args.count, mechs, args.mode, args.semantics, workers=args.jobs)
    if args.format == "json":
        out.write(_dump({"reports": [report_json(r) for r in result.reports],
                         "summary": [_summary_json(s) for s in result.summary.values()]}))
    elif args.format == "csv":
        out.write(_csv(CSV_COLUMNS, [report_row(r) for r in result.reports]))
    else:
        for s in result.summary.values():
            d = _summary_json(s)
            out.write(f"{d['mechanism']}: {s.instances} instances, {s.errors} errors, {s.violations} violations "
                      f"({s.degenerate_violations} degenerate), min ratio {human(s.min_ratio)} "
                      f"(floor breaches {s.floor_breaches}), worst gain {d['worst_gain'] or '-'}\n")
    for r in result.reports:
        if r.error is not None:
            err.write(f"{r.instance_id} {r.mechanism}: {r.error}\n")
    return EXIT_OK if result.clean else EXIT_FINDINGS


def cmd_probe(args, out) -> int:
    (mech,) = _mechanisms(args.mechanism)
    p = lower_bound_probe(mech, args.family, args.k, to_rational(args.epsilon))
    row = {
        "mechanism": mech.name,
        "beta": q(mech.beta) or None,
        "family": p.family,
        "k": p.k,
        "epsilon": q(p.epsilon) or None,
        "phi_k": q(p.phi_k),
        "ratio_E": q(p.ratio),
        "ratio_E_prime": q(p.deviated_ratio),
        "min_ratio": q(p.min_ratio),
        "sp_linkage_ok": p.sp_linkage_ok,
        "ceiling": q(p.ceiling),
        "ceiling_note": p.ceiling_label,
        "floor": q(p.floor),
        "degenerate_flag": p.degenerate,
    }
    if args.format == "json":
        out.write(_dump(row))
    elif args.format == "csv":
        vals = [row[c] if c != "mechanism" else str(mech) for c in PROBE_COLUMNS]
        out.write(_csv(PROBE_COLUMNS, [["" if v is None else str(v).lower() if isinstance(v, bool) else v
                                        for v in vals]]))
    else:
        out.write(f"{mech} on the {p.family} family, phi_k = {human(p.phi_k)}"
                  f"{'' if p.epsilon is None else f', eps = {p.epsilon}'}\n")
        out.write(f"  E : value {human(p.value)} / opt {human(p.opt_value)} = {human(p.ratio)}\n")
        out.write(f"  E': value {human(p.deviated_value)} / opt {human(p.deviated_opt_value)} = {human(p.deviated_ratio)}\n")
        out.write(f"  min ratio {human(p.min_ratio)}  floor {human(p.floor)}  ceiling {human(p.ceiling)} ({p.ceiling_label})\n")
        out.write(f"  hiding agent: {q(p.agent_value)} on E, {q(p.deviated_agent_value)} on E' "
                  f"({'no gain' if p.sp_linkage_ok else 'GAINS'})"
                  f"{'  degenerate input' if p.degenerate else ''}\n")
    return EXIT_OK if p.sp_linkage_ok and p.min_ratio >= p.floor else EXIT_FINDINGS


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args, out)
        if args.command == "run":
            return cmd_run(args, out)
        if args.command == "audit":
            return cmd_audit(args, out)
        if args.command == "sweep":
            return cmd_sweep(args, out, err)
        return cmd_probe(args, out)
    except NotApplicableError as exc:
        err.write(f"mechlab: not applicable: {exc}\n")
        return EXIT_NOT_APPLICABLE
    except InstanceTooLargeError as exc:
        err.write(f"mechlab: too large: {exc}\n")
        return EXIT_SIZE
    except (InstanceFormatError, UsageError, ValueError, TypeError, OSError) as exc:
        err.write(f"mechlab: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""``netmark`` command line: sign, verify, mutate, bench, simulate.

Exit codes: 0 success / authentic, 1 tampered, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .evalbench import ExperimentPlan, plan_metadata, run_detection_sweep
from .netlist import NetlistError, read_bench, serialize_bench
from .sim import generate_vectors, simulate, write_trace
from .tamper import MutationError, MutationKind, MutationSpec, digest_protection, mutate
from .watermark import CrpDatabase, Verdict, WatermarkConfig, authenticate, circuit_id, sign

EXIT_OK, EXIT_TAMPERED, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("netmark")


class UsageError(Exception):
    pass


def _read(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    try:
        return read_bench(p)
    except NetlistError as exc:
        raise UsageError(f"{p}: {exc}") from None


def _emit(args, human: str, doc: dict) -> None:
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(human)


def cmd_sign(args) -> int:
    netlist = _read(args.input)
    cfg = WatermarkConfig(digest_bits=args.digest_bits, group_size=args.group_size,
                          challenges=args.challenges, vectors=args.vectors,
                          threshold=args.threshold, vector_seed=args.vector_seed,
                          cluster_seed=args.cluster_seed, select_seed=args.select_seed,
                          max_iters=args.max_iters, fanin=args.fanin)
    try:
        res = sign(netlist, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    stem = Path(args.input).stem
    out_bench = Path(args.out or f"{stem}.signed.bench")
    out_db = Path(args.db or f"{stem}.crp.json")
    out_bench.write_text(serialize_bench(res.watermarked))
    res.db.save(out_db)
    if args.sensitive:
        Path(args.sensitive).write_text(res.sensitive.to_json(netlist))
    delta = res.gates_after - res.gates_before
    human = (f"gates: {res.gates_before} -> {res.gates_after} ({delta:+d})\n"
             f"seeds: vector={cfg.vector_seed} cluster={cfg.cluster_seed} select={cfg.select_seed}\n"
             f"wrote {out_bench} and {out_db} ({len(res.db)} challenges, {cfg.digest_bits}-bit digest)")
    _emit(args, human, {"gates_before": res.gates_before, "gates_after": res.gates_after,
                        "delta": delta, "bench": str(out_bench), "db": str(out_db),
                        "config": cfg.as_dict(),
                        "sensitive_nets": [netlist.net_names[n] for n in res.sensitive.nets]})
    return EXIT_OK


def cmd_verify(args) -> int:
    netlist = _read(args.input)
    try:
        db = CrpDatabase.load(args.db)
    except FileNotFoundError:
        raise UsageError(f"database not found: {args.db}") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{args.db}: malformed database ({exc})") from None
    if circuit_id(netlist) != db.circuit_id:
        print("warning: circuit_id differs from the database; verifying on challenges",
              file=sys.stderr)
    report = authenticate(netlist, db)
    s = report.summary()
    human = (f"verdict: {s['verdict']}\n"
             f"entries: {s['entries_mismatched']}/{s['entries_checked']} mismatched, "
             f"max {s['max_bit_mismatch']} of {db.digest_bits} bits, "
             f"mean fraction {s['mean_mismatch_fraction']:.4f}\n"
             f"estimated modification: {s['estimate']}")
    for issue in report.structural_issues:
        human += f"\nstructural: {issue}"
    _emit(args, human, report.to_dict() if args.entries else s)
    return EXIT_OK if report.verdict is Verdict.AUTHENTIC else EXIT_TAMPERED


def cmd_mutate(args) -> int:
    netlist = _read(args.input)
    protected = frozenset() if args.unprotected else digest_protection(netlist)
    try:
        spec = MutationSpec(MutationKind.parse(args.kind), args.magnitude, args.seed, protected)
        mutated, record = mutate(netlist, spec)
    except (ValueError, MutationError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out or f"{Path(args.input).stem}.mutated.bench")
    out.write_text(serialize_bench(mutated))
    if args.record:
        Path(args.record).write_text(record.to_jsonl())
    human = f"{len(record)} edits ({record.touched_gates} gates touched), wrote {out}"
    _emit(args, human, {"edits": [e.as_dict() for e in record.edits], "out": str(out)})
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        plan = ExperimentPlan.from_json(args.plan)
    except FileNotFoundError:
        raise UsageError(f"plan not found: {args.plan}") from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{args.plan}: {exc}") from None
    if args.trials:
        plan.trials = args.trials
    plan.timing = plan.timing or args.timing
    out = Path(args.out or plan.output or "results.csv")
    table = run_detection_sweep(
        plan, progress=lambda b, d, k, m: log.info("done %s d=%d %s m=%d", b, d, k, m))
    table.write(out)
    meta = plan_metadata(plan)
    meta["failures"] = table.failures
    out.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    human = f"wrote {out} ({len(table.rows)} rows)"
    if table.failures:
        human += "\nfailures: " + ", ".join(f"{k}: {v}" for k, v in table.failures.items())
    _emit(args, human, {"csv": str(out), "rows": len(table.rows), "failures": table.failures})
    return EXIT_OK


def cmd_simulate(args) -> int:
    netlist = _read(args.input)
    vectors = generate_vectors(netlist, args.vectors, args.seed)
    trace = simulate(netlist, vectors)
    if args.dump:
        write_trace(args.dump, trace)
    names = netlist.net_names
    if args.nets:
        cols = [netlist.net(n) for n in args.nets.split(",")]
    else:
        cols = list(netlist.effective_inputs) + list(netlist.effective_outputs)
    table = trace.to_array()[:, cols]
    if args.json:
        print(json.dumps({"seed": args.seed, "nets": [names[c] for c in cols],
                          "rows": ["".join("1" if b else "0" for b in r) for r in table]}))
    else:
        print("# seed", args.seed)
        print(" ".join(names[c] for c in cols))
        for r in table:
            print(" ".join("1" if b else "0" for b in r))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="netmark", description=__doc__, formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--threads", type=int, default=0, help="kernel worker threads (0 = auto)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    d = WatermarkConfig()
    s = sub.add_parser("sign", help="insert digest logic and build the CRP database",
                       formatter_class=fmt)
    s.add_argument("--in", dest="input", required=True, help=".bench netlist")
    s.add_argument("--out", help="watermarked .bench (default <stem>.signed.bench)")
    s.add_argument("--db", help="CRP database JSON (default <stem>.crp.json)")
    s.add_argument("--sensitive", help="also write the sensitive-net audit JSON here")
    s.add_argument("--digest-bits", type=int, default=d.digest_bits)
    s.add_argument("--group-size", type=int, default=d.group_size,
                   help="sensitive nets per digest bit (k = digest-bits * group-size)")
    s.add_argument("--challenges", type=int, default=d.challenges)
    s.add_argument("--vectors", type=int, default=d.vectors, help="random vectors simulated")
    s.add_argument("--threshold", type=float, default=d.threshold,
                   help="fraction of each cluster forming the random pick pool")
    s.add_argument("--vector-seed", type=int, default=d.vector_seed)
    s.add_argument("--cluster-seed", type=int, default=d.cluster_seed)
    s.add_argument("--select-seed", type=int, default=d.select_seed)
    s.add_argument("--max-iters", type=int, default=d.max_iters)
    s.add_argument("--fanin", choices=("cone", "immediate"), default=d.fanin)
    s.set_defaults(func=cmd_sign)

    v = sub.add_parser("verify", help="authenticate a netlist against a CRP database",
                       formatter_class=fmt)
    v.add_argument("--in", dest="input", required=True)
    v.add_argument("--db", required=True)
    v.add_argument("--entries", action="store_true", help="include per-entry detail in --json")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("mutate", help="inject seeded structural modifications",
                       formatter_class=fmt)
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--out", help="default <stem>.mutated.bench")
    m.add_argument("--kind", default="mixed",
                   choices=[k.value for k in MutationKind])
    m.add_argument("--magnitude", type=int, default=5)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--record", help="write the edit log as JSON lines")
    m.add_argument("--unprotected", action="store_true",
                   help="allow edits to SIGNED_DIGEST_* logic")
    m.set_defaults(func=cmd_mutate)

    b = sub.add_parser("bench", help="run a detection sweep from a JSON plan",
                       formatter_class=fmt)
    b.add_argument("--plan", required=True)
    b.add_argument("--out", help="CSV path (default: plan 'output' or results.csv)")
    b.add_argument("--trials", type=int, default=0, help="override the plan's trial count")
    b.add_argument("--timing", action="store_true",
                   help="fill the seconds column (makes output non-reproducible)")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("simulate", help="simulate random vectors and print traces",
                       formatter_class=fmt)
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--vectors", type=int, default=16)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--nets", help="comma-separated net names (default: inputs and outputs)")
    t.add_argument("--dump", help="write the binary trace dump here")
    t.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    _kernels.set_threads(args.threads)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

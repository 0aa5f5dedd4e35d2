"""Command-line entry point: ``osdp-kit <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import audit, data, experiments
from .core import Policy, RecordDomain, load_policy
from .mechanisms import MECHANISM_IDS, SplitHistogram, release
from .metrics import all_measures
from .noise import RngStream


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(float(x)) for x in s.split(",") if x.strip()]


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=None, help="64-bit master seed (default 0)")
    p.add_argument("--trials", type=int, default=None, help="runs per cell")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None, help="key = value config file")


def _config(args, **extra) -> experiments.ExperimentConfig:
    over = {"seed": args.seed, "trials": args.trials, "out": args.out, **extra}
    if args.config:
        return experiments.ExperimentConfig.from_file(args.config, **over)
    return experiments.ExperimentConfig.from_text("", **over)


def _out(args, default: str) -> Path:
    p = Path(args.out or default)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_gen_data(args) -> int:
    out = _out(args, "data")
    root = RngStream(args.seed or 0)
    if args.kind == "trajectories":
        trajs = data.gen_trajectories(args.users, args.days, root.fork("trajectories"), locations=args.locations)
        data.save_trajectories(trajs, out / "trajectories.csv")
        print(f"wrote {len(trajs)} trajectories to {out / 'trajectories.csv'}")
        return 0
    names = list(data.BENCHMARK_PROFILES) if args.dataset == "all" else args.dataset.split(",")
    for name in names:
        h = data.benchmark_histogram(name, root.fork("data", name), args.d)
        data.save_histogram(h, out / f"{name}.csv")
        print(f"{name}: d={h.d} scale={h.scale} sparsity={h.sparsity:.4f}")
    return 0


def cmd_gen_policy(args) -> int:
    out = _out(args, "data")
    root = RngStream(args.seed or 0)
    if args.trajectories:
        trajs = data.load_trajectories(args.trajectories)
        tp = data.policy_rho(trajs, args.rho_x, args.locations)
        path = out / f"locations_{tp.policy.label}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["value", "class"])
            for loc in range(args.locations):
                w.writerow([loc, 0 if loc in tp.sensitive_locations else 1])
        print(f"{len(tp.sensitive_locations)} sensitive locations, non-sensitive share {tp.achieved_ratio:.4f}")
        return 0
    if args.input is None:
        raise SystemExit("gen-policy needs --input <histogram.csv> or --trajectories <file>")
    h = data.load_histogram(args.input)
    sh = data.make_split(h, args.sampler, args.rho_x, root.fork("split", Path(args.input).stem, args.sampler, args.rho_x))
    path = out / f"{Path(args.input).stem}_{args.sampler}_{args.rho_x:g}_ns.csv"
    data.save_histogram(sh.non_sensitive, path)
    print(f"wrote {path}; non-sensitive share {sh.ns_ratio:.4f}{' (clipped)' if sh.clipped else ''}")
    return 0


def _params(pairs) -> dict:
    out = {}
    for item in pairs or ():
        k, _, v = item.partition("=")
        try:
            out[k] = float(v)
        except ValueError:
            out[k] = {"true": True, "false": False}.get(v.lower(), v)
    return out


def cmd_run(args) -> int:
    h = data.load_histogram(args.input)
    ns = data.load_histogram(args.ns) if args.ns else h
    sh = SplitHistogram.from_counts(h.counts, ns.counts)
    rng = RngStream(args.seed or 0).fork("run", args.mech, args.eps)
    rel = release(args.mech, sh, args.eps, rng, **_params(args.param))
    out = _out(args, "results")
    with (out / "release.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "estimate"])
        for i, v in enumerate(rel.estimates):
            w.writerow([i, repr(float(v))])
    report = {"mechanism": rel.mechanism, "spend": rel.spend.to_dict(), "rng": rel.seed_path,
              "errors": all_measures(h.counts, rel.estimates)}
    print(json.dumps(report, indent=2))
    return 0


def cmd_bench(args) -> int:
    extra = {}
    if args.workers is not None:
        extra["workers"] = args.workers
    res = experiments.run_bench(_config(args, **extra))
    m = res.manifest
    print(f"{m['n_inputs']} inputs, {len(res.errors)} error rows, {len(m['failures'])} failures")
    for row in m["average_regret"]:
        print(f"  {row['group']:<14} {row['algorithm']:<16} {row['measure']:<6} {row['value']}")
    return 0


def cmd_ngram(args) -> int:
    rows = experiments.run_ngram(_config(args))
    for r in rows:
        print(f"{r.policy:<6} {r.algorithm:<8} k={r.k:<4} eps={r.epsilon:<6g} mre={r.mre:.4f}")
    return 0


def cmd_crossover(args) -> int:
    cells = experiments.run_crossover(_ints(args.n), _ints(args.d), _floats(args.eps),
                                      trials=args.trials or 20, seed=args.seed or 0,
                                      out_dir=_out(args, "results"))
    for c in cells:
        flag = "near" if c.near_boundary else ("ok" if c.agrees else "MISS")
        print(f"n={c.n:<9} d={c.d:<7} eps={c.epsilon:<5g} predicted={c.predicted:<8} empirical={c.empirical:<8} {flag}")
    print(f"agreement away from boundary: {experiments.agreement_rate(cells):.3f}")
    return 0


def _audit_policy(args) -> Policy:
    if args.policy and Path(args.policy).exists():
        p = load_policy(args.policy)
        if args.domain_size and len(p.domain) != args.domain_size:
            raise SystemExit(f"policy file has {len(p.domain)} values, --domain-size says {args.domain_size}")
        return p
    if args.domain_size is None:
        raise SystemExit("--domain-size is required unless --policy names a policy file")
    domain = RecordDomain.range(args.domain_size)
    if args.policy in (None, "all"):
        return Policy.all_sensitive(domain)
    return Policy.from_sensitive(domain, [s.strip() for s in args.policy.split(",") if s.strip()])


def cmd_audit(args) -> int:
    p = _audit_policy(args)
    params = {}
    if args.mech == "suppress":
        param = args.tau if args.tau is not None else args.eps
    else:
        param = args.eps
    if args.kind == "freedom":
        rep = audit.freedom_ratio(args.mech, p, param, args.db_size, grid_points=args.grid_points,
                                  bound_eps=args.eps if args.mech == "suppress" else None, **params)
    else:
        if args.mech == "suppress":
            params["tau"] = param
        rep = audit.verify_osdp(args.mech, p, args.eps, args.db_size, grid_points=args.grid_points,
                                collect_rows=args.grid_out is not None, **params)
    doc = rep.to_dict()
    if args.grid_out:
        Path(args.grid_out).write_text(json.dumps(rep.rows, indent=1, default=str) + "\n")
    print(json.dumps(doc, indent=2))
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="osdp-kit", description="OSDP toolkit: releases, audits and benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize benchmark histograms or trajectories")
    _common(p)
    p.add_argument("--kind", choices=["histogram", "trajectories"], default="histogram")
    p.add_argument("--dataset", default="all", help="profile name(s), comma-separated, or 'all'")
    p.add_argument("--d", type=int, default=data.BENCHMARK_D)
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--days", type=int, default=4)
    p.add_argument("--locations", type=int, default=data.DEFAULT_LOCATIONS)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-policy", help="derive a non-sensitive histogram or trajectory policy")
    _common(p)
    p.add_argument("--input", help="histogram CSV")
    p.add_argument("--sampler", choices=["close", "far"], default="close")
    p.add_argument("--rho-x", type=float, default=0.5)
    p.add_argument("--trajectories", help="trajectory CSV; writes a location policy instead")
    p.add_argument("--locations", type=int, default=data.DEFAULT_LOCATIONS)
    p.set_defaults(func=cmd_gen_policy)

    p = sub.add_parser("run", help="release one histogram with one mechanism")
    _common(p)
    p.add_argument("--input", required=True, help="full histogram CSV")
    p.add_argument("--ns", help="non-sensitive histogram CSV (default: all records non-sensitive)")
    p.add_argument("--mech", choices=MECHANISM_IDS, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="mechanism parameter, repeatable")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="benchmark sweep: errors.csv, regret.csv, manifest.json")
    _common(p)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ngram", help="n-gram release over synthetic trajectories")
    _common(p)
    p.set_defaults(func=cmd_ngram)

    p = sub.add_parser("crossover", help="Laplace vs OsdpRR winner grid")
    _common(p)
    p.add_argument("--n", default="1000,100000,1000000")
    p.add_argument("--d", default="10,1000,10000")
    p.add_argument("--eps", default="0.1,0.5,1")
    p.set_defaults(func=cmd_crossover)

    p = sub.add_parser("audit", help="exhaustive privacy audit on a tiny domain")
    _common(p)
    p.add_argument("--mech", choices=audit.AUDIT_MECHANISMS, required=True)
    p.add_argument("--policy", help="policy CSV, comma list of sensitive values (v0,v1,...), or 'all'")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--domain-size", type=int)
    p.add_argument("--db-size", type=int, default=1)
    p.add_argument("--tau", type=float)
    p.add_argument("--kind", choices=["osdp", "freedom"], default="osdp")
    p.add_argument("--grid-points", type=int, default=41)
    p.add_argument("--grid-out", help="write every checked (db, neighbor, output, ratio) row as JSON")
    p.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

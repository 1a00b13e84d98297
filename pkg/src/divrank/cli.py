"""Command-line entry points: simulate, verify-properties, oracle, dump-tree."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace

from . import _kernels
from .harness import (ExperimentConfig, build_scenario, emit_csv, load_config_file,
                      run_experiment)
from .inference import brute_force_opt, greedy_ranking, slate_click_prob


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    # every config field is a flag; unset flags fall back to the config file,
    # then to the dataclass defaults
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--scenario", default=None,
                   choices=["two-peak", "crp", "discussion3", "small-two-peak", "custom"])
    p.add_argument("--docs-log2", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--mu0", type=float, default=None)
    p.add_argument("--peak-value", type=float, default=None)
    p.add_argument("--n-peaks", type=int, default=None)
    p.add_argument("--crp-n", type=int, default=None)
    p.add_argument("--crp-theta", type=float, default=None)
    p.add_argument("--slots", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--algos", default=None, help="comma-separated registry names")
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--master-seed", type=int, default=None)
    p.add_argument("--scenario-seed", type=int, default=None)
    p.add_argument("--cadence", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--dedup", action="store_true", default=None)
    p.add_argument("--scenario-file", default=None)


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config_file(args.config, cfg)
    overrides = {}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        overrides[f.name] = tuple(a.strip() for a in v.split(",") if a.strip()) \
            if f.name == "algos" else v
    return replace(cfg, **overrides)


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    errs = cfg.validation_errors()
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    if not cfg.out:
        print("config error: simulate needs --out", file=sys.stderr)
        return 2
    print(f"kernel backend: {_kernels.backend()}")
    print("config: " + ", ".join(f"{f.name}={getattr(cfg, f.name)!r}"
                                 for f in fields(cfg)))
    results = run_experiment(cfg, progress=lambda msg: print(f"  running {msg}"))
    emit_csv(results, cfg.out)
    print(f"wrote {sum(r.rounds.size for r in results)} rows to {cfg.out}")
    return 0


def cmd_verify_properties(args) -> int:
    from .properties import run_property_suites
    n = args.instances
    if args.family == "smoke":
        n = min(n, 10)
    reports = run_property_suites(
        n_instances=n, seed=args.seed, max_leaves=args.max_leaves,
        progress=(lambda m: print(f"  {m}", end="\r", flush=True)) if args.verbose else None)
    ok = True
    for rep in reports.values():
        print(rep.summary())
        for v in rep.violations:
            print(f"    {v}")
        ok = ok and rep.ok
    return 0 if ok else 1


def cmd_oracle(args) -> int:
    cfg = _config_from_args(args)
    cfg = replace(cfg, rounds=1)
    errs = cfg.validation_errors()
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    tree, dist, meta = build_scenario(cfg)
    k = args.k or cfg.slots
    slate, value = brute_force_opt(dist, k)
    greedy = greedy_ranking(dist, k)
    print(f"scenario: {cfg.scenario} ({tree.n_leaves} documents, {k} slots)")
    if meta:
        print(f"meta: {meta}")
    print(f"optimal slate: {slate}  value {value!r}")
    print(f"greedy slate:  {greedy}  value {slate_click_prob(dist, greedy)!r}")
    return 0


def cmd_dump_tree(args) -> int:
    cfg = _config_from_args(args)
    cfg = replace(cfg, rounds=1)
    tree, _dist, _meta = build_scenario(cfg)
    text = tree.to_text()
    if args.tree_out:
        with open(args.tree_out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {tree.n_nodes} nodes to {args.tree_out}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="divrank",
        description="Bandit simulator for learning diverse rankings over tree metrics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run algorithms and write a CSV of curves")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("verify-properties",
                       help="exact correlation/continuity suites on random instances")
    p.add_argument("--family", default="small", choices=["small", "smoke"])
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-leaves", type=int, default=10)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_verify_properties)

    p = sub.add_parser("oracle", help="print exhaustive and greedy offline optima")
    _add_config_flags(p)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("dump-tree", help="serialize the scenario's document tree")
    _add_config_flags(p)
    p.add_argument("--tree-out", default=None)
    p.set_defaults(fn=cmd_dump_tree)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())

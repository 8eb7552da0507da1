"""Command-line experiment runner.

    sdnlb run      --config fig6_line.json --seed 3 --out results/
    sdnlb compare  --config fig6_line.json --algorithms algorithm1,maxweight --seeds 1,2,3,4,5
    sdnlb sweep    --config fig7_intra_dc.json --param arrival_scale --values 1.0,0.88,0.76
    sdnlb validate --config my_topology.json
    sdnlb alloc-debug --q-local 30,60 --q-next 0,0 --budget 30

``--config`` takes a path or the name of a shipped scenario.  Exit status is
0 on success, 1 when a run fails and 2 for usage or configuration errors.
Results go to ``--out``, else $SDNLB_OUT, else ./results.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__, allocator, scenarios
from .flowsim import run_flow_sim, write_fct_csv
from .metrics import write_trace_binary, write_trace_csv
from .model import ConfigError, ScenarioConfig, load_scenario_file, validate_topology
from .sim import run as run_ideal

FLOW_ALGORITHMS = ("heuristic", "ecmp")
SWEEP_PARAMS = {"T": int, "K": float, "arrival_scale": float, "alpha": float}
COMPARE_COLUMNS_VERSION = 1
SWEEP_COLUMNS = ("parameter", "value", "algorithm", "seed", "metric", "result")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)


class UsageError(Exception):
    pass


# --- helpers --------------------------------------------------------------------

def load_config(ref: str) -> ScenarioConfig:
    path = Path(ref)
    if path.is_file():
        return load_scenario_file(path)
    if ref in scenarios.SHIPPED:
        return scenarios.load_shipped(ref)
    raise UsageError(f"config file not found: {ref}")


def out_dir(arg: Optional[str]) -> Path:
    d = Path(arg or os.environ.get("SDNLB_OUT") or "results")
    d.mkdir(parents=True, exist_ok=True)
    return d


def int_list(text: str) -> List[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}")
    return vals


def overrides(cfg: ScenarioConfig, args, **kw) -> ScenarioConfig:
    if getattr(args, "horizon", None) is not None:
        kw["horizon"] = args.horizon
    if getattr(args, "warmup", None) is not None:
        kw["warmup_fraction"] = args.warmup
    return cfg.with_overrides(**kw) if kw else cfg


def execute(cfg: ScenarioConfig, trace: str = "none"):
    """(report, extra) for either simulator; extra is the trace or the flow list."""
    if cfg.algorithm in FLOW_ALGORITHMS:
        if trace != "none":
            raise UsageError("queue traces are only recorded by the algorithm1/maxweight simulator")
        return run_flow_sim(cfg)
    return run_ideal(cfg, trace=trace)


def summary_metrics(report) -> Dict[str, float]:
    """Flat scalar metrics of either report type, in a fixed order."""
    if hasattr(report, "fct_mean"):
        out = {"fct_mean": report.fct_mean, "fct_variance": report.fct_variance, "fct_p99": report.fct_p99,
               "completed": float(report.completed), "drops": float(report.drops),
               "remapped_flows": float(report.remapped_flows)}
        for i, row in report.via.items():
            total = sum(row.values())
            for j, n in row.items():
                out[f"via[{i}->{j}]"] = n / total
        return out
    out = {"mean_backlog_per_queue": report.mean_backlog_per_queue}
    if report.k_saturation is not None:
        out["k_saturation"] = report.k_saturation
        out["k_max"] = report.k_max
    for key, v in sorted(report.avg_backlog.items(), key=lambda kv: tuple(map(int, kv[0].split(",")))):
        out[f"backlog[{key}]"] = v
    return out


def mean_stderr(xs: Sequence[float]):
    n = len(xs)
    m = sum(xs) / n
    if n < 2:
        return m, 0.0
    var = sum((x - m) ** 2 for x in xs) / (n - 1)
    return m, math.sqrt(var / n)


def stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def write_manifest(path: Path, cfg: ScenarioConfig, seeds, outputs, started: str) -> None:
    doc = {"config_digest": cfg.digest(), "config_name": cfg.name, "code_version": __version__,
           "seeds": list(seeds), "started": started, "finished": stamp(),
           "outputs": sorted(str(p.name) for p in outputs)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --- subcommands ------------------------------------------------------------------

def cmd_run(args) -> int:
    started = stamp()
    cfg = load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.algorithm:
        kw["algorithm"] = args.algorithm
    cfg = overrides(cfg, args, **kw)
    out = out_dir(args.out)
    report, extra = execute(cfg, args.trace)
    written = [out / "metrics.json"]
    written[0].write_text(report.to_json())
    if cfg.algorithm in FLOW_ALGORITHMS:
        write_fct_csv(extra, out / "fct.csv")
        written.append(out / "fct.csv")
    elif args.trace != "none":
        p = out / ("trace.bin" if args.trace_format == "bin" else "trace.csv")
        (write_trace_binary if args.trace_format == "bin" else write_trace_csv)(extra, p)
        written.append(p)
    write_manifest(out / "manifest.json", cfg, [cfg.seed], written, started)
    print(f"{cfg.name or args.config}: {cfg.algorithm} seed {cfg.seed} -> {out}")
    return 0


def cmd_compare(args) -> int:
    started = stamp()
    algs = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if len(algs) < 2:
        raise UsageError("compare needs at least two algorithms")
    kinds = {a in FLOW_ALGORITHMS for a in algs}
    if len(kinds) > 1:
        raise UsageError("cannot mix flow-level (heuristic/ecmp) and backlog algorithms in one table")
    seeds = int_list(args.seeds) if args.seeds else list(DEFAULT_SEEDS)
    if not seeds:
        raise UsageError("empty seed list")
    base = overrides(load_config(args.config), args)
    labels = []
    for a in algs:
        labels.append(a if a not in labels else f"{a}#{sum(l.split('#')[0] == a for l in labels) + 1}")
    series: Dict[str, Dict[str, List[float]]] = {}
    keys: List[str] = []
    for label, alg in zip(labels, algs):
        for s in seeds:
            report, _ = execute(base.with_overrides(algorithm=alg, seed=s))
            for k, v in summary_metrics(report).items():
                if k not in keys:
                    keys.append(k)
                series.setdefault(label, {}).setdefault(k, []).append(v)
    out = out_dir(args.out)
    table = {"schema": COMPARE_COLUMNS_VERSION, "config_digest": base.digest(), "horizon": base.horizon,
             "seeds": seeds, "algorithms": labels, "rows": {}}
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric"] + [f"{l}_{s}" for l in labels for s in ("mean", "stderr")])
        for k in keys:
            row = [k]
            table["rows"][k] = {}
            for l in labels:
                vals = series[l].get(k)
                if vals is None or len(vals) != len(seeds):
                    row += ["", ""]
                    continue
                m, se = mean_stderr(vals)
                row += [repr(m), repr(se)]
                table["rows"][k][l] = {"mean": m, "stderr": se}
            w.writerow(row)
    (out / "comparison.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    write_manifest(out / "manifest.json", base, seeds, [out / "comparison.csv", out / "comparison.json"], started)
    head = [k for k in keys if not k.startswith(("backlog[", "via["))]
    for k in head:
        cells = "  ".join(f"{l}={table['rows'][k][l]['mean']:.4g}" for l in labels if l in table["rows"][k])
        print(f"{k}: {cells}")
    return 0


def cmd_sweep(args) -> int:
    started = stamp()
    if args.param not in SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {sorted(SWEEP_PARAMS)}")
    raw = [v for v in args.values.split(",") if v.strip()]
    if not raw:
        raise UsageError("empty value list")
    try:
        values = [SWEEP_PARAMS[args.param](v) for v in raw]
    except ValueError:
        raise UsageError(f"bad value for {args.param}: {args.values!r}")
    base = overrides(load_config(args.config), args)
    algs = [a.strip() for a in args.algorithms.split(",")] if args.algorithms else [base.algorithm]
    seeds = int_list(args.seeds) if args.seeds else [base.seed]
    out = out_dir(args.out)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for v in values:
            for alg in algs:
                for s in seeds:
                    cfg = base.with_overrides(**{args.param: v, "algorithm": alg, "seed": s})
                    report, _ = execute(cfg)
                    for k, x in summary_metrics(report).items():
                        w.writerow((args.param, v, alg, s, k, repr(x)))
                    print(f"{args.param}={v} {alg} seed {s}: done")
    write_manifest(out / "manifest.json", base, seeds, [out / "sweep.csv"], started)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    problems = validate_topology(cfg.topology)
    for v in problems:
        print(v)
    if problems:
        return 2
    print(f"{args.config}: ok ({len(cfg.topology.switches)} switches, {len(cfg.topology.destinations)} commodities)")
    return 0


def cmd_alloc_debug(args) -> int:
    ql, qn = int_list(args.q_local), int_list(args.q_next)
    prev = int_list(args.prev) if args.prev else [0] * len(ql)
    if not len(ql) == len(qn) == len(prev):
        raise UsageError("--q-local, --q-next and --prev need the same number of entries")
    try:
        state = allocator.LinkAllocState.from_lists(ql, qn, prev, args.budget, args.K)
    except ValueError as exc:
        raise UsageError(str(exc))
    alloc = allocator.maxweight_allocate(state) if args.maxweight else allocator.allocate_rates(state)
    req = allocator.compute_request(state)
    doc = {"request": {str(d): y for d, y in req.items()}, "k": None, "caps": None}
    if alloc.k_used is not None:
        k = alloc.k_exact if alloc.k_exact is not None else alloc.k_used
        doc["k"] = float(k)
        doc["caps"] = {str(d): allocator.x_max(state.q_local[d], state.q_next[d], state.prev_alloc[d], k)
                       for d in state.commodities}
    doc["rates"] = {str(d): r for d, r in alloc.rates.items()}
    doc["objective"] = float(alloc.objective)
    print(json.dumps(doc, indent=2))
    return 0


# --- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdnlb", description="Load-balancing experiment runner")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=False):
        sp.add_argument("--config", required=True, help="scenario JSON path or shipped scenario name")
        sp.add_argument("--out", help="output directory (default $SDNLB_OUT or ./results)")
        sp.add_argument("--horizon", type=int, help="override run.horizon")
        sp.add_argument("--warmup", type=float, help="override run.warmup_fraction")
        if seeds:
            sp.add_argument("--seeds", help="comma-separated seeds")

    sp = sub.add_parser("run", help="run one scenario")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--algorithm", choices=("algorithm1", "maxweight", "heuristic", "ecmp"))
    sp.add_argument("--trace", choices=("none", "decimated", "full"), default="none")
    sp.add_argument("--trace-format", choices=("csv", "bin"), default="csv")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="compare algorithms over seeds")
    common(sp, seeds=True)
    sp.add_argument("--algorithms", required=True, help="comma-separated, at least two")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="sweep one parameter")
    common(sp, seeds=True)
    sp.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--algorithms", help="comma-separated (default: the config's)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="check a scenario's topology")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("alloc-debug", help="run the link allocator on a hand-written state")
    sp.add_argument("--q-local", required=True)
    sp.add_argument("--q-next", required=True)
    sp.add_argument("--prev", default="")
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--K", type=float, default=10.0)
    sp.add_argument("--maxweight", action="store_true")
    sp.set_defaults(func=cmd_alloc_debug)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"sdnlb: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sdnlb: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any simulator failure as a run failure
        print(f"sdnlb: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

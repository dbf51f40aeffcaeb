"""Command line: run, validate and compare scenarios.

    mmroute run single_flow.scn --set protocol.refinement=off --out out/off
    mmroute run single_flow_bcp --seeds 1..4
    mmroute validate my.scn
    mmroute compare out/on out/off
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .engine import SECOND
from .network import run_scenario
from .scenario import (ScenarioError, apply_overrides, bundled_path, bundled_scenarios, parse_scenario,
                       parse_text)

log = logging.getLogger("mmroute")

OUT_ENV = "MMROUTE_OUT"


def load(path: str):
    """A scenario file path, or the name of a bundled scenario."""
    if os.path.exists(path):
        return parse_scenario(path)
    name = os.path.basename(path)
    if (name if name.endswith(".scn") else name + ".scn") in bundled_scenarios():
        return parse_text(bundled_path(name).read_text(), name)
    raise FileNotFoundError(f"no such scenario: {path}")


def parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def summary(result) -> dict:
    rep = result.report
    net = result.network
    out = {
        "scenario": net.cfg.run.name,
        "seed": net.cfg.run.seed,
        "protocol": net.cfg.protocol.name,
        "duration_s": net.cfg.run.duration / SECOND,
        "events": result.dispatched,
        "flows": [],
        "overhead_bytes": dict(sorted(rep.overhead_bytes.items())),
        "overhead_frames": dict(sorted(rep.overhead_frames.items())),
    }
    for i, f in enumerate(rep.flows):
        _, d = rep.flow_delays(i)
        out["flows"].append({
            "src": f.src, "dst": f.dst, "rate_bps": f.rate,
            "generated": rep.generated[i], "delivered": rep.delivered_count[i],
            "dropped": rep.dropped[i], "queued": rep.queued_at_end[i],
            "median_delay_ns": float(np.median(d)) if d.size else None,
        })
    return out


def run_one(cfg, out_dir: str, trace: bool, plots: bool = True) -> dict:
    t0 = time.perf_counter()
    result = run_scenario(cfg)
    os.makedirs(out_dir, exist_ok=True)
    result.report.write_csv(out_dir)
    info = summary(result)
    info["wall_s"] = round(time.perf_counter() - t0, 3)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    if trace:
        result.trace.write(os.path.join(out_dir, "trace.jsonl"))
    if plots:
        from .plotting import plot_run
        plot_run(out_dir)
    return info


def _run_seed(args):
    cfg, out_dir, trace, plots = args
    return run_one(cfg, out_dir, trace, plots)


def cmd_run(ns) -> int:
    cfg = load(ns.scenario)
    overrides = list(ns.set or [])
    if ns.seed is not None:
        overrides.append(f"run.seed={ns.seed}")
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    out = ns.out or os.path.join(os.environ.get(OUT_ENV, "out"), cfg.run.name)
    if ns.seeds:
        seeds = parse_seed_range(ns.seeds)
        jobs = [(apply_overrides(cfg, [f"run.seed={s}"]), os.path.join(out, f"seed-{s}"), ns.trace, not ns.no_plots)
                for s in seeds]
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            for s, info in zip(seeds, pool.map(_run_seed, jobs)):
                _print_summary(info, os.path.join(out, f"seed-{s}"))
        return 0
    info = run_one(cfg, out, ns.trace, not ns.no_plots)
    _print_summary(info, out)
    return 0


def _print_summary(info: dict, out: str) -> None:
    print(f"{info['scenario']} seed={info['seed']} events={info['events']} wall={info['wall_s']}s -> {out}")
    for i, f in enumerate(info["flows"]):
        med = f["median_delay_ns"]
        med_s = "-" if med is None else f"{med / 1e6:.3f} ms"
        print(f"  flow {i} {f['src']}->{f['dst']}: generated={f['generated']} delivered={f['delivered']} "
              f"dropped={f['dropped']} queued={f['queued']} median_delay={med_s}")


def cmd_validate(ns) -> int:
    cfg = load(ns.scenario)
    print(f"{ns.scenario}: ok ({len(cfg.nodes)} nodes, {len(cfg.flows)} flows, "
          f"{len(cfg.blockers)} blockers, protocol {cfg.protocol.name})")
    return 0


# --- compare ------------------------------------------------------------------

def _run_stats(out_dir: str) -> dict:
    from .plotting import read_delays, read_throughput

    stats: dict = {"flows": {}}
    tp = read_throughput(out_dir)
    delays = read_delays(out_dir)
    for f, (_, b) in tp.items():
        _, d = delays.get(f, (np.zeros(0), np.zeros(0)))
        row = {"mean_bps": float(b.mean()) if b.size else 0.0,
               "std_bps": float(b.std()) if b.size else 0.0,
               "delivered": int(d.size)}
        if d.size:
            for q in (10, 50, 90):
                row[f"p{q}_delay_ms"] = float(np.percentile(d, q)) / 1e6
        stats["flows"][f] = row
    overhead = {}
    path = os.path.join(out_dir, "overhead.csv")
    if os.path.exists(path):
        with open(path) as fh:
            overhead = {r["category"]: int(r["bytes"]) for r in csv.DictReader(fh)}
    stats["overhead"] = overhead
    return stats


def compare_dirs(dir_a: str, dir_b: str) -> list[tuple[str, str, float, float, float]]:
    """Rows of (scope, metric, A, B, B - A)."""
    a, b = _run_stats(dir_a), _run_stats(dir_b)
    rows = []
    for f in sorted(set(a["flows"]) | set(b["flows"])):
        fa, fb = a["flows"].get(f, {}), b["flows"].get(f, {})
        for key in sorted(set(fa) | set(fb)):
            va, vb = fa.get(key, float("nan")), fb.get(key, float("nan"))
            rows.append((f"flow {f}", key, va, vb, vb - va))
    for cat in sorted(set(a["overhead"]) | set(b["overhead"])):
        va, vb = a["overhead"].get(cat, 0), b["overhead"].get(cat, 0)
        rows.append(("overhead", f"{cat}_bytes", va, vb, vb - va))
    return rows


def cmd_compare(ns) -> int:
    for d in (ns.dir_a, ns.dir_b):
        if not os.path.exists(os.path.join(d, "throughput.csv")):
            raise FileNotFoundError(f"{d} has no throughput.csv")
    rows = compare_dirs(ns.dir_a, ns.dir_b)
    w = max(len(r[1]) for r in rows) if rows else 10
    print(f"{'scope':<10} {'metric':<{w}} {'A':>16} {'B':>16} {'B-A':>16}")
    for scope, metric, va, vb, dv in rows:
        print(f"{scope:<10} {metric:<{w}} {va:>16.6g} {vb:>16.6g} {dv:>16.6g}")
    if ns.out:
        os.makedirs(ns.out, exist_ok=True)
        with open(os.path.join(ns.out, "compare.csv"), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(("scope", "metric", "a", "b", "delta"))
            wr.writerows(rows)
        if not ns.no_plots:
            from .plotting import plot_compare
            plot_compare(ns.dir_a, ns.dir_b, ns.out, labels=(ns.label_a, ns.label_b))
    return 0


def cmd_list(ns) -> int:
    for name in bundled_scenarios():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmroute", description="Directional mmWave multi-hop routing simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write CSVs, figures and a summary")
    r.add_argument("scenario", help="scenario file or bundled scenario name")
    r.add_argument("--seed", type=int)
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override, e.g. protocol.refinement=off or flow.0.rate_bps=1e9")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or out/<name>)")
    r.add_argument("--trace", action="store_true", help="also write trace.jsonl")
    r.add_argument("--seeds", help="seed sweep N..M run in parallel, one subdirectory per seed")
    r.add_argument("--jobs", type=int, default=None, help="parallel workers for --seeds")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="parse and validate a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("compare", help="delta table between two run directories")
    c.add_argument("dir_a")
    c.add_argument("dir_b")
    c.add_argument("--out", help="write compare.csv and overlay figures here")
    c.add_argument("--label-a", default="A")
    c.add_argument("--label-b", default="B")
    c.add_argument("--no-plots", action="store_true")
    c.set_defaults(func=cmd_compare)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

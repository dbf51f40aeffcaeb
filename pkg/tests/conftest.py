import functools
import time

import pytest

from mmroute.network import Network, run_scenario
from mmroute.scenario import apply_overrides, load_bundled, parse_text


def scenario_text(nodes, flows=(), protocol="aodv", duration=2.0, blockers=(), extra=""):
    """Build scenario text from {id: (x, y)} plus (src, dst, rate) flows."""
    out = [f"[run]\nname = t\nduration = {duration}\nseed = 3\n",
           f"[protocol]\nname = {protocol}\n{extra}\n"]
    for nid, (x, y) in nodes.items():
        out.append(f"[node]\nid = {nid}\nwaypoint = 0 {x} {y} 1.0\n")
    for center, windows in blockers:
        lines = "\n".join(f"window = {a} {b}" for a, b in windows)
        out.append(f"[blocker]\ncenter = {center[0]} {center[1]} 0.9\n{lines}\n")
    for src, dst, rate in flows:
        out.append(f"[flow]\nsrc = {src}\ndst = {dst}\nrate_bps = {rate}\n")
    return "\n".join(out)


def make_network(nodes, flows=(), **kw):
    check = kw.pop("check_loops", True)
    return Network(parse_text(scenario_text(nodes, flows, **kw)), check_loops=check)


WALL: dict[tuple, float] = {}


@functools.lru_cache(maxsize=None)
def bundled_run(name, *overrides):
    """Run a bundled scenario once per session, with loop checks on."""
    cfg = load_bundled(name)
    if overrides:
        cfg = apply_overrides(cfg, list(overrides))
    t0 = time.perf_counter()
    result = run_scenario(cfg, check_loops=True)
    WALL[(name,) + overrides] = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def runs():
    return bundled_run

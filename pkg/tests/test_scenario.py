import filecmp

import numpy as np
import pytest

from mmroute.engine import MS, SECOND, rng_stream
from mmroute.network import run_scenario
from mmroute.scenario import (ScenarioError, apply_overrides, bundled_scenarios, load_bundled,
                              parse_text, poisson_blockage, serialize)

from conftest import scenario_text


def test_bundled_single_flow_matches_setup():
    cfg = load_bundled("single_flow")
    assert sorted(n.id for n in cfg.nodes) == [1, 4, 5]
    (b,) = cfg.blockers
    assert b.windows == ((5 * SECOND, 5_200 * MS),)
    (f,) = cfg.flows
    assert (f.src, f.dst, f.rate_bps, f.packet_size) == (5, 1, 2_500_000_000, 7935)
    assert cfg.protocol.name == "aodv" and cfg.protocol.refinement


def test_all_bundled_scenarios_parse():
    names = bundled_scenarios()
    assert {"single_flow.scn", "single_flow_bcp.scn", "multi_flow.scn"} <= set(names)
    for n in names:
        load_bundled(n)


def test_empty_file_reports_no_nodes():
    with pytest.raises(ScenarioError) as exc:
        parse_text("", "empty.scn")
    assert any("no nodes" in e for e in exc.value.errors)


def test_flow_to_unknown_node():
    text = scenario_text({i: (i, 0) for i in range(1, 6)}, flows=[(9, 1, 1e6)])
    with pytest.raises(ScenarioError) as exc:
        parse_text(text, "x.scn")
    assert any("unknown node 9" in e for e in exc.value.errors)


def test_errors_collected_with_line_numbers():
    text = "[run]\nduration = 1\nbogus = 2\n[nodes]\n[flow]\nsrc = 1\ndst = 2\nrate_bps = 0\n"
    with pytest.raises(ScenarioError) as exc:
        parse_text(text, "bad.scn")
    errs = exc.value.errors
    assert any(e.startswith("bad.scn:3:") and "bogus" in e for e in errs)
    assert any(e.startswith("bad.scn:4:") and "[nodes]" in e for e in errs)
    assert any("rate must be positive" in e for e in errs)
    assert len(errs) >= 4


@pytest.mark.parametrize("line,needle", [
    ("window = 6 5", "outside run"),
    ("window = 0 99", "outside run"),
    ("poisson_mu = -1", "poisson_mu"),
])
def test_blocker_validation(line, needle):
    text = scenario_text({1: (0, 0), 2: (5, 0)}) + f"\n[blocker]\ncenter = 1 0 1\n{line}\n"
    with pytest.raises(ScenarioError) as exc:
        parse_text(text)
    assert any(needle in e for e in exc.value.errors)


def test_bcp_single_sink_enforced():
    text = scenario_text({1: (0, 0), 2: (5, 0), 3: (0, 5)}, flows=[(3, 1, 1e6), (1, 2, 1e6)], protocol="bcp")
    with pytest.raises(ScenarioError, match="single sink"):
        parse_text(text)


@pytest.mark.parametrize("name", ["single_flow", "single_flow_bcp", "multi_flow"])
def test_serialize_round_trip(name):
    cfg = load_bundled(name)
    again = parse_text(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


def test_round_trip_with_custom_phy_and_poisson():
    text = scenario_text({1: (0, 0), 2: (5, 0)}, flows=[(2, 1, 1e8)]) + (
        "\n[phy]\nrate = 10 3e8\nrate = 20 1e9\nsectors = 16\n"
        "[blocker]\nwaypoint = 0 1 0 1\nwaypoint = 1 2 0 1\npoisson_mu = 2\n")
    cfg = parse_text(text)
    assert cfg.phy.rate_table == ((10.0, 3e8), (20.0, 1e9))
    assert parse_text(serialize(cfg)) == cfg


def test_overrides():
    cfg = apply_overrides(load_bundled("single_flow_bcp"), ["protocol.hello_interval=5", "run.seed=9"])
    assert cfg.protocol.hello_interval == 5 * SECOND and cfg.run.seed == 9
    cfg = apply_overrides(load_bundled("multi_flow"), ["flow.1.rate_bps=1e6"])
    assert cfg.flows[1].rate_bps == 1_000_000
    for bad in (["protocol.nope=1"], ["flow.rate_bps=1"], ["x.y=1"], ["protocol.v"], ["protocol.v=-1"]):
        with pytest.raises(ScenarioError):
            apply_overrides(load_bundled("multi_flow"), bad)


def test_poisson_mean_duration():
    rng = rng_stream(11, "blocker0")
    lengths = []
    while len(lengths) < 10_000:
        lengths += [(b - a) / SECOND for a, b in poisson_blockage(2.0, rng, 10_000 * SECOND)]
    mean = float(np.mean(lengths[:10_000]))
    assert abs(mean - 0.5) <= 0.05


def test_poisson_large_mu_gives_short_blockages():
    rng = rng_stream(1, "b")
    w = poisson_blockage(1e4, rng, SECOND)
    assert np.mean([(b - a) for a, b in w]) < 0.001 * SECOND


def test_poisson_schedule_deterministic():
    a = poisson_blockage(2.0, rng_stream(5, "blocker0"), 30 * SECOND)
    b = poisson_blockage(2.0, rng_stream(5, "blocker0"), 30 * SECOND)
    c = poisson_blockage(2.0, rng_stream(6, "blocker0"), 30 * SECOND)
    assert a == b and a != c
    assert all(x[1] <= y[0] for x, y in zip(a, a[1:]))


def _poisson_room(seed):
    text = scenario_text({1: (0, 0), 4: (2, 7.8), 5: (7, 0)}, flows=[(5, 1, 5e8)], duration=2.0)
    text += "\n[blocker]\ncenter = 3.5 0 0.9\npoisson_mu = 4\n"
    return apply_overrides(parse_text(text), [f"run.seed={seed}"])


def test_same_seed_identical_csvs(tmp_path):
    for d in ("a", "b", "c"):
        seed = 4 if d != "c" else 5
        run_scenario(_poisson_room(seed)).report.write_csv(str(tmp_path / d))
    names = ["throughput.csv", "delays.csv", "cdf.csv", "overhead.csv"]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert match == names
    _, differ, _ = filecmp.cmpfiles(tmp_path / "a", tmp_path / "c", names, shallow=False)
    assert differ


def test_same_seed_same_dispatch_count():
    cfg = _poisson_room(4)
    assert run_scenario(cfg).dispatched == run_scenario(cfg).dispatched

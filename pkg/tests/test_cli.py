import json
import os

import pytest

from mmroute.cli import compare_dirs, main, parse_seed_range

from conftest import scenario_text


@pytest.fixture()
def small(tmp_path):
    p = tmp_path / "small.scn"
    p.write_text(scenario_text({1: (0, 0), 4: (2, 7.8), 5: (7, 0)}, flows=[(5, 1, 5e8)], duration=1.0,
                               blockers=[((3.5, 0), [(0.4, 0.6)])]))
    return p


def test_validate_ok_and_errors(small, tmp_path, capsys):
    assert main(["validate", str(small)]) == 0
    bad = tmp_path / "bad.scn"
    bad.write_text("[run]\nwhat = 1\n")
    assert main(["validate", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "bad.scn:2" in err and "no nodes" in err
    assert main(["validate", str(tmp_path / "missing.scn")]) == 2


def test_validate_bundled_by_name():
    assert main(["validate", "single_flow"]) == 0


def test_run_writes_outputs(small, tmp_path):
    out = tmp_path / "on"
    assert main(["run", str(small), "--out", str(out), "--trace"]) == 0
    for name in ("throughput.csv", "delays.csv", "cdf.csv", "overhead.csv", "summary.json",
                 "trace.jsonl", "throughput.png", "delay.png", "cdf.png"):
        assert (out / name).stat().st_size > 0, name
    info = json.loads((out / "summary.json").read_text())
    f = info["flows"][0]
    assert f["generated"] == f["delivered"] + f["queued"] + f["dropped"]
    first = json.loads((out / "trace.jsonl").read_text().splitlines()[0])
    assert "t" in first and "type" in first


def test_run_bad_override_fails(small, tmp_path):
    assert main(["run", str(small), "--set", "protocol.bogus=1", "--out", str(tmp_path / "x")]) == 2


def test_out_env_default(small, tmp_path, monkeypatch):
    monkeypatch.setenv("MMROUTE_OUT", str(tmp_path / "envout"))
    assert main(["run", str(small), "--no-plots"]) == 0
    assert (tmp_path / "envout" / "t" / "throughput.csv").exists()


def test_seed_sweep(small, tmp_path):
    out = tmp_path / "sweep"
    assert main(["run", str(small), "--seeds", "1..2", "--out", str(out), "--no-plots", "--jobs", "2"]) == 0
    assert sorted(os.listdir(out)) == ["seed-1", "seed-2"]


def test_compare(small, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(small), "--out", str(a), "--no-plots"])
    main(["run", str(small), "--out", str(b), "--no-plots", "--set", "protocol.refinement=off"])
    capsys.readouterr()
    assert main(["compare", str(a), str(b), "--out", str(tmp_path / "cmp")]) == 0
    text = capsys.readouterr().out
    assert "mean_bps" in text and "ssw_bytes" in text
    assert (tmp_path / "cmp" / "compare.csv").exists()
    assert (tmp_path / "cmp" / "compare_throughput.png").exists()
    rows = {(s, m): d for s, m, _, _, d in compare_dirs(str(a), str(a))}
    assert all(d == 0 for d in rows.values())
    assert main(["compare", str(a), str(tmp_path / "nothing")]) == 2


def test_seed_range_parsing():
    assert parse_seed_range("3..5") == [3, 4, 5]
    assert parse_seed_range("1,7") == [1, 7]
    with pytest.raises(ValueError):
        parse_seed_range("5..3")

from dataclasses import dataclass

import numpy as np
import pytest

from mmroute.engine import MS, SECOND, US
from mmroute.mac import (DEFAULT_CONTROL_RATE, HELLO_BYTES, RREP_BYTES, RREQ_BYTES, SSW_BYTES,
                         SSW_FEEDBACK_BYTES, BeaconSchedule, SswFeedback, attach_routing_payload,
                         best_sector, build_txss, ssw_airtime_ns, txop_payload_limit)

from conftest import make_network

ROOM = {1: (0, 0), 4: (2, 7.8), 5: (7, 0)}


@dataclass(frozen=True)
class Blob:
    wire_bytes: int = 64


def test_frame_sizes():
    assert (SSW_BYTES, SSW_FEEDBACK_BYTES, RREQ_BYTES, RREP_BYTES, HELLO_BYTES) == (26, 28, 44, 40, 24)


def test_txss_enumerates_all_sectors():
    frames = build_txss(3, 8, sweep_id=1)
    assert [f.sector for f in frames] == list(range(8))
    assert [f.countdown for f in frames] == list(range(7, -1, -1))
    assert not any(f.enhanced for f in frames)


def test_attach_payload_identical_on_every_sector():
    frames = build_txss(3, 8, 1, payload=Blob())
    assert all(f.enhanced and f.routing_payload == Blob() for f in frames)
    legacy = build_txss(3, 8, 1)[0]
    assert attach_routing_payload(legacy, None) is legacy


def test_enhanced_airtime_delta_64_bytes():
    delta = ssw_airtime_ns(64) - ssw_airtime_ns(0)
    exact = 64 * 8 * SECOND / DEFAULT_CONTROL_RATE
    assert abs(delta - exact) <= 1


def test_run_txss_step_grows_with_payload():
    net = make_network(ROOM)
    mac = net.nodes[5].mac
    net.sweep_payload = lambda node: Blob()
    mac.run_txss()
    arrivals = [(ev.fire_at, ev.payload[0].sector) for _, _, ev in net.engine._heap
                if ev.target in (1, 4)]
    assert arrivals
    for t, sector in arrivals:
        assert t == (sector + 1) * ssw_airtime_ns(64)
    assert net.metrics.overhead_bytes["enhanced_ssw"] == 8 * 64
    assert net.metrics.overhead_frames["ssw"] == 8


def test_txop_payload_limit():
    assert txop_payload_limit(2.5e9, 300 * US) == 93_750


def test_best_sector_argmax_and_ties():
    assert best_sector([None, 3.0, 7.0, 7.0, None]) == (2, 7.0)
    assert best_sector([None] * 8) is None


def test_beacon_schedule():
    b = BeaconSchedule()
    assert not b.in_dti(0) and b.in_dti(5 * MS)
    assert b.next_data_time(101 * MS) == 105 * MS
    assert b.dti_end(150 * MS) == 200 * MS
    assert [b.txss_offset(i, 5) for i in range(5)] == [0, MS, 2 * MS, 3 * MS, 4 * MS]
    with pytest.raises(ValueError):
        BeaconSchedule(bi=100 * MS, bhi=10 * MS, dti=80 * MS)


def test_sweep_learns_argmax_sector_for_every_neighbor():
    net = make_network({1: (0, 0), 2: (-2, -6), 3: (-5, 3), 4: (2, 7.8), 5: (7, 0)})
    net.run(int(0.05 * SECOND))
    for a in net.node_ids:
        mac = net.nodes[a].mac
        for b in net.node_ids:
            if a == b:
                continue
            snrs = net.phy.sweep_snrs(a, b, 0)
            vals = [-np.inf if s is None else s for s in snrs]
            if all(s is None for s in snrs):
                assert b not in mac.table
            else:
                assert mac.table[b].best_tx_sector == int(np.argmax(vals))


def test_blocked_neighbor_gives_no_feedback():
    net = make_network(ROOM, blockers=[((3.5, 0), [(0, 2)])])
    net.run(int(0.05 * SECOND))
    assert 1 not in net.nodes[5].mac.table
    assert 4 in net.nodes[5].mac.table


def test_legacy_feedback_does_not_touch_routing():
    net = make_network(ROOM)
    calls = []
    net.apply_refinement = lambda *a: calls.append(a)
    mac = net.nodes[5].mac
    mac.sweep_id = 3
    assert mac.deliver_feedback(SswFeedback(1, 4, 30.0, 3))
    assert mac.table[1].best_tx_sector == 4 and calls == []
    assert mac.deliver_feedback(SswFeedback(1, 4, 30.0, 3, routing_payload=Blob()))
    assert len(calls) == 1


def test_stale_feedback_is_an_anomaly():
    net = make_network(ROOM)
    mac = net.nodes[5].mac
    mac.sweep_id = 3
    mac.deliver_feedback(SswFeedback(1, 4, 30.0, 3))
    before = dict(mac.table)
    assert not mac.deliver_feedback(SswFeedback(1, 6, 10.0, 2))
    assert mac.anomalies == 1
    assert mac.table == before
    assert net.trace.of_type("anomaly", node=5)


def test_no_traffic_no_txops():
    net = make_network(ROOM)
    net.run(SECOND)
    assert net.scheduler.txops == 0


def test_txop_batches_respect_limits():
    net = make_network(ROOM, flows=[(5, 1, 2.5e9)])
    sizes = []
    orig = net.scheduler.send_data

    def spy(src, nh, agent, key, rate, window):
        ev = orig(src, nh, agent, key, rate, window)
        if ev is not None:
            batch = ev.payload[1]
            sizes.append((sum(p.size for p, _ in batch), len(batch), txop_payload_limit(rate, window),
                          batch[-1][1] - net.engine.now, window))
        return ev

    net.scheduler.send_data = spy
    net.run(int(0.5 * SECOND))
    assert sizes
    for nbytes, count, limit, airtime, window in sizes:
        assert nbytes <= limit and count <= 64 and airtime <= window

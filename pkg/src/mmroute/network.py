"""Run orchestration: builds nodes from a scenario and wires the layers."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Callable

from .aodv import AodvAgent, AodvConfig
from .bcp import BcpAgent, BcpConfig
from .engine import Engine, EventKind, SECOND, rng_stream
from .mac import BeaconSchedule, NodeMac, TxopScheduler, airtime_ns
from .phy import Blocker, PhyModel, RateTable, SectorAntenna, Trajectory
from .scenario import ScenarioConfig, poisson_blockage
from .traffic import CbrSource, Flow, MetricsCollector, MetricsReport, build_report

log = logging.getLogger(__name__)


class RoutingLoopError(AssertionError):
    pass


class TraceLog:
    """Append-only, time-ordered structured records."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.records: list[dict[str, Any]] = []

    def record(self, kind: str, **fields) -> None:
        rec = {"t": self.engine.now, "type": kind}
        rec.update(fields)
        self.records.append(rec)

    def of_type(self, kind: str, **match) -> list[dict[str, Any]]:
        return [r for r in self.records
                if r["type"] == kind and all(r.get(k) == v for k, v in match.items())]

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
                fh.write("\n")


@dataclass
class Node:
    id: int
    mac: NodeMac
    agent: Any = None


class Network:
    def __init__(self, cfg: ScenarioConfig, check_loops: bool = False, record_events: bool = False):
        self.cfg = cfg
        self.engine = Engine(record_trace=record_events)
        self.trace = TraceLog(self.engine)
        self.beacon = BeaconSchedule()
        self.check_loops = check_loops
        self.loop_checks = 0
        ph = cfg.phy
        self.control_rate = ph.control_rate_bps
        trajectories = {n.id: Trajectory(n.waypoints) for n in cfg.nodes}
        self.blockers = []
        for i, b in enumerate(cfg.blockers):
            windows = list(b.windows)
            if b.poisson_mu is not None:
                windows += poisson_blockage(b.poisson_mu, rng_stream(cfg.run.seed, f"blocker{i}"),
                                            cfg.run.duration)
            self.blockers.append(Blocker(Trajectory(b.waypoints), tuple(b.dims), b.attenuation_db,
                                         sorted(windows)))
        self.phy = PhyModel(
            trajectories, self.blockers,
            SectorAntenna(ph.sectors, ph.main_gain_db, ph.side_gain_db, ph.quasi_omni_gain_db),
            RateTable(tuple(ph.rate_table)), ph.tx_power_dbm, ph.noise_dbm,
            ph.preamble_threshold_dbm, ph.energy_detect_dbm,
        )
        self.node_ids = sorted(n.id for n in cfg.nodes)
        self.nodes = {nid: Node(nid, NodeMac(nid, self)) for nid in self.node_ids}
        self.flows = [Flow(f.src, f.dst, f.rate_bps, f.packet_size, f.start, cfg.flow_stop(f))
                      for f in cfg.flows]
        self.metrics = MetricsCollector(self.flows)
        self.scheduler = TxopScheduler(self)
        self.in_flight = 0
        p = cfg.protocol
        if p.name == "aodv":
            acfg = AodvConfig(refinement=p.refinement, loss_detect_window=p.loss_detect_window,
                              route_lifetime=p.route_lifetime, ttl=p.ttl,
                              queue_capacity=p.queue_capacity, rreq_retry=self.beacon.bi)
            for nid in self.node_ids:
                self.nodes[nid].agent = AodvAgent(nid, self, acfg)
        else:
            sink = self.flows[0].dst if self.flows else self.node_ids[0]
            bcfg = BcpConfig(v=p.v, hello_interval=p.hello_interval, reroute_period=p.reroute_period,
                             queue_capacity=p.queue_capacity, hello_offset=self.beacon.bhi)
            for nid in self.node_ids:
                self.nodes[nid].agent = BcpAgent(nid, self, bcfg, sink)
        self.sources = [CbrSource(i, f, self, self.beacon.txop) for i, f in enumerate(self.flows)]
        self._started = False

    # --- wiring hooks used by mac / routing ----------------------------------

    def link_rate(self, a: int, b: int, t: int) -> float | None:
        """Data rate a->b using the learned sectors, or None if unusable."""
        ma, mb = self.nodes[a].mac, self.nodes[b].mac
        ea = ma.table.fresh(b, t, ma.staleness)
        if ea is None:
            return None
        eb = mb.table.fresh(a, t, mb.staleness)
        return self.phy.data_rate(a, b, t, ea.best_tx_sector, eb.best_tx_sector if eb else None)

    def send_control(self, src: int, dst: int, kind: str, payload, nbytes: int,
                     handler: Callable[[Any, int], Any]) -> bool:
        """Directional control frame; lost silently if the link is unusable."""
        mac = self.nodes[src].mac
        now = self.engine.now
        start = max(now, mac.ctrl_busy_until)
        end = start + airtime_ns(nbytes, self.control_rate)
        mac.ctrl_busy_until = end
        self.metrics.count(kind, 1, nbytes)
        if self.link_rate(src, dst, start) is None:
            self.trace.record("control_lost", node=src, dst=dst, frame=kind)
            return False
        self.engine.at(end, EventKind.FRAME, dst, lambda ev: handler(ev.payload, src), payload)
        return True

    def sweep_payload(self, node: int):
        agent = self.nodes[node].agent
        if isinstance(agent, AodvAgent):
            return agent.take_sweep_payload()
        return None

    def respond_enhanced_ssw(self, responder: int, payload, initiator: int):
        agent = self.nodes[responder].agent
        if isinstance(agent, AodvAgent):
            return agent.respond_enhanced_ssw(payload, initiator)
        return None

    def apply_refinement(self, initiator: int, reply, via: int) -> bool:
        agent = self.nodes[initiator].agent
        if isinstance(agent, AodvAgent):
            return agent.apply_refinement(reply, via)
        return False

    def on_data_batch(self, ev) -> None:
        src, stamped = ev.payload
        nid = ev.target
        agent = self.nodes[nid].agent
        self.in_flight -= len(stamped)
        for pkt, t in stamped:
            pkt.hops += 1
            if pkt.dst == nid:
                self.metrics.deliver(pkt, t)
            else:
                agent.receive(pkt, self.engine.now)

    def drop(self, pkt, node: int, reason: str) -> None:
        self.metrics.drop(pkt)
        self.trace.record("drop", node=node, flow=pkt.flow, seq=pkt.seq, reason=reason)

    def route_changed(self, node: int, reason: str) -> None:
        agent = self.nodes[node].agent
        self.trace.record("route", node=node, reason=reason,
                          table=[list(r) for r in agent.table_dump()])
        if self.check_loops:
            self.assert_loop_free()

    def assert_loop_free(self) -> None:
        """Walk next-hop pointers for every (node, destination) pair."""
        self.loop_checks += 1
        now = self.engine.now
        for dest in self.node_ids:
            for start in self.node_ids:
                if start == dest:
                    continue
                seen = {start}
                cur = start
                while True:
                    e = self.nodes[cur].agent.valid_entry(dest, now)
                    if e is None or e.next_hop == dest:
                        break
                    cur = e.next_hop
                    if cur in seen:
                        raise RoutingLoopError(f"loop toward {dest} from {start} at t={now}")
                    seen.add(cur)

    # --- run ------------------------------------------------------------------

    def _sweep(self, ev) -> None:
        self.nodes[ev.target].mac.run_txss()
        self.engine.after(self.beacon.bi, EventKind.TIMER, ev.target, self._sweep)

    def _sample(self, ev) -> None:
        self.metrics.queue_samples.append(
            (self.engine.now, {nid: self.nodes[nid].agent.queued for nid in self.node_ids}))
        self.engine.after(self.beacon.bi, EventKind.TIMER, None, self._sample)

    def _blockage_toggle(self, ev) -> None:
        idx, on = ev.payload
        self.trace.record("blockage", blocker=idx, on=on)
        self.scheduler.kick()

    def _mobility(self, ev) -> None:
        p = self.phy.position(ev.target, self.engine.now)
        self.trace.record("mobility", node=ev.target, pos=[round(c, 6) for c in p])

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        eng = self.engine
        n = len(self.node_ids)
        for i, nid in enumerate(self.node_ids):
            eng.at(self.beacon.txss_offset(i, n), EventKind.TIMER, nid, self._sweep)
        for i, b in enumerate(self.blockers):
            for on, off in b.windows:
                eng.at(on, EventKind.BLOCKAGE, None, self._blockage_toggle, (i, True))
                eng.at(off, EventKind.BLOCKAGE, None, self._blockage_toggle, (i, False))
        for nc in self.cfg.nodes:
            if len(nc.waypoints) > 1:
                for t, _ in nc.waypoints:
                    if 0 <= t <= self.cfg.run.duration:
                        eng.at(t, EventKind.MOBILITY, nc.id, self._mobility)
        eng.at(0, EventKind.TIMER, None, self._sample)
        for nid in self.node_ids:
            agent = self.nodes[nid].agent
            if hasattr(agent, "start"):
                agent.start()
        for src in self.sources:
            src.start()

    def run(self, until: int | None = None) -> int:
        self.start()
        end = self.cfg.run.duration if until is None else until
        return self.engine.run_until(end)

    def queued_per_flow(self) -> list[int]:
        counts = [0] * len(self.flows)
        for nid in self.node_ids:
            agent = self.nodes[nid].agent
            queues = agent.queues.values() if isinstance(agent, AodvAgent) else [agent.queue]
            for q in queues:
                for pkt in q:
                    counts[pkt.flow] += 1
        for _, _, ev in self.engine._heap:
            if not ev.cancelled and ev.kind is EventKind.FRAME and ev.action == self.on_data_batch:
                for pkt, _ in ev.payload[1]:
                    counts[pkt.flow] += 1
        return counts

    def report(self, window: int | None = None) -> MetricsReport:
        return build_report(self.metrics, self.queued_per_flow(),
                            window or self.beacon.bi, self.cfg.run.duration)


@dataclass
class RunResult:
    network: Network
    report: MetricsReport
    dispatched: int

    @property
    def trace(self) -> TraceLog:
        return self.network.trace


def run_scenario(cfg: ScenarioConfig, check_loops: bool = False, record_events: bool = False) -> RunResult:
    net = Network(cfg, check_loops=check_loops, record_events=record_events)
    n = net.run()
    return RunResult(net, net.report(), n)

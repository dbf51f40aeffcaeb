"""Directional MAC: beacon-interval timing, sector sweeps and TXOP service."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any

from .engine import MS, SECOND, US, EventKind

if TYPE_CHECKING:  # pragma: no cover
    from .network import Network

log = logging.getLogger(__name__)

SIFS = 3 * US
DEFAULT_CONTROL_RATE = 27.5e6

# Byte layouts used for overhead accounting only (not a codec).
SSW_LAYOUT = (
    ("frame_control", 2), ("duration", 2), ("ra", 6), ("ta", 6),
    ("ssw_field", 3), ("ssw_feedback_field", 3), ("fcs", 4),
)
SSW_FEEDBACK_LAYOUT = (
    ("frame_control", 2), ("duration", 2), ("ra", 6), ("ta", 6),
    ("ssw_feedback_field", 3), ("brp_request", 4), ("beamformed_link_maintenance", 1),
    ("fcs", 4),
)
RREQ_LAYOUT = (
    ("element_id", 1), ("length", 1), ("flags", 1), ("hop_count", 1), ("ttl", 1),
    ("request_id", 4), ("origin", 6), ("origin_seq", 4), ("lifetime", 4),
    ("route_metric", 4), ("target_count", 1), ("target_flags", 1),
    ("destination", 6), ("dest_seq", 4), ("reserved", 5),
)
RREP_LAYOUT = (
    ("element_id", 1), ("length", 1), ("flags", 1), ("hop_count", 1), ("ttl", 1),
    ("destination", 6), ("dest_seq", 4), ("responder", 6), ("lifetime", 4),
    ("route_metric", 4), ("origin", 6), ("reserved", 5),
)
HELLO_LAYOUT = (
    ("element_id", 1), ("length", 1), ("src", 6), ("queue_len", 4),
    ("advertised_rate", 4), ("timestamp", 8),
)


def layout_bytes(layout) -> int:
    return sum(n for _, n in layout)


SSW_BYTES = layout_bytes(SSW_LAYOUT)                  # 26
SSW_FEEDBACK_BYTES = layout_bytes(SSW_FEEDBACK_LAYOUT)  # 28
RREQ_BYTES = layout_bytes(RREQ_LAYOUT)                # 44
RREP_BYTES = layout_bytes(RREP_LAYOUT)                # 40
HELLO_BYTES = layout_bytes(HELLO_LAYOUT)              # 24


def airtime_ns(nbytes: int, rate_bps: float) -> int:
    return math.ceil(nbytes * 8 * SECOND / rate_bps)


def ssw_airtime_ns(payload_bytes: int = 0, control_rate: float = DEFAULT_CONTROL_RATE) -> int:
    return airtime_ns(SSW_BYTES + payload_bytes, control_rate)


def txop_payload_limit(rate_bps: float, txop_ns: int) -> int:
    """Largest payload (bytes) that fits in one TXOP at ``rate_bps``."""
    return int(rate_bps * txop_ns // (8 * SECOND))


@dataclass(frozen=True)
class BeaconSchedule:
    bi: int = 100 * MS
    bhi: int = 5 * MS
    dti: int = 95 * MS
    txop: int = 300 * US
    max_ampdu: int = 64

    def __post_init__(self):
        if self.bhi + self.dti != self.bi:
            raise ValueError("BHI + DTI must equal BI")

    def bi_start(self, t: int) -> int:
        return t - t % self.bi

    def in_dti(self, t: int) -> bool:
        return t % self.bi >= self.bhi

    def next_data_time(self, t: int) -> int:
        return t if self.in_dti(t) else self.bi_start(t) + self.bhi

    def dti_end(self, t: int) -> int:
        return self.bi_start(t) + self.bi

    def txss_offset(self, index: int, node_count: int) -> int:
        return index * self.bhi // node_count


@dataclass(frozen=True)
class SswFrame:
    src: int
    sector: int
    countdown: int
    sweep_id: int = 0
    routing_payload: Any = None

    @property
    def enhanced(self) -> bool:
        return self.routing_payload is not None

    @property
    def payload_bytes(self) -> int:
        return 0 if self.routing_payload is None else self.routing_payload.wire_bytes


@dataclass(frozen=True)
class SswFeedback:
    src: int
    best_sector: int
    best_snr: float
    sweep_id: int = 0
    routing_payload: Any = None

    @property
    def enhanced(self) -> bool:
        return self.routing_payload is not None


def attach_routing_payload(frame: SswFrame, fields) -> SswFrame:
    """Upgrade a legacy SSW frame to Enhanced-SSW; no fields means unchanged."""
    if fields is None:
        return frame
    return replace(frame, routing_payload=fields)


def build_txss(src: int, sectors: int, sweep_id: int, payload=None) -> list[SswFrame]:
    return [
        attach_routing_payload(SswFrame(src, s, sectors - 1 - s, sweep_id), payload)
        for s in range(sectors)
    ]


def best_sector(snrs: list[float | None]) -> tuple[int, float] | None:
    """Argmax over received sectors; lowest index wins ties."""
    best = None
    for s, v in enumerate(snrs):
        if v is not None and (best is None or v > best[1]):
            best = (s, v)
    return best


@dataclass
class SectorEntry:
    best_tx_sector: int
    last_snr: float
    last_updated: int


class SectorTable(dict):
    """neighbor -> SectorEntry, with freshness judged by the caller's window."""

    def update_entry(self, neighbor: int, sector: int, snr: float, now: int) -> None:
        self[neighbor] = SectorEntry(sector, snr, now)

    def fresh(self, neighbor: int, now: int, window: int) -> SectorEntry | None:
        e = self.get(neighbor)
        if e is None or now - e.last_updated > window:
            return None
        return e

    def fresh_neighbors(self, now: int, window: int) -> list[int]:
        return sorted(n for n, e in self.items() if now - e.last_updated <= window)


@dataclass
class _RxSweep:
    initiator: int
    sweep_id: int
    best_sector: int
    best_snr: float
    payload: Any


class NodeMac:
    """Per-node MAC state: sector table, own sweeps, responder bookkeeping."""

    def __init__(self, node_id: int, net: "Network"):
        self.id = node_id
        self.net = net
        self.table = SectorTable()
        self.sweep_id = 0
        self.anomalies = 0
        self.ctrl_busy_until = 0
        self._rx: dict[tuple[int, int], _RxSweep] = {}

    @property
    def staleness(self) -> int:
        return 3 * self.net.beacon.bi

    def fresh_neighbors(self, now: int) -> list[int]:
        return self.table.fresh_neighbors(now, self.staleness)

    def run_txss(self) -> list[SswFrame]:
        """Sweep all sectors once; schedules receptions at in-range neighbors."""
        net = self.net
        now = net.engine.now
        self.sweep_id += 1
        payload = net.sweep_payload(self.id)
        frames = build_txss(self.id, net.phy.antenna.sectors, self.sweep_id, payload)
        nbytes = SSW_BYTES + frames[0].payload_bytes
        step = airtime_ns(nbytes, net.control_rate)
        net.metrics.count("ssw", len(frames), SSW_BYTES * len(frames))
        if payload is not None:
            net.metrics.count("enhanced_ssw", len(frames), payload.wire_bytes * len(frames))
        for nb in net.node_ids:
            if nb == self.id:
                continue
            snrs = net.phy.sweep_snrs(self.id, nb, now)
            for i, frame in enumerate(frames):
                if snrs[frame.sector] is None:
                    continue
                net.engine.at(
                    now + (i + 1) * step, EventKind.FRAME, nb,
                    net.nodes[nb].mac.on_ssw_frame, (frame, snrs[frame.sector], step),
                )
        net.trace.record("sweep", node=self.id, sweep_id=self.sweep_id, enhanced=payload is not None)
        return frames

    def on_ssw_frame(self, ev) -> None:
        frame, snr, step = ev.payload
        key = (frame.src, frame.sweep_id)
        rec = self._rx.get(key)
        if rec is None:
            self._rx[key] = _RxSweep(frame.src, frame.sweep_id, frame.sector, snr, frame.routing_payload)
            end = self.net.engine.now + frame.countdown * step + SIFS
            self.net.engine.at(end, EventKind.TIMER, self.id, self._send_feedback, key)
        elif snr > rec.best_snr:
            rec.best_sector, rec.best_snr = frame.sector, snr

    def _send_feedback(self, ev) -> None:
        rec = self._rx.pop(ev.payload)
        net = self.net
        reply = None
        if rec.payload is not None:
            reply = net.respond_enhanced_ssw(self.id, rec.payload, rec.initiator)
        fb = SswFeedback(self.id, rec.best_sector, rec.best_snr, rec.sweep_id, reply)
        nbytes = SSW_FEEDBACK_BYTES + (reply.wire_bytes if reply is not None else 0)
        net.metrics.count("ssw_feedback", 1, SSW_FEEDBACK_BYTES)
        if reply is not None:
            net.metrics.count("enhanced_feedback", 1, reply.wire_bytes)
        dest = net.nodes[rec.initiator].mac
        net.engine.after(airtime_ns(nbytes, net.control_rate), EventKind.FRAME, rec.initiator,
                         lambda e: dest.deliver_feedback(e.payload), fb)

    def deliver_feedback(self, fb: SswFeedback) -> bool:
        """Apply feedback from responder ``fb.src``; False if dropped as stale."""
        net = self.net
        if fb.sweep_id != self.sweep_id or fb.sweep_id == 0:
            self.anomalies += 1
            net.trace.record("anomaly", node=self.id, what="stale_feedback", src=fb.src)
            return False
        self.table.update_entry(fb.src, fb.best_sector, fb.best_snr, net.engine.now)
        if fb.routing_payload is not None:
            net.apply_refinement(self.id, fb.routing_payload, fb.src)
        net.scheduler.kick()
        return True


class TxopScheduler:
    """Network-wide round-robin TXOP service inside each DTI.

    Stands in for contention: one aggregate on the air at a time, rotating
    over (node, queue) pairs that have traffic and a next hop.
    """

    def __init__(self, net: "Network"):
        self.net = net
        self._pending = None
        self._last: tuple[int, Any] | None = None
        self.busy_until = 0
        self.txops = 0
        self._in_slot = False
        self._rekick = False

    def kick(self) -> None:
        if self._in_slot:
            self._rekick = True
            return
        if self._pending is not None:
            return
        eng = self.net.engine
        t = max(self.net.beacon.next_data_time(eng.now), self.busy_until)
        self._pending = eng.at(t, EventKind.TIMER, None, self._slot)

    def _candidates(self) -> list[tuple[int, Any]]:
        keys = []
        for nid in self.net.node_ids:
            agent = self.net.nodes[nid].agent
            keys.extend((nid, k) for k in agent.service_keys())
        if self._last is not None and keys:
            # rotate so the pair after the last served one goes first
            i = 0
            while i < len(keys) and keys[i] <= self._last:
                i += 1
            keys = keys[i:] + keys[:i]
        return keys

    def _slot(self, ev) -> None:
        self._pending = None
        self._in_slot = True
        self._rekick = False
        try:
            self._serve()
        finally:
            self._in_slot = False
        if self._pending is None and self._rekick:
            self.kick()

    def _serve(self) -> None:
        net = self.net
        now = net.engine.now
        beacon = net.beacon
        start = beacon.next_data_time(now)
        if start > now:
            self._pending = net.engine.at(start, EventKind.TIMER, None, self._slot)
            return
        window = min(beacon.txop, beacon.dti_end(now) - now)
        deferred = False
        for nid, key in self._candidates():
            agent = net.nodes[nid].agent
            nh = agent.next_hop(key, now)
            if nh is None:
                continue
            rate = net.link_rate(nid, nh, now)
            if rate is None:
                agent.link_failed(key, nh, now)
                continue
            ev_out = self.send_data(nid, nh, agent, key, rate, window)
            if ev_out is None:
                deferred = True
                continue
            agent.link_ok(key, nh, now)
            self._last = (nid, key)
            self._pending = net.engine.at(self.busy_until, EventKind.TIMER, None, self._slot)
            return
        if deferred:
            nxt = beacon.dti_end(now) + beacon.bhi
            self._pending = net.engine.at(nxt, EventKind.TIMER, None, self._slot)

    def send_data(self, src: int, next_hop: int, agent, key, rate: float, window: int):
        """Serialize one aggregate from ``agent``'s queue ``key``.

        Returns the delivery event, or None when not even one packet fits in
        ``window`` (packets stay queued).
        """
        net = self.net
        limit = txop_payload_limit(rate, window)
        batch = agent.take(key, limit, net.beacon.max_ampdu)
        if not batch:
            return None
        now = net.engine.now
        sent = 0
        stamped = []
        for pkt in batch:
            sent += pkt.size
            stamped.append((pkt, now + airtime_ns(sent, rate)))
        end = stamped[-1][1]
        self.busy_until = end
        self.txops += 1
        net.in_flight += len(batch)
        return net.engine.at(end, EventKind.FRAME, next_hop, net.on_data_batch, (src, stamped))


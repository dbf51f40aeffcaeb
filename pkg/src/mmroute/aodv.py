"""On-demand (AODV-type) routing with route refinement carried on sector sweeps.

A node discovers routes with directional RREQ/RREP frames.  It also stashes a
request for the next sector sweep; neighbours answer it inside their sweep
feedback, so a shorter route shows up without extra frames once a blockage
clears.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, ClassVar

from .engine import MS, SECOND, EventKind
from .mac import RREP_BYTES, RREQ_BYTES

if TYPE_CHECKING:  # pragma: no cover
    from .network import Network
    from .traffic import Packet


@dataclass(frozen=True)
class RouteRequestFields:
    origin: int
    destination: int
    origin_seq: int
    request_id: int
    hop_count: int = 0
    route_metric: int = 0
    dest_seq: int = 0  # freshest destination sequence number the origin knows

    wire_bytes: ClassVar[int] = RREQ_BYTES

    def relayed(self) -> "RouteRequestFields":
        return RouteRequestFields(
            self.origin, self.destination, self.origin_seq, self.request_id,
            self.hop_count + 1, self.route_metric + 1, self.dest_seq,
        )


@dataclass(frozen=True)
class RouteReplyFields:
    destination: int
    dest_seq: int
    hop_count_to_dest: int
    responder: int
    origin: int

    wire_bytes: ClassVar[int] = RREP_BYTES


@dataclass
class RoutingTableEntry:
    destination: int
    next_hop: int
    hop_count: int
    dest_seq: int
    expires_at: int
    valid: bool = True

    def usable(self, now: int) -> bool:
        return self.valid and now < self.expires_at


@dataclass
class SweepStash:
    pending: RouteRequestFields | None = None
    stashed_at: int | None = None


@dataclass
class AodvConfig:
    refinement: bool = True
    loss_detect_window: int = 20 * MS
    route_lifetime: int = 10 * SECOND
    ttl: int = 4
    queue_capacity: int = 20_000
    rreq_retry: int = 100 * MS
    active_window: int = 200 * MS


def should_replace(current: RoutingTableEntry | None, seq: int, hops: int, now: int) -> bool:
    """Freshness ordering: newer sequence number, or same number and fewer hops.

    An invalid (or expired) entry yields to any candidate that is at least as
    fresh.
    """
    if current is None:
        return True
    if seq > current.dest_seq:
        return True
    if seq == current.dest_seq:
        return not current.usable(now) or hops < current.hop_count
    return False


class AodvAgent:
    def __init__(self, node_id: int, net: "Network", cfg: AodvConfig):
        self.id = node_id
        self.net = net
        self.cfg = cfg
        self.table: dict[int, RoutingTableEntry] = {}
        self.own_seq = 0
        self._request_id = 0
        self.seen: set[tuple[int, int]] = set()
        self.stash = SweepStash()
        self.queues: dict[int, deque] = {}
        self.queued = 0
        self.fail_since: dict[int, int] = {}
        self.discovering: dict[int, object] = {}
        self.last_active: dict[int, int] = {}
        self._refine_rr = 0
        self.stats = {"rreq_originated": 0, "refinement_stashed": 0, "duplicates": 0,
                      "route_losses": 0}

    # --- queues -----------------------------------------------------------

    def service_keys(self) -> list[int]:
        return sorted(d for d, q in self.queues.items() if q)

    def _enqueue(self, pkt: "Packet", now: int) -> bool:
        if self.queued >= self.cfg.queue_capacity:
            self.net.drop(pkt, self.id, "queue_full")
            return False
        self.queues.setdefault(pkt.dst, deque()).append(pkt)
        self.queued += 1
        self.last_active[pkt.dst] = now
        return True

    def originate(self, pkt: "Packet", now: int) -> None:
        if self._enqueue(pkt, now) and self.valid_entry(pkt.dst, now) is None:
            self.ensure_discovery(pkt.dst)

    def receive(self, pkt: "Packet", now: int) -> None:
        self.originate(pkt, now)
        self.net.scheduler.kick()

    def take(self, dest: int, limit_bytes: int, max_count: int) -> list:
        q = self.queues.get(dest)
        out = []
        used = 0
        while q and len(out) < max_count and used + q[0].size <= limit_bytes:
            pkt = q.popleft()
            used += pkt.size
            out.append(pkt)
        self.queued -= len(out)
        return out

    def next_hop(self, dest: int, now: int) -> int | None:
        e = self.valid_entry(dest, now)
        if e is None:
            self.ensure_discovery(dest)
            return None
        return e.next_hop

    # --- routing table ------------------------------------------------------

    def valid_entry(self, dest: int, now: int) -> RoutingTableEntry | None:
        e = self.table.get(dest)
        return e if e is not None and e.usable(now) else None

    def install(self, dest: int, next_hop: int, hops: int, seq: int, reason: str) -> bool:
        now = self.net.engine.now
        if dest == self.id:
            return False
        if self.net.nodes[self.id].mac.table.fresh(next_hop, now, self.net.nodes[self.id].mac.staleness) is None:
            return False
        cur = self.table.get(dest)
        if not should_replace(cur, seq, hops, now):
            if cur is not None and cur.usable(now) and cur.next_hop == next_hop and cur.hop_count == hops:
                cur.expires_at = now + self.cfg.route_lifetime
            return False
        self.table[dest] = RoutingTableEntry(dest, next_hop, hops, seq, now + self.cfg.route_lifetime)
        if self.stash.pending is not None and self.stash.pending.destination == dest:
            self.stash = SweepStash()
        retry = self.discovering.pop(dest, None)
        self.net.engine.cancel(retry)
        self.net.route_changed(self.id, reason)
        self.net.scheduler.kick()
        return True

    def _invalidate_via(self, nh: int) -> list[int]:
        lost = []
        for dest, e in sorted(self.table.items()):
            if e.valid and e.next_hop == nh:
                e.valid = False
                e.dest_seq += 1
                lost.append(dest)
        if lost:
            self.net.route_changed(self.id, "route_loss")
        return lost

    def table_dump(self) -> list[tuple[int, int, int, int, int]]:
        return [(d, e.next_hop, e.hop_count, e.dest_seq, e.expires_at)
                for d, e in sorted(self.table.items()) if e.valid]

    # --- loss detection -------------------------------------------------------

    def link_failed(self, dest: int, nh: int, now: int) -> None:
        if nh in self.fail_since:
            return
        self.fail_since[nh] = now
        self.net.engine.after(self.cfg.loss_detect_window, EventKind.TIMER, self.id,
                              self._check_loss, nh)

    def link_ok(self, dest: int, nh: int, now: int) -> None:
        self.fail_since.pop(nh, None)
        self.last_active[dest] = now
        e = self.table.get(dest)
        if e is not None and e.valid:
            e.expires_at = now + self.cfg.route_lifetime

    def _check_loss(self, ev) -> None:
        nh = ev.payload
        if nh not in self.fail_since:
            return
        now = self.net.engine.now
        del self.fail_since[nh]
        if self.net.link_rate(self.id, nh, now) is not None:
            self.net.scheduler.kick()
            return
        self.stats["route_losses"] += 1
        self.net.trace.record("route_loss", node=self.id, next_hop=nh)
        for dest in self._invalidate_via(nh):
            if self.queues.get(dest) or self._active(dest, now):
                self.originate_rreq(dest)

    def _active(self, dest: int, now: int) -> bool:
        t = self.last_active.get(dest)
        return t is not None and now - t <= self.cfg.active_window

    # --- discovery ------------------------------------------------------------

    def _next_request_id(self) -> int:
        self._request_id += 1
        return self._request_id

    def ensure_discovery(self, dest: int) -> None:
        if dest not in self.discovering and dest != self.id:
            self.originate_rreq(dest)

    def _neighbors_by_quality(self, now: int, exclude: int | None = None) -> list[int]:
        mac = self.net.nodes[self.id].mac
        nbs = [n for n in mac.fresh_neighbors(now) if n != exclude]
        return sorted(nbs, key=lambda n: (-mac.table[n].last_snr, n))

    def originate_rreq(self, dest: int) -> RouteRequestFields:
        net = self.net
        now = net.engine.now
        self.own_seq += 1
        known = self.table.get(dest)
        req = RouteRequestFields(
            origin=self.id, destination=dest, origin_seq=self.own_seq,
            request_id=self._next_request_id(), dest_seq=known.dest_seq if known else 0,
        )
        self.seen.add((self.id, req.request_id))
        self.stats["rreq_originated"] += 1
        net.trace.record("rreq", node=self.id, destination=dest, request_id=req.request_id)
        for nb in self._neighbors_by_quality(now):
            net.send_control(self.id, nb, "rreq", req, RREQ_BYTES, self._peer_handle_rreq(nb))
        self.stash_for_sweep(req)
        self.discovering[dest] = net.engine.after(self.cfg.rreq_retry, EventKind.TIMER, self.id,
                                                  self._retry, dest)
        return req

    def _peer_handle_rreq(self, nb: int):
        agent = self.net.nodes[nb].agent
        return lambda req, prev: agent.handle_rreq(req, prev)

    def _retry(self, ev) -> None:
        dest = ev.payload
        self.discovering.pop(dest, None)
        now = self.net.engine.now
        if self.valid_entry(dest, now) is None and self.queues.get(dest):
            self.originate_rreq(dest)

    def handle_rreq(self, req: RouteRequestFields, prev: int) -> None:
        net = self.net
        key = (req.origin, req.request_id)
        if key in self.seen:
            self.stats["duplicates"] += 1
            return
        self.seen.add(key)
        now = net.engine.now
        self.install(req.origin, prev, req.hop_count + 1, req.origin_seq, "reverse_route")
        if req.destination == self.id:
            self.own_seq = max(self.own_seq + 1, req.dest_seq)
            rep = RouteReplyFields(self.id, self.own_seq, 0, self.id, req.origin)
            net.send_control(self.id, prev, "rrep", rep, RREP_BYTES, self._peer_handle_rrep(prev))
            return
        e = self.valid_entry(req.destination, now)
        if e is not None and e.dest_seq >= req.dest_seq and e.next_hop != prev:
            rep = RouteReplyFields(req.destination, e.dest_seq, e.hop_count, self.id, req.origin)
            net.send_control(self.id, prev, "rrep", rep, RREP_BYTES, self._peer_handle_rrep(prev))
            return
        if req.hop_count + 1 >= self.cfg.ttl:
            return
        fwd = req.relayed()
        for nb in self._neighbors_by_quality(now, exclude=prev):
            net.send_control(self.id, nb, "rreq", fwd, RREQ_BYTES, self._peer_handle_rreq(nb))

    def _peer_handle_rrep(self, nb: int):
        agent = self.net.nodes[nb].agent
        return lambda rep, prev: agent.handle_rrep(rep, prev)

    def handle_rrep(self, rep: RouteReplyFields, prev: int) -> None:
        net = self.net
        now = net.engine.now
        self.install(rep.destination, prev, rep.hop_count_to_dest + 1, rep.dest_seq, "rrep")
        if rep.origin == self.id:
            return
        back = self.valid_entry(rep.origin, now)
        if back is None:
            net.trace.record("rrep_dropped", node=self.id, origin=rep.origin)
            return
        fwd = RouteReplyFields(rep.destination, rep.dest_seq, rep.hop_count_to_dest + 1,
                               rep.responder, rep.origin)
        net.send_control(self.id, back.next_hop, "rrep", fwd, RREP_BYTES,
                         self._peer_handle_rrep(back.next_hop))

    # --- sweep piggybacking -------------------------------------------------

    def stash_for_sweep(self, req: RouteRequestFields) -> None:
        """Single slot; the newest request replaces whatever was waiting."""
        self.stash = SweepStash(req, self.net.engine.now)

    def take_sweep_payload(self) -> RouteRequestFields | None:
        if self.cfg.refinement and self.stash.pending is None:
            self.refine_policy()
        req = self.stash.pending
        self.stash = SweepStash()
        return req

    def refine_policy(self) -> RouteRequestFields | None:
        """Stash a refinement request while some active route is multi-hop.

        Destinations take turns, one per beacon interval.
        """
        now = self.net.engine.now
        multi = []
        for dest in sorted(self.last_active):
            e = self.valid_entry(dest, now)
            if e is not None and e.hop_count > 1 and (self._active(dest, now) or self.queues.get(dest)):
                multi.append(e)
        if not multi:
            return None
        e = multi[self._refine_rr % len(multi)]
        self._refine_rr += 1
        req = RouteRequestFields(self.id, e.destination, self.own_seq, self._next_request_id(),
                                 dest_seq=e.dest_seq)
        self.stats["refinement_stashed"] += 1
        self.stash_for_sweep(req)
        return req

    def respond_enhanced_ssw(self, payload: RouteRequestFields, initiator: int) -> RouteReplyFields | None:
        """Answer a piggybacked request from our own table, or stay legacy."""
        now = self.net.engine.now
        if payload.destination == self.id:
            self.own_seq = max(self.own_seq, payload.dest_seq)
            return RouteReplyFields(self.id, self.own_seq, 0, self.id, payload.origin)
        e = self.valid_entry(payload.destination, now)
        if e is None or e.dest_seq < payload.dest_seq or e.next_hop == initiator:
            return None
        return RouteReplyFields(payload.destination, e.dest_seq, e.hop_count, self.id, payload.origin)

    def apply_refinement(self, reply: RouteReplyFields, via: int) -> bool:
        return self.install(reply.destination, via, reply.hop_count_to_dest + 1, reply.dest_seq,
                            "refinement")

"""Backpressure routing for directional links, fed by periodic HELLO messages.

Weights are w_ij = (Q_i - Q_j - V * ETX_ij) * R_ij.  Directional links cannot
be overheard, so queue lengths travel in HELLOs instead of snooped headers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .engine import MS, SECOND, EventKind
from .mac import HELLO_BYTES

if TYPE_CHECKING:  # pragma: no cover
    from .network import Network

ETX_ALPHA = 0.9
ETX_CAP = 10.0


@dataclass
class NeighborState:
    q_remote: int = 0
    r_est: float = 0.0
    success_ratio: float = 1.0
    last_hello_at: int | None = None
    advertised_rate: float = 0.0

    @property
    def etx(self) -> float:
        return min(1.0 / self.success_ratio, ETX_CAP)


@dataclass
class BackpressureState:
    q_local: int = 0
    neighbors: dict[int, NeighborState] = field(default_factory=dict)
    v: float = 2.0
    hello_interval: int = 1 * SECOND
    reroute_period: int = 10 * MS

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("V must be non-negative")

    def fresh(self, now: int) -> list[int]:
        """Neighbours heard within three HELLO intervals with a usable rate."""
        window = 3 * self.hello_interval
        return sorted(
            j for j, n in self.neighbors.items()
            if n.last_hello_at is not None and now - n.last_hello_at <= window and n.r_est > 0
        )


@dataclass(frozen=True)
class HelloMessage:
    src: int
    queue_len: int
    advertised_rate: float
    timestamp: int


def compute_weight(state: BackpressureState, j: int) -> float:
    n = state.neighbors[j]
    return (state.q_local - n.q_remote - state.v * n.etx) * n.r_est


def select_next_hop(state: BackpressureState, neighbors) -> tuple[int | None, dict[int, float]]:
    """Positive-weight argmax over ``neighbors``; ties go to the lowest id.

    Returns (choice or None for hold, weights by neighbour).
    """
    weights = {j: compute_weight(state, j) for j in sorted(neighbors)}
    best = None
    for j, w in weights.items():
        if best is None or w > weights[best]:
            best = j
    if best is None or weights[best] <= 0:
        return None, weights
    return best, weights


def update_etx(state: BackpressureState, j: int, success: bool, alpha: float = ETX_ALPHA) -> float:
    """EWMA of per-attempt success; ETX = 1 / ratio, capped."""
    n = state.neighbors.setdefault(j, NeighborState())
    n.success_ratio = alpha * n.success_ratio + (1 - alpha) * (1.0 if success else 0.0)
    n.success_ratio = max(n.success_ratio, 1.0 / ETX_CAP)
    return n.etx


@dataclass
class BcpConfig:
    v: float = 2.0
    hello_interval: int = 1 * SECOND
    reroute_period: int = 10 * MS
    queue_capacity: int = 20_000
    hello_offset: int = 5 * MS


class BcpAgent:
    """One node's backpressure forwarding toward a single sink.

    A positive choice sticks until the next HELLO arrival or a failed TXOP;
    a hold is re-examined every reroute period.
    """

    def __init__(self, node_id: int, net: "Network", cfg: BcpConfig, sink: int):
        self.id = node_id
        self.net = net
        self.cfg = cfg
        self.sink = sink
        self.state = BackpressureState(v=cfg.v, hello_interval=cfg.hello_interval,
                                       reroute_period=cfg.reroute_period)
        self.queue: deque = deque()
        self.choice: int | None = None
        self._reroute = None
        self.hello_rounds = 0
        self.hello_sent = 0
        self.decisions: list[tuple[int, dict[int, float], int | None]] = []

    @property
    def is_sink(self) -> bool:
        return self.id == self.sink

    def start(self) -> None:
        self.net.engine.at(self.cfg.hello_offset, EventKind.TIMER, self.id, self._hello_timer)
        if not self.is_sink:
            self._arm_reroute()

    # --- queue ---------------------------------------------------------------

    def service_keys(self) -> list[int]:
        return [self.sink] if self.queue and not self.is_sink else []

    def originate(self, pkt, now: int) -> None:
        if len(self.queue) >= self.cfg.queue_capacity:
            self.net.drop(pkt, self.id, "queue_full")
            return
        self.queue.append(pkt)
        self.state.q_local = len(self.queue)

    def receive(self, pkt, now: int) -> None:
        self.originate(pkt, now)
        self.net.scheduler.kick()

    def take(self, key: int, limit_bytes: int, max_count: int) -> list:
        out = []
        used = 0
        q = self.queue
        while q and len(out) < max_count and used + q[0].size <= limit_bytes:
            pkt = q.popleft()
            used += pkt.size
            out.append(pkt)
        self.state.q_local = len(q)
        return out

    def next_hop(self, key: int, now: int) -> int | None:
        return self.choice

    @property
    def queued(self) -> int:
        return len(self.queue)

    # --- link outcomes ------------------------------------------------------

    def link_failed(self, key: int, nh: int, now: int) -> None:
        update_etx(self.state, nh, False)
        # the link is down as far as we can tell; wait for a HELLO to re-rate it
        self.state.neighbors[nh].r_est = 0.0
        self.choice = None
        self.reevaluate("failure")

    def link_ok(self, key: int, nh: int, now: int) -> None:
        update_etx(self.state, nh, True)

    # --- HELLO ----------------------------------------------------------------

    def _hello_timer(self, ev) -> None:
        self.emit_hello()
        self.net.engine.after(self.cfg.hello_interval, EventKind.TIMER, self.id, self._hello_timer)

    def emit_hello(self) -> int:
        net = self.net
        now = net.engine.now
        self.hello_rounds += 1
        sent = 0
        qlen = 0 if self.is_sink else len(self.queue)
        for nb in net.nodes[self.id].mac.fresh_neighbors(now):
            rate = net.link_rate(self.id, nb, now) or 0.0
            msg = HelloMessage(self.id, qlen, rate, now)
            peer = net.nodes[nb].agent
            net.send_control(self.id, nb, "hello", msg, HELLO_BYTES,
                             lambda m, prev, peer=peer: peer.handle_hello(m))
            sent += 1
        self.hello_sent += sent
        net.trace.record("hello", node=self.id, queue_len=qlen, neighbors=sent)
        return sent

    def handle_hello(self, msg: HelloMessage) -> None:
        now = self.net.engine.now
        n = self.state.neighbors.setdefault(msg.src, NeighborState())
        n.q_remote = 0 if msg.src == self.sink else msg.queue_len
        n.last_hello_at = now
        n.advertised_rate = msg.advertised_rate
        n.r_est = self.net.link_rate(self.id, msg.src, now) or 0.0
        self.reevaluate("hello")

    # --- decisions ------------------------------------------------------------

    def reevaluate(self, reason: str) -> int | None:
        if self.is_sink:
            return None
        now = self.net.engine.now
        self.state.q_local = len(self.queue)
        choice, weights = select_next_hop(self.state, self.state.fresh(now))
        self.choice = choice
        self.decisions.append((now, weights, choice))
        self.net.trace.record("bcp_decision", node=self.id, reason=reason, q_local=self.state.q_local,
                              weights={str(k): v for k, v in weights.items()}, choice=choice)
        if choice is None:
            self._arm_reroute()
        else:
            self.net.engine.cancel(self._reroute)
            self._reroute = None
            self.net.scheduler.kick()
        return choice

    def _arm_reroute(self) -> None:
        if self._reroute is None:
            self._reroute = self.net.engine.after(self.cfg.reroute_period, EventKind.TIMER, self.id,
                                                  self._on_reroute)

    def _on_reroute(self, ev) -> None:
        self._reroute = None
        self.reevaluate("reroute")

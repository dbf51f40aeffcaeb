"""CBR sources, per-flow accounting and the throughput / delay reports."""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .engine import SECOND, EventKind

DEFAULT_PACKET_SIZE = 7935


class Packet:
    __slots__ = ("flow", "seq", "created", "size", "dst", "hops")

    def __init__(self, flow: int, seq: int, created: int, size: int, dst: int):
        self.flow = flow
        self.seq = seq
        self.created = created
        self.size = size
        self.dst = dst
        self.hops = 0

    def __repr__(self):
        return f"Packet(flow={self.flow}, seq={self.seq}, created={self.created})"


@dataclass(frozen=True)
class Flow:
    src: int
    dst: int
    rate: int  # bit/s
    packet_size: int = DEFAULT_PACKET_SIZE
    start: int = 0
    stop: int = 10 * SECOND

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"flow rate must be positive, got {self.rate}")
        if self.packet_size <= 0:
            raise ValueError("packet size must be positive")
        if not self.start < self.stop:
            raise ValueError("flow start must precede stop")
        if self.src == self.dst:
            raise ValueError("flow source and destination coincide")

    def period_ns(self) -> float:
        return self.packet_size * 8 * SECOND / self.rate

    def creation_time(self, k: int) -> int:
        """Exact integer creation time of packet ``k`` (phase 0 at start)."""
        return self.start + (k * self.packet_size * 8 * SECOND) // self.rate

    def packets_by(self, t: int) -> int:
        """Number of packets created at or before ``t``."""
        if t < self.start:
            return 0
        # k counts iff floor(k * bits * 1e9 / rate) <= last, i.e. k * bits * 1e9 < (last + 1) * rate
        last = min(t, self.stop - 1) - self.start
        per = self.packet_size * 8 * SECOND
        return -(-((last + 1) * self.rate) // per)


class CbrSource:
    """Creates packets in batches on traffic ticks.

    Ticks run every max(TXOP, packet period); each tick releases every packet
    whose creation time has passed, stamped with its exact creation time.
    """

    def __init__(self, flow_id: int, flow: Flow, net, tick: int):
        self.flow_id = flow_id
        self.flow = flow
        self.net = net
        self.tick = max(tick, int(flow.period_ns()))
        self.next_seq = 0

    def start(self) -> None:
        self.net.engine.at(self.flow.start, EventKind.TRAFFIC, self.flow.src, self._on_tick)

    def _on_tick(self, ev) -> None:
        now = self.net.engine.now
        f = self.flow
        upto = f.packets_by(now)
        agent = self.net.nodes[f.src].agent
        metrics = self.net.metrics
        for k in range(self.next_seq, upto):
            pkt = Packet(self.flow_id, k, f.creation_time(k), f.packet_size, f.dst)
            metrics.generated[self.flow_id] += 1
            agent.originate(pkt, now)
        self.next_seq = upto
        total = f.packets_by(f.stop - 1)
        if upto < total:
            nxt = min(now + self.tick, f.creation_time(total - 1))
            self.net.engine.at(nxt, EventKind.TRAFFIC, f.src, self._on_tick)
        self.net.scheduler.kick()


@dataclass
class MetricsCollector:
    """Accumulators owned by one run."""

    flows: list[Flow]
    generated: list[int] = field(default_factory=list)
    dropped: list[int] = field(default_factory=list)
    created: list[list[int]] = field(default_factory=list)
    delivered: list[list[int]] = field(default_factory=list)
    hops: list[list[int]] = field(default_factory=list)
    overhead_bytes: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    overhead_frames: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    queue_samples: list[tuple[int, dict[int, int]]] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.flows)
        self.generated = [0] * n
        self.dropped = [0] * n
        self.created = [[] for _ in range(n)]
        self.delivered = [[] for _ in range(n)]
        self.hops = [[] for _ in range(n)]

    def count(self, category: str, frames: int, nbytes: int) -> None:
        self.overhead_frames[category] += frames
        self.overhead_bytes[category] += nbytes

    def deliver(self, pkt: Packet, t: int) -> None:
        self.created[pkt.flow].append(pkt.created)
        self.delivered[pkt.flow].append(t)
        self.hops[pkt.flow].append(pkt.hops)

    def drop(self, pkt: Packet) -> None:
        self.dropped[pkt.flow] += 1

    def delays(self, flow: int | None = None) -> np.ndarray:
        flows = range(len(self.flows)) if flow is None else [flow]
        parts = [np.asarray(self.delivered[f], dtype=np.int64) - np.asarray(self.created[f], dtype=np.int64)
                 for f in flows]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def throughput_series(delivered_at, sizes, window: int, duration: int) -> tuple[np.ndarray, np.ndarray]:
    """Delivered bits per window divided by the window length.

    Windows [k*window, (k+1)*window) tile [0, duration); a final partial
    window is normalised by its own length.  Returns (window starts, bit/s).
    """
    if window <= 0:
        raise ValueError("window must be positive")
    starts = np.arange(0, duration, window, dtype=np.int64)
    bits = np.zeros(len(starts))
    t = np.asarray(delivered_at, dtype=np.int64)
    if t.size:
        idx = t // window
        keep = idx < len(starts)
        np.add.at(bits, idx[keep], (np.asarray(sizes, dtype=np.float64) * 8)[keep]
                  if np.ndim(sizes) else sizes * 8.0)
    lengths = np.minimum(starts + window, duration) - starts
    return starts, bits / (lengths / SECOND)


def delay_cdf(samples) -> list[tuple[int, float]]:
    """Empirical CDF as (delay, fraction <= delay) at each distinct delay.

    Returns an empty list when there are no samples.
    """
    x = np.sort(np.asarray(samples, dtype=np.int64))
    if x.size == 0:
        return []
    values, counts = np.unique(x, return_counts=True)
    frac = np.cumsum(counts) / x.size
    return list(zip(values.tolist(), frac.tolist()))


def cdf_at(cdf: list[tuple[int, float]], d: float) -> float:
    if not cdf:
        return 0.0
    values = [v for v, _ in cdf]
    i = int(np.searchsorted(values, d, side="right"))
    return 0.0 if i == 0 else cdf[i - 1][1]


@dataclass
class MetricsReport:
    flows: list[Flow]
    window: int
    duration: int
    throughput: list[tuple[int, int, float]]  # (t_start, flow, bps)
    delays: list[tuple[int, int, int]]        # (flow, created, delivered)
    cdf: list[tuple[int, float]]
    generated: list[int]
    delivered_count: list[int]
    dropped: list[int]
    queued_at_end: list[int]
    overhead_bytes: dict[str, int]
    overhead_frames: dict[str, int]

    def flow_throughput(self, flow: int) -> tuple[np.ndarray, np.ndarray]:
        rows = [(t, b) for t, f, b in self.throughput if f == flow]
        return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])

    def flow_delays(self, flow: int) -> tuple[np.ndarray, np.ndarray]:
        c = np.array([r[1] for r in self.delays if r[0] == flow], dtype=np.int64)
        d = np.array([r[2] for r in self.delays if r[0] == flow], dtype=np.int64)
        return c, d - c if c.size else d

    def write_csv(self, out_dir: str) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = []

        def _write(name, header, rows):
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
            paths.append(path)

        _write("throughput.csv", ("t_start", "flow", "bps"),
               ((t, f, f"{b:.3f}") for t, f, b in self.throughput))
        _write("delays.csv", ("flow", "created_ns", "delivered_ns"), self.delays)
        _write("cdf.csv", ("delay_ns", "fraction"), ((d, f"{p:.9f}") for d, p in self.cdf))
        _write("overhead.csv", ("category", "bytes"),
               ((k, self.overhead_bytes[k]) for k in sorted(self.overhead_bytes)))
        return paths


def build_report(metrics: MetricsCollector, queued: list[int], window: int, duration: int) -> MetricsReport:
    rows = []
    for f, flow in enumerate(metrics.flows):
        starts, bps = throughput_series(metrics.delivered[f], flow.packet_size, window, duration)
        rows.extend((int(t), f, float(b)) for t, b in zip(starts, bps))
    rows.sort(key=lambda r: (r[0], r[1]))
    delays = []
    for f in range(len(metrics.flows)):
        delays.extend(sorted(zip([f] * len(metrics.created[f]), metrics.created[f], metrics.delivered[f])))
    return MetricsReport(
        flows=list(metrics.flows), window=window, duration=duration,
        throughput=rows, delays=delays, cdf=delay_cdf(metrics.delays()),
        generated=list(metrics.generated),
        delivered_count=[len(d) for d in metrics.delivered],
        dropped=list(metrics.dropped), queued_at_end=list(queued),
        overhead_bytes=dict(metrics.overhead_bytes), overhead_frames=dict(metrics.overhead_frames),
    )

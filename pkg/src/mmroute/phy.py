"""Geometric link model: free-space 60 GHz loss, box blockers, sectors, rates."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

WAVELENGTH = 0.005  # metres at 60 GHz

TX_POWER_DBM = 18.0
NOISE_DBM = -70.6
PREAMBLE_THRESHOLD_DBM = -68.0
ENERGY_DETECT_DBM = -48.0  # kept for completeness; the scheduled MAC has no carrier sense

HUMAN_DIMS = (0.5, 0.5, 1.8)
HUMAN_ATTENUATION_DB = 20.0


class Position(NamedTuple):
    x: float
    y: float
    z: float

    def distance(self, other: "Position") -> float:
        return math.dist(self, other)


def path_loss(d: float) -> float:
    """Free-space path loss in dB at distance ``d`` metres."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 20.0 * math.log10(4.0 * math.pi * d / WAVELENGTH)


class Trajectory:
    """Piecewise-linear waypoint path, clamped at both ends."""

    def __init__(self, waypoints: Sequence[tuple[int, Position]]):
        if not waypoints:
            raise ValueError("trajectory needs at least one waypoint")
        pts = sorted(waypoints, key=lambda w: w[0])
        self.times = [t for t, _ in pts]
        self.points = [Position(*p) for _, p in pts]
        for p in self.points:
            if not all(math.isfinite(c) for c in p):
                raise ValueError(f"non-finite waypoint {p}")

    @property
    def static(self) -> bool:
        return len(self.points) == 1

    def position_at(self, t: int) -> Position:
        if t <= self.times[0]:
            return self.points[0]
        if t >= self.times[-1]:
            return self.points[-1]
        i = bisect_right(self.times, t)
        t0, t1 = self.times[i - 1], self.times[i]
        p0, p1 = self.points[i - 1], self.points[i]
        if t1 == t0:
            return p1
        f = (t - t0) / (t1 - t0)
        return Position(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y), p0.z + f * (p1.z - p0.z))


def position_at(waypoints: Sequence[tuple[int, Position]], t: int) -> Position:
    return Trajectory(waypoints).position_at(t)


@dataclass
class Blocker:
    """Axis-aligned box that adds ``attenuation`` dB while active.

    ``windows`` holds half-open [on, off) intervals in ns.  An empty list
    with ``always_on`` False means the blocker never obstructs anything.
    """

    path: Trajectory
    dims: tuple[float, float, float] = HUMAN_DIMS
    attenuation: float = HUMAN_ATTENUATION_DB
    windows: list[tuple[int, int]] = field(default_factory=list)
    always_on: bool = False

    def __post_init__(self):
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"blocker dims must be positive: {self.dims}")
        if self.attenuation < 0:
            raise ValueError("blocker attenuation must be >= 0")

    def active_at(self, t: int) -> bool:
        if self.always_on:
            return True
        return any(on <= t < off for on, off in self.windows)

    def box_at(self, t: int) -> tuple[Position, Position]:
        c = self.path.position_at(t)
        hx, hy, hz = self.dims[0] / 2, self.dims[1] / 2, self.dims[2] / 2
        return Position(c.x - hx, c.y - hy, c.z - hz), Position(c.x + hx, c.y + hy, c.z + hz)


def segment_hits_box(p: Position, q: Position, lo: Position, hi: Position) -> bool:
    """Slab test: does the closed segment p-q touch the box [lo, hi]?"""
    t0, t1 = 0.0, 1.0
    for a, b, mn, mx in zip(p, q, lo, hi):
        d = b - a
        if d == 0.0:
            if a < mn or a > mx:
                return False
            continue
        ta, tb = (mn - a) / d, (mx - a) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


def is_blocked(tx: Position, rx: Position, blocker: Blocker, t: int = 0) -> bool:
    """Geometric test only; whether the blocker is switched on is separate."""
    lo, hi = blocker.box_at(t)
    return segment_hits_box(tx, rx, lo, hi)


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float
    path_loss: float
    blocker_loss: float
    antenna_gain: float
    noise: float = NOISE_DBM
    preamble_threshold: float = PREAMBLE_THRESHOLD_DBM

    @property
    def rx_power(self) -> float:
        return self.tx_power - self.path_loss - self.blocker_loss + self.antenna_gain

    @property
    def detectable(self) -> bool:
        return self.rx_power >= self.preamble_threshold


def link_snr(budget: LinkBudget) -> float:
    return budget.rx_power - budget.noise


@dataclass(frozen=True)
class RateTable:
    """Ordered (min_snr_db, rate_bps) staircase; lower bound is closed."""

    tiers: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.tiers:
            raise ValueError("rate table is empty")
        snrs = [s for s, _ in self.tiers]
        rates = [r for _, r in self.tiers]
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError("rate table SNR thresholds must be strictly increasing")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("rate table rates must be strictly increasing")
        if rates[0] <= 0:
            raise ValueError("rates must be positive")

    @property
    def floor_snr(self) -> float:
        return self.tiers[0][0]

    @property
    def max_rate(self) -> float:
        return self.tiers[-1][1]


def rate_for_snr(snr: float, table: RateTable) -> float | None:
    """Highest rate whose threshold is at or below ``snr``; None if unusable."""
    i = bisect_right([s for s, _ in table.tiers], snr)
    if i == 0:
        return None
    return table.tiers[i - 1][1]


# Eight-tier staircase on SC-PHY style rates.  Thresholds are placed so the
# bundled room geometry gives >= 3.85 Gb/s on the direct 7 m link, 3.08 Gb/s
# on the ~9 m relay hops, and nothing at all once a 20 dB blocker sits on
# the direct path.
DEFAULT_RATE_TABLE = RateTable((
    (15.0, 385e6),
    (18.0, 770e6),
    (21.0, 1155e6),
    (24.0, 1540e6),
    (27.0, 1925e6),
    (29.0, 2310e6),
    (31.0, 3080e6),
    (33.0, 3850e6),
))


@dataclass(frozen=True)
class SectorAntenna:
    """K equal azimuth wedges, sector s centred on s * 360/K degrees."""

    sectors: int = 8
    main_gain: float = 15.0
    side_gain: float = -10.0
    quasi_omni_gain: float = 0.0

    def __post_init__(self):
        if self.sectors < 1:
            raise ValueError("need at least one sector")

    @property
    def width(self) -> float:
        return 360.0 / self.sectors

    def sector_toward(self, src: Position, dst: Position) -> int:
        az = math.degrees(math.atan2(dst.y - src.y, dst.x - src.x)) % 360.0
        return int(((az + self.width / 2) % 360.0) // self.width) % self.sectors

    def gain(self, sector: int | None, src: Position, dst: Position) -> float:
        """Gain of ``sector`` toward ``dst``; None means quasi-omni."""
        if sector is None:
            return self.quasi_omni_gain
        return self.main_gain if sector == self.sector_toward(src, dst) else self.side_gain


class PhyModel:
    """Stateless link evaluation over node trajectories and blockers."""

    def __init__(
        self,
        trajectories: dict[int, Trajectory],
        blockers: Sequence[Blocker] = (),
        antenna: SectorAntenna | None = None,
        rate_table: RateTable = DEFAULT_RATE_TABLE,
        tx_power: float = TX_POWER_DBM,
        noise: float = NOISE_DBM,
        preamble_threshold: float = PREAMBLE_THRESHOLD_DBM,
        energy_detect: float = ENERGY_DETECT_DBM,
    ):
        self.trajectories = trajectories
        self.blockers = list(blockers)
        self.antenna = antenna or SectorAntenna()
        self.rate_table = rate_table
        self.tx_power = tx_power
        self.noise = noise
        self.preamble_threshold = preamble_threshold
        self.energy_detect = energy_detect

    def position(self, node: int, t: int) -> Position:
        return self.trajectories[node].position_at(t)

    def blocker_loss(self, a: Position, b: Position, t: int) -> float:
        loss = 0.0
        for blk in self.blockers:
            if blk.active_at(t) and is_blocked(a, b, blk, t):
                loss += blk.attenuation
        return loss

    def budget(self, tx: int, rx: int, t: int, tx_sector: int | None, rx_sector: int | None) -> LinkBudget:
        a, b = self.position(tx, t), self.position(rx, t)
        gain = self.antenna.gain(tx_sector, a, b) + self.antenna.gain(rx_sector, b, a)
        return LinkBudget(
            self.tx_power, path_loss(a.distance(b)), self.blocker_loss(a, b, t), gain,
            self.noise, self.preamble_threshold,
        )

    def sweep_snrs(self, initiator: int, responder: int, t: int) -> list[float | None]:
        """Per-sector SNR seen by a quasi-omni responder; None where undetectable."""
        a, b = self.position(initiator, t), self.position(responder, t)
        pl = path_loss(a.distance(b))
        blk = self.blocker_loss(a, b, t)
        out: list[float | None] = []
        for s in range(self.antenna.sectors):
            bud = LinkBudget(
                self.tx_power, pl, blk,
                self.antenna.gain(s, a, b) + self.antenna.quasi_omni_gain,
                self.noise, self.preamble_threshold,
            )
            out.append(link_snr(bud) if bud.detectable else None)
        return out

    def data_rate(self, tx: int, rx: int, t: int, tx_sector: int | None, rx_sector: int | None) -> float | None:
        bud = self.budget(tx, rx, t, tx_sector, rx_sector)
        if not bud.detectable:
            return None
        return rate_for_snr(link_snr(bud), self.rate_table)

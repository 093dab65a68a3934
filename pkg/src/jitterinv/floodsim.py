"""Discrete-event simulation of jittered RREQ flooding.

Radio model: unit disk of radius ``range``. A transmission occupies the
channel for ``packet_airtime`` ms; a neighbor receives it at the end of
the airtime unless some other transmission audible at that neighbor (its
own included) overlaps the frame. Every spoiled reception counts as one
collision. No carrier sense, retransmission or capture.

Flooding: the source transmits at initiation time without jitter. A node
forwards only the first copy it receives, after a delay drawn from the
jitter mechanism with the metric of the link the copy arrived on. The
destination never forwards; the first copy reaching it fixes the route.

Events are processed in ``(time, node, sequence)`` order, so a run is a
pure function of its inputs and seeds.
"""

from __future__ import annotations

import dataclasses
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .jitter import JitterMechanism, Kind, check_metric, make_mechanism, route_metric, sample_jitter

log = logging.getLogger(__name__)

TX_START = "tx_start"
TX_END = "tx_end"
RX = "rx"
COLLISION = "collision"

_KIND_CODES = {kind: i for i, kind in enumerate(Kind)}


def _link(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Topology:
    """Unit-disk graph over node positions with symmetric link metrics."""

    positions: np.ndarray
    range: float
    neighbors: tuple[tuple[int, ...], ...]
    metrics: Mapping[tuple[int, int], float]

    @classmethod
    def from_positions(
        cls,
        positions,
        range: float,
        metrics: Mapping[tuple[int, int], float] | Callable[[int, int], float] | None = None,
        rng: np.random.Generator | None = None,
        metric_range: tuple[float, float] = (0.5, 1.0),
    ) -> "Topology":
        """Links join nodes at distance ``<= range``.

        ``metrics`` may map links to values, compute them, or be omitted,
        in which case they are drawn uniformly from ``metric_range`` with
        ``rng`` in ascending link order.
        """
        pos = np.array(positions, dtype=np.float64).reshape(-1, 2)
        if not range > 0:
            raise ValidationError("range must be positive")
        diff = pos[:, None, :] - pos[None, :, :]
        adjacent = np.hypot(diff[..., 0], diff[..., 1]) <= range
        np.fill_diagonal(adjacent, False)
        links = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(adjacent)))]
        if metrics is None:
            if rng is None:
                raise ValidationError("need rng to draw link metrics")
            lo, hi = metric_range
            values = rng.uniform(lo, hi, size=len(links)) if links else []
            table = {link: float(v) for link, v in zip(links, values)}
        elif callable(metrics):
            table = {link: float(metrics(*link)) for link in links}
        else:
            given = {_link(*k): float(v) for k, v in metrics.items()}
            missing = [link for link in links if link not in given]
            if missing:
                raise ValidationError(f"no metric for links {missing}")
            table = {link: given[link] for link in links}
        for value in table.values():
            check_metric(value)
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in adjacent)
        pos.setflags(write=False)
        return cls(pos, float(range), nbrs, table)

    @property
    def node_count(self) -> int:
        return len(self.positions)

    @property
    def links(self) -> list[tuple[int, int]]:
        return sorted(self.metrics)

    def metric(self, u: int, v: int) -> float:
        return self.metrics[_link(u, v)]

    def component(self, source: int) -> set[int]:
        seen = {source}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.neighbors[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 100
    area: tuple[float, float] = (1000.0, 1000.0)
    range: float = 250.0
    j_max: float = 250.0
    c: float = 40.0
    alpha: float = 0.0
    metric_range: tuple[float, float] = (0.5, 1.0)
    duration: float = 100.0  # s
    discovery_batch: int = 10
    batch_period: float = 2.0  # s
    packet_airtime: float = 1.0  # ms
    # ms; sources of a batch start uniformly within it (None: whole period)
    initiation_spread: float | None = None
    mechanism: str = "bounded-adaptive"
    collisions: bool = True
    seed: int = 5148

    def __post_init__(self):
        object.__setattr__(self, "area", tuple(float(a) for a in self.area))
        object.__setattr__(self, "metric_range", tuple(float(m) for m in self.metric_range))
        if self.node_count < 2:
            raise ValidationError("need at least two nodes")
        if min(self.area) <= 0 or self.range <= 0:
            raise ValidationError("area and range must be positive")
        lo, hi = self.metric_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValidationError(f"metric range must lie within (0, 1], got {self.metric_range}")
        if self.duration <= 0 or self.batch_period <= 0:
            raise ValidationError("duration and batch period must be positive")
        if not 0 <= self.discovery_batch <= self.node_count:
            raise ValidationError("discovery batch must be between 0 and the node count")
        if self.packet_airtime < 0:
            raise ValidationError("packet airtime must be non-negative")
        if not 0 <= self.spread_ms <= self.batch_period * 1000.0:
            raise ValidationError("initiation spread must lie within the batch period")
        self.jitter()  # validates mechanism parameters

    def jitter(self) -> JitterMechanism:
        return make_mechanism(self.mechanism, self.j_max, self.alpha, self.c)

    @property
    def batch_count(self) -> int:
        return math.ceil(self.duration / self.batch_period - 1e-9)

    @property
    def spread_ms(self) -> float:
        if self.initiation_spread is None:
            return self.batch_period * 1000.0
        return float(self.initiation_spread)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DiscoveryResult:
    discovery_id: int
    source: int
    destination: int
    start_ms: float
    found: bool
    route_metric: float  # nan when not found
    discovery_time: float  # ms, nan when not found
    hop_count: int
    path: tuple[int, ...] = ()
    reachable: bool = True


@dataclass(frozen=True)
class Event:
    time_ms: float
    kind: str
    node: int
    discovery_id: int
    tx_id: int


@dataclass
class SimStats:
    results: list[DiscoveryResult] = field(default_factory=list)
    collisions: int = 0

    @property
    def initiated(self) -> int:
        return len(self.results)

    @property
    def found(self) -> list[DiscoveryResult]:
        return [r for r in self.results if r.found]

    @property
    def unreachable(self) -> int:
        return sum(1 for r in self.results if not r.reachable)

    @property
    def mean_route_metric(self) -> float:
        found = self.found
        return math.fsum(r.route_metric for r in found) / len(found) if found else math.nan

    @property
    def mean_discovery_time(self) -> float:
        found = self.found
        return math.fsum(r.discovery_time for r in found) / len(found) if found else math.nan


class _Flood:
    __slots__ = ("source", "destination", "start", "parent", "arrival")

    def __init__(self, source: int, destination: int, start: float):
        self.source = source
        self.destination = destination
        self.start = start
        self.parent: dict[int, int] = {source: -1}
        self.arrival: float | None = None


class FloodEngine:
    """Shared event timeline for any number of concurrent floods."""

    def __init__(
        self,
        topology: Topology,
        mechanism: JitterMechanism,
        rng: np.random.Generator,
        packet_airtime: float = 1.0,
        collisions: bool = True,
        event_log: list[Event] | None = None,
    ):
        self.topology = topology
        self.mechanism = mechanism
        self.rng = rng
        self.airtime = float(packet_airtime)
        self.collisions_enabled = collisions
        self.log = event_log
        self.collisions = 0
        self._heap: list = []
        self._seq = 0
        self._floods: list[_Flood] = []
        # tx_id -> (node, discovery, start, end)
        self._tx: list[tuple[int, int, float, float]] = []
        # per receiver: transmissions audible there that may still overlap
        self._audible: list[list[int]] = [[] for _ in range(topology.node_count)]

    def _push(self, time: float, node: int, kind: str, payload: int) -> None:
        heapq.heappush(self._heap, (time, node, self._seq, kind, payload))
        self._seq += 1

    def _record(self, time: float, kind: str, node: int, did: int, tx: int) -> None:
        if self.log is not None:
            self.log.append(Event(time, kind, node, did, tx))

    def add_discovery(self, source: int, destination: int, start_ms: float) -> int:
        n = self.topology.node_count
        if source == destination:
            raise ValidationError("source and destination must differ")
        if not (0 <= source < n and 0 <= destination < n):
            raise ValidationError("source/destination not in topology")
        did = len(self._floods)
        self._floods.append(_Flood(source, destination, float(start_ms)))
        self._schedule_tx(source, did, float(start_ms))
        return did

    def _schedule_tx(self, node: int, did: int, start: float) -> None:
        tx = len(self._tx)
        self._tx.append((node, did, start, start + self.airtime))
        self._push(start, node, TX_START, tx)

    def run(self) -> None:
        heap = self._heap
        while heap:
            time, node, _, kind, tx = heapq.heappop(heap)
            if kind == TX_START:
                self._on_start(time, node, tx)
            else:
                self._on_end(time, node, tx)

    def _on_start(self, time: float, node: int, tx: int) -> None:
        did = self._tx[tx][1]
        self._record(time, TX_START, node, did, tx)
        if self.collisions_enabled:
            self._audible[node].append(tx)
            for r in self.topology.neighbors[node]:
                self._audible[r].append(tx)
        self._push(time + self.airtime, node, TX_END, tx)

    def _spoiled(self, receiver: int, tx: int, start: float, end: float) -> bool:
        txs = self._tx
        live = [o for o in self._audible[receiver] if txs[o][3] > start]
        self._audible[receiver] = live
        for o in live:
            if o != tx and txs[o][2] < end:
                return True
        return False

    def _on_end(self, time: float, node: int, tx: int) -> None:
        _, did, start, end = self._tx[tx]
        flood = self._floods[did]
        self._record(time, TX_END, node, did, tx)
        topo = self.topology
        for r in topo.neighbors[node]:
            if self.collisions_enabled and self._spoiled(r, tx, start, end):
                self.collisions += 1
                self._record(time, COLLISION, r, did, tx)
                continue
            self._record(time, RX, r, did, tx)
            if r in flood.parent:
                continue
            flood.parent[r] = node
            if r == flood.destination:
                flood.arrival = time
                continue
            delay = sample_jitter(self.mechanism, topo.metric(node, r), self.rng)
            self._schedule_tx(r, did, time + delay)

    def result(self, did: int) -> DiscoveryResult:
        flood = self._floods[did]
        reachable = flood.destination in self.topology.component(flood.source)
        if flood.arrival is None:
            return DiscoveryResult(
                did, flood.source, flood.destination, flood.start, False,
                math.nan, math.nan, 0, (), reachable,
            )
        path = [flood.destination]
        while path[-1] != flood.source:
            path.append(flood.parent[path[-1]])
        path.reverse()
        metrics = [self.topology.metric(u, v) for u, v in zip(path, path[1:])]
        return DiscoveryResult(
            did, flood.source, flood.destination, flood.start, True,
            route_metric(metrics), flood.arrival - flood.start, len(path) - 1,
            tuple(path), reachable,
        )

    def results(self) -> list[DiscoveryResult]:
        return [self.result(did) for did in range(len(self._floods))]


def generate_topology(config: SimConfig, rng: np.random.Generator) -> Topology:
    """Uniform node placement over the area, metrics uniform over the metric range."""
    width, height = config.area
    positions = rng.uniform((0.0, 0.0), (width, height), size=(config.node_count, 2))
    return Topology.from_positions(positions, config.range, rng=rng, metric_range=config.metric_range)


def run_discovery(
    topology: Topology,
    mechanism: JitterMechanism,
    source: int,
    destination: int,
    rng: np.random.Generator,
    packet_airtime: float = 1.0,
    collisions: bool = True,
    event_log: list[Event] | None = None,
) -> tuple[DiscoveryResult, int]:
    """Flood one RREQ from ``source`` starting at t = 0.

    Returns the discovery outcome and the number of spoiled receptions.
    """
    engine = FloodEngine(topology, mechanism, rng, packet_airtime, collisions, event_log)
    did = engine.add_discovery(source, destination, 0.0)
    engine.run()
    return engine.result(did), engine.collisions


def _campaign_rngs(config: SimConfig):
    kind = config.jitter().kind
    topo = np.random.default_rng([config.seed, 0])
    traffic = np.random.default_rng([config.seed, 1])
    jitter = np.random.default_rng([config.seed, 2, _KIND_CODES[kind]])
    return topo, traffic, jitter


def plan_traffic(config: SimConfig, rng: np.random.Generator) -> list[tuple[float, int, int]]:
    """``(start_ms, source, destination)`` for every discovery of a campaign."""
    plan = []
    n = config.node_count
    for b in range(config.batch_count):
        start = b * config.batch_period * 1000.0
        if config.discovery_batch == 0:
            continue
        sources = rng.choice(n, size=config.discovery_batch, replace=False)
        offsets = rng.uniform(0.0, config.spread_ms, size=len(sources))
        for s, offset in zip(sources, offsets):
            d = int(rng.integers(n - 1))
            if d >= s:
                d += 1
            plan.append((start + float(offset), int(s), d))
    plan.sort()
    return plan


def run_campaign(config: SimConfig, event_log: list[Event] | None = None) -> SimStats:
    """All discoveries of one campaign on a single shared timeline.

    Topology and traffic depend only on ``config.seed``; jitter draws also
    on the mechanism, so mechanisms compared at equal seeds face the same
    network and the same source/destination pairs.
    """
    topo_rng, traffic_rng, jitter_rng = _campaign_rngs(config)
    topology = generate_topology(config, topo_rng)
    engine = FloodEngine(
        topology, config.jitter(), jitter_rng, config.packet_airtime, config.collisions, event_log
    )
    for start, s, d in plan_traffic(config, traffic_rng):
        engine.add_discovery(s, d, start)
    engine.run()
    return SimStats(engine.results(), engine.collisions)


@dataclass(frozen=True)
class DensityCell:
    node_count: int
    mechanism: str
    repetitions: int
    mean_route_metric: float
    se_route_metric: float
    mean_discovery_time: float
    se_discovery_time: float
    mean_collisions: float
    se_collisions: float
    found_fraction: float

    def as_record(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in dataclasses.asdict(self).items()}


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.array([v for v in values if not math.isnan(v)], dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    se = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size >= 2 else math.nan
    return float(np.mean(arr)), se


def campaign_seed(seed: int, node_count: int, repetition: int) -> int:
    return int(np.random.SeedSequence([seed, node_count, repetition]).generate_state(1)[0])


def density_sweep(
    base_config: SimConfig,
    node_counts: Iterable[int],
    repetitions: int,
    mechanisms: Sequence[str] = ("rfc5148", "adaptive", "bounded-adaptive"),
    progress: Callable[[str], None] | None = None,
    on_campaign: Callable[[dict], None] | None = None,
    record_events: bool = False,
) -> list[DensityCell]:
    """Campaign statistics per ``(node_count, mechanism)`` over repetitions.

    Repetition ``r`` at node count ``N`` uses the campaign seed derived
    from ``(base seed, N, r)`` for every mechanism. ``on_campaign`` gets a
    dict with ``node_count, mechanism, repetition, seed, stats`` (and
    ``events`` when ``record_events``) after each campaign.
    """
    node_counts = list(node_counts)
    if not node_counts:
        raise ValidationError("need at least one node count")
    if repetitions < 1:
        raise ValidationError("repetitions must be >= 1")
    cells = []
    for count in node_counts:
        for mech in mechanisms:
            metrics, times, colls, found = [], [], [], []
            for rep in range(repetitions):
                cfg = base_config.replace(
                    node_count=count, mechanism=mech, seed=campaign_seed(base_config.seed, count, rep)
                )
                events: list[Event] | None = [] if record_events else None
                stats = run_campaign(cfg, events)
                metrics.append(stats.mean_route_metric)
                times.append(stats.mean_discovery_time)
                colls.append(float(stats.collisions))
                found.append(len(stats.found) / stats.initiated if stats.initiated else math.nan)
                if on_campaign is not None:
                    entry = {"node_count": count, "mechanism": mech, "repetition": rep,
                             "seed": cfg.seed, "stats": stats}
                    if record_events:
                        entry["events"] = events
                    on_campaign(entry)
                if progress:
                    progress(f"N={count} {mech} rep={rep}: metric={stats.mean_route_metric:.4f} "
                             f"time={stats.mean_discovery_time:.1f}ms collisions={stats.collisions}")
            m_metric, se_metric = _mean_se(metrics)
            m_time, se_time = _mean_se(times)
            m_coll, se_coll = _mean_se(colls)
            m_found, _ = _mean_se(found)
            cells.append(DensityCell(count, mech, repetitions, m_metric, se_metric,
                                     m_time, se_time, m_coll, se_coll, m_found))
    return cells


DISCOVERY_COLUMNS = (
    "node_count", "mechanism", "repetition", "discovery_id", "source", "destination",
    "start_ms", "found", "reachable", "route_metric", "discovery_time_ms", "hop_count",
)

SUMMARY_COLUMNS = tuple(f.name for f in dataclasses.fields(DensityCell))


EVENT_COLUMNS = ("node_count", "mechanism", "repetition", "time_ms", "kind", "node",
                 "discovery_id", "tx_id")


def discovery_records(entry: dict) -> list[dict]:
    """Per-discovery rows of one campaign entry (see :func:`density_sweep`)."""
    key = {k: entry[k] for k in ("node_count", "mechanism", "repetition")}
    return [
        {
            **key,
            "discovery_id": r.discovery_id,
            "source": r.source,
            "destination": r.destination,
            "start_ms": r.start_ms,
            "found": int(r.found),
            "reachable": int(r.reachable),
            "route_metric": None if math.isnan(r.route_metric) else r.route_metric,
            "discovery_time_ms": None if math.isnan(r.discovery_time) else r.discovery_time,
            "hop_count": r.hop_count,
        }
        for r in entry["stats"].results
    ]


def event_records(entry: dict) -> list[dict]:
    key = {k: entry[k] for k in ("node_count", "mechanism", "repetition")}
    return [{**key, **dataclasses.asdict(e)} for e in entry.get("events") or ()]

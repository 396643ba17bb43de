"""Deterministic discrete-event MANET simulator.

Nodes move by random waypoint, talk over a unit-disk radio with a fixed
per-hop latency, route with AODV, and carry CBR flows. Attackers either
flood RREQs for an address that no longer exists or silently drop
everything they should relay. Every send, receive, forward and drop is
logged as an NS-2 style :class:`~manetids.trace.TraceRecord`.

Energy is kept in integer nanojoules so per-node conservation is exact.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import aodv, mobility
from .errors import ConfigInvalid, MissingReverseRoute
from .mobility import Bounds, MotionState, RwpParams
from .trace import ENERGY_UNTRACKED, NO_REASON, IpInfo, TraceRecord

BROADCAST = -1

# drop reasons written to the -Nw field
LINK_BREAK = "link-break"
ENERGY = "energy"
QUEUE_FULL = "queue-full"
DROPPER = "dropper"
DUPLICATE = "duplicate"
NO_ROUTE = "no-route"
NO_REVERSE_ROUTE = "no-reverse-route"

CONTROL_SIZES = {"rreq": 48, "rrep": 44, "rerr": 32}


@dataclass(frozen=True)
class CbrFlow:
    src: int
    dst: int
    rate: float = 4.0
    start: float = 0.0
    stop: float = 200.0


@dataclass(frozen=True)
class DosFlood:
    target_addr: int
    rate: float = 20.0
    start: float = 50.0
    stop: float = 150.0


@dataclass(frozen=True)
class PacketDropper:
    start: float = 50.0
    stop: float = 150.0


@dataclass(frozen=True)
class AttackerSpec:
    node: int
    kind: Union[DosFlood, PacketDropper]


@dataclass(frozen=True)
class EnergyModel:
    initial: float = 100.0
    tx_cost: float = 0.002
    rx_cost: float = 0.001

    def __post_init__(self) -> None:
        for name in ("initial", "tx_cost", "rx_cost"):
            if getattr(self, name) < 0:
                raise ConfigInvalid(f"energy.{name} must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    node_count: int = 15
    bounds: Bounds = Bounds(500.0, 500.0)
    duration: float = 200.0
    rwp: RwpParams = RwpParams(0.0, 20.0, 2.0)
    radio_range: float = 250.0
    packet_size: int = 512
    flows: tuple[CbrFlow, ...] = ()
    attackers: tuple[AttackerSpec, ...] = ()
    energy: EnergyModel = EnergyModel()
    seed: int = 1
    paper_mode: bool = True
    address_space: int = 256
    per_hop_latency: float = 0.002
    mobility_tick: float = 0.1
    queue_capacity: int = 64
    rreq_retries: int = 2
    rreq_timeout: float = 1.0
    track_energy: bool = True
    level_tag: str = "Nl"
    mobile: bool = True
    positions: Optional[tuple[tuple[float, float], ...]] = None

    def validate(self) -> "ScenarioConfig":
        n = self.node_count
        if n < 2:
            raise ConfigInvalid(f"node_count >= 2 violated (node_count = {n})")
        if not self.duration > 0:
            raise ConfigInvalid(f"duration > 0 violated (duration = {self.duration})")
        if not self.radio_range > 0:
            raise ConfigInvalid(f"radio_range > 0 violated (radio_range = {self.radio_range})")
        if self.paper_mode and not 2 <= len(self.flows) <= 10:
            raise ConfigInvalid(f"2 <= flows <= 10 violated in paper mode (flows = {len(self.flows)})")
        if self.address_space < n:
            raise ConfigInvalid("address_space must cover every live node")
        if self.per_hop_latency <= 0 or self.mobility_tick <= 0:
            raise ConfigInvalid("per_hop_latency and mobility_tick must be positive")
        if self.queue_capacity < 1 or self.rreq_retries < 0 or self.rreq_timeout <= 0:
            raise ConfigInvalid("queue_capacity >= 1, rreq_retries >= 0, rreq_timeout > 0 required")
        if self.level_tag not in ("Nl", "NI"):
            raise ConfigInvalid(f"level_tag must be Nl or NI, got {self.level_tag!r}")
        for i, f in enumerate(self.flows):
            if f.src == f.dst:
                raise ConfigInvalid(f"flow {i}: src != dst violated")
            if not (0 <= f.src < n and 0 <= f.dst < n):
                raise ConfigInvalid(f"flow {i}: endpoints must be live nodes")
            if not (0 <= f.start < f.stop <= self.duration):
                raise ConfigInvalid(f"flow {i}: start < stop <= duration violated")
            if not f.rate > 0:
                raise ConfigInvalid(f"flow {i}: rate > 0 violated")
        seen = set()
        for a in self.attackers:
            if not 0 <= a.node < n:
                raise ConfigInvalid(f"attacker {a.node} is not a live node")
            if a.node in seen:
                raise ConfigInvalid(f"attacker {a.node} listed twice")
            seen.add(a.node)
            k = a.kind
            if not k.start < k.stop:
                raise ConfigInvalid(f"attacker {a.node}: start < stop violated")
            if isinstance(k, DosFlood):
                if not n <= k.target_addr < self.address_space:
                    raise ConfigInvalid(
                        f"attacker {a.node}: target_addr >= node_count violated "
                        f"(target_addr = {k.target_addr}, node_count = {n})"
                    )
                if not k.rate > 0:
                    raise ConfigInvalid(f"attacker {a.node}: rate > 0 violated")
        if self.positions is not None:
            if len(self.positions) != n:
                raise ConfigInvalid("positions must list one (x, y) per node")
            for x, y in self.positions:
                if not self.bounds.contains(x, y):
                    raise ConfigInvalid(f"position ({x}, {y}) lies outside the area")
        return self

    def without_attackers(self) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, attackers=())


@dataclass
class NodeCounters:
    sent: int = 0
    received: int = 0
    forwarded: int = 0
    dropped: int = 0
    energy_used_nj: int = 0

    @property
    def energy_used(self) -> float:
        return self.energy_used_nj / 1e9


@dataclass
class FlowStats:
    generated: int = 0
    delivered: int = 0
    dropped: int = 0

    @property
    def delivery_ratio(self) -> float:
        return self.delivered / self.generated if self.generated else float("nan")


@dataclass
class Packet:
    uid: int
    ptype: str
    src: int
    dst: int
    size: int
    payload: object = None
    flow: Optional[int] = None
    _ip: Optional[IpInfo] = field(default=None, repr=False, compare=False)

    @property
    def ip(self) -> IpInfo:
        if self._ip is None:
            self._ip = IpInfo(self.src, self.dst, self.ptype, self.size, self.uid)
        return self._ip


@dataclass
class NodeRuntime:
    id: int
    motion: MotionState
    rng: np.random.Generator
    aodv: aodv.AodvNode
    energy_nj: int
    role: str = "normal"
    counters: NodeCounters = field(default_factory=NodeCounters)
    queues: dict[int, deque] = field(default_factory=dict)
    pending: dict[int, int] = field(default_factory=dict)
    dropper: Optional[PacketDropper] = None
    qx: float = 0.0
    qy: float = 0.0

    def quantize_position(self) -> None:
        self.qx = round(self.motion.x, 2)
        self.qy = round(self.motion.y, 2)


@dataclass
class RunResult:
    records: list[TraceRecord]
    counters: list[NodeCounters]
    flow_stats: list[FlowStats]
    packet_counts: Counter
    final_energy_nj: list[int]
    in_flight: list[int]
    config: ScenarioConfig

    def rreq_receives(self) -> int:
        return self.packet_counts[("r", "rreq")]


def neighbors(positions: Sequence[tuple[float, float]], radio_range: float) -> list[list[int]]:
    """Unit-disk adjacency: i and j are linked iff their distance is at most the range."""
    if not radio_range > 0:
        raise ValueError("radio range must be positive")
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    d = np.hypot(p[:, None, 0] - p[None, :, 0], p[:, None, 1] - p[None, :, 1])
    adj = d <= radio_range
    np.fill_diagonal(adj, False)
    return [np.flatnonzero(row).tolist() for row in adj]


def ground_truth(config: ScenarioConfig) -> dict:
    """Attack intervals, attacker ids and scenario facts needed by feature extraction."""
    attackers = []
    for a in config.attackers:
        entry = {"node": a.node, "start": a.kind.start, "stop": a.kind.stop}
        if isinstance(a.kind, DosFlood):
            entry.update(kind="dos", target_addr=a.kind.target_addr, rate=a.kind.rate)
        else:
            entry.update(kind="dropper")
        attackers.append(entry)
    return {
        "node_count": config.node_count,
        "duration": config.duration,
        "initial_energy": config.energy.initial if config.track_energy else None,
        "seed": config.seed,
        "attackers": attackers,
        "flows": [
            {"src": f.src, "dst": f.dst, "rate": f.rate, "start": f.start, "stop": f.stop}
            for f in config.flows
        ],
    }


class Simulator:
    def __init__(self, config: ScenarioConfig) -> None:
        self.cfg = config.validate()
        self.now = 0.0
        self._tq = 0.0
        self._heap: list = []
        self._seq = 0
        self._uid = 0
        self._token = 0
        self.records: list[TraceRecord] = []
        self.packet_counts: Counter = Counter()
        self.flow_stats = [FlowStats() for _ in config.flows]
        self.tx_nj = round(config.energy.tx_cost * 1e9)
        self.rx_nj = round(config.energy.rx_cost * 1e9)
        self.nodes = [self._make_node(i) for i in range(config.node_count)]
        for a in config.attackers:
            node = self.nodes[a.node]
            node.role = "attacker"
            if isinstance(a.kind, PacketDropper):
                node.dropper = a.kind
        self.adj = neighbors([n.motion.position for n in self.nodes], config.radio_range)

    def _make_node(self, i: int) -> NodeRuntime:
        cfg = self.cfg
        rng = mobility.node_rng(cfg.seed, i)
        if cfg.positions is not None:
            x, y = cfg.positions[i]
            motion = (
                MotionState(x, y, x, y, 0.0, 0.0, cfg.rwp.pause_time)
                if cfg.mobile
                else mobility.static_state(x, y)
            )
        else:
            motion = mobility.initial_state(cfg.bounds, cfg.rwp, rng)
            if not cfg.mobile:
                motion = mobility.static_state(motion.x, motion.y)
        node = NodeRuntime(i, motion, rng, aodv.AodvNode(i), round(cfg.energy.initial * 1e9))
        node.quantize_position()
        return node

    # -- event queue -------------------------------------------------

    def _schedule(self, t: float, kind: str, *args) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, args))

    def run(self) -> RunResult:
        cfg = self.cfg
        if cfg.mobile:
            self._schedule(cfg.mobility_tick, "mobility", 1)
        for i, f in enumerate(cfg.flows):
            self._schedule(f.start, "cbr", i, 0)
        for a in cfg.attackers:
            if isinstance(a.kind, DosFlood):
                self._schedule(a.kind.start, "attack", a.node, 0)
        last = 0.0
        while self._heap:
            t, _, kind, args = heapq.heappop(self._heap)
            if t >= cfg.duration:
                heapq.heappush(self._heap, (t, 0, kind, args))
                break
            assert t >= last, "event causality violated"
            last = self.now = t
            self._tq = round(t, 9)
            getattr(self, "_on_" + kind)(*args)
        return RunResult(
            records=self.records,
            counters=[n.counters for n in self.nodes],
            flow_stats=self.flow_stats,
            packet_counts=self.packet_counts,
            final_energy_nj=[n.energy_nj for n in self.nodes],
            in_flight=self._in_flight(),
            config=cfg,
        )

    def _in_flight(self) -> list[int]:
        counts = [0] * len(self.cfg.flows)
        for node in self.nodes:
            for q in node.queues.values():
                for pkt in q:
                    counts[pkt.flow] += 1
        for _, _, kind, args in self._heap:
            if kind == "deliver" and args[2].flow is not None:
                counts[args[2].flow] += 1
        return counts

    # -- bookkeeping -------------------------------------------------

    def _new_uid(self) -> int:
        self._uid += 1
        return self._uid

    def _debit(self, node: NodeRuntime, cost: int) -> None:
        cost = min(cost, node.energy_nj)
        node.energy_nj -= cost
        node.counters.energy_used_nj += cost

    def _record(self, event: str, node: NodeRuntime, hs: int, hd: int, pkt: Packet, reason: str = NO_REASON) -> None:
        level = "RTR"
        if pkt.ptype == "cbr" and (
            (event == "s" and node.id == pkt.src) or (event == "r" and node.id == pkt.dst)
        ):
            level = "AGT"
        if self.cfg.track_energy:
            # quantize to the 6 printed decimals via integer microjoules
            ne = ((node.energy_nj + 500) // 1000) / 1e6
        else:
            ne = ENERGY_UNTRACKED
        self.records.append(
            TraceRecord(
                event, self._tq, hs, hd, node.id, node.qx, node.qy, 0.0, ne,
                self.cfg.level_tag, level, reason, "0", "0", "0", "0",
                pkt.ip,
            )
        )
        self.packet_counts[(event, pkt.ptype)] += 1
        c = node.counters
        if event == "s":
            c.sent += 1
        elif event == "r":
            c.received += 1
        elif event == "f":
            c.forwarded += 1
        else:
            c.dropped += 1

    def _drop(self, node: NodeRuntime, pkt: Packet, reason: str, hs: int, hd: int = BROADCAST) -> None:
        self._record("d", node, hs, hd, pkt, reason)
        if pkt.flow is not None:
            self.flow_stats[pkt.flow].dropped += 1

    def _dropper_active(self, node: NodeRuntime) -> bool:
        d = node.dropper
        return d is not None and d.start <= self.now < d.stop

    # -- radio -------------------------------------------------------

    def transmit(self, u: int, pkt: Packet, next_hop: Optional[int], originated: bool) -> bool:
        """Send ``pkt`` from ``u`` to ``next_hop`` (``None`` broadcasts).

        Returns False when the packet was dropped instead.
        """
        node = self.nodes[u]
        if node.energy_nj <= 0:
            self._drop(node, pkt, ENERGY, u, BROADCAST if next_hop is None else next_hop)
            return False
        if next_hop is not None and next_hop not in self.adj[u]:
            self._drop(node, pkt, LINK_BREAK, u, next_hop)
            rerr = node.aodv.handle_link_break(next_hop)
            if rerr is not None:
                self._send_rerr(u, rerr)
            return False
        self._debit(node, self.tx_nj)
        self._record("s" if originated else "f", node, u, BROADCAST if next_hop is None else next_hop, pkt)
        t = self.now + self.cfg.per_hop_latency
        for v in (self.adj[u] if next_hop is None else (next_hop,)):
            self._schedule(t, "deliver", v, u, pkt, next_hop is None)
        return True

    def _send_rerr(self, u: int, rerr: aodv.Rerr) -> None:
        pkt = Packet(self._new_uid(), "rerr", u, BROADCAST, CONTROL_SIZES["rerr"], rerr)
        self.transmit(u, pkt, None, originated=True)

    # -- handlers ----------------------------------------------------

    def _on_mobility(self, k: int) -> None:
        cfg = self.cfg
        t = k * cfg.mobility_tick
        for node in self.nodes:
            node.motion = mobility.step(node.motion, cfg.rwp, cfg.bounds, node.rng, t - node.motion.time)
            node.quantize_position()
        self.adj = neighbors([n.motion.position for n in self.nodes], cfg.radio_range)
        self._schedule((k + 1) * cfg.mobility_tick, "mobility", k + 1)

    def _on_cbr(self, i: int, k: int) -> None:
        f = self.cfg.flows[i]
        nxt = f.start + (k + 1) / f.rate
        if nxt < f.stop:
            self._schedule(nxt, "cbr", i, k + 1)
        self.flow_stats[i].generated += 1
        pkt = Packet(self._new_uid(), "cbr", f.src, f.dst, self.cfg.packet_size, None, i)
        self._send_data(f.src, pkt)

    def _send_data(self, u: int, pkt: Packet) -> None:
        node = self.nodes[u]
        if not node.queues.get(pkt.dst):
            route = node.aodv.lookup_next_hop(pkt.dst)
            if route is not None:
                # on a link break the packet is dropped inside transmit
                self.transmit(u, pkt, route[0], originated=True)
                return
        q = node.queues.setdefault(pkt.dst, deque())
        if len(q) >= self.cfg.queue_capacity:
            self._drop(node, pkt, QUEUE_FULL, u)
            return
        q.append(pkt)
        if node.aodv.lookup_next_hop(pkt.dst) is not None:
            self._flush(u, pkt.dst)
        elif pkt.dst not in node.pending:
            self._discover(u, pkt.dst, 0)

    def _discover(self, u: int, dest: int, attempt: int) -> None:
        node = self.nodes[u]
        rreq = node.aodv.originate_rreq(dest)
        self._token += 1
        node.pending[dest] = self._token
        pkt = Packet(self._new_uid(), "rreq", u, BROADCAST, CONTROL_SIZES["rreq"], rreq)
        self.transmit(u, pkt, None, originated=True)
        self._schedule(self.now + self.cfg.rreq_timeout, "timeout", u, dest, self._token, attempt)

    def _on_timeout(self, u: int, dest: int, token: int, attempt: int) -> None:
        node = self.nodes[u]
        if node.pending.get(dest) != token:
            return
        if node.aodv.lookup_next_hop(dest) is not None:
            del node.pending[dest]
            self._flush(u, dest)
            return
        if attempt < self.cfg.rreq_retries:
            self._discover(u, dest, attempt + 1)
            return
        del node.pending[dest]
        q = node.queues.pop(dest, deque())
        while q:
            self._drop(node, q.popleft(), NO_ROUTE, u)

    def _flush(self, u: int, dest: int) -> None:
        node = self.nodes[u]
        q = node.queues.get(dest)
        while q:
            route = node.aodv.lookup_next_hop(dest)
            if route is None:
                break
            self.transmit(u, q.popleft(), route[0], originated=True)
        if q:
            if dest not in node.pending:
                self._discover(u, dest, 0)
        else:
            node.queues.pop(dest, None)

    def _on_attack(self, a: int, k: int) -> None:
        node = self.nodes[a]
        spec = next(x.kind for x in self.cfg.attackers if x.node == a)
        nxt = spec.start + (k + 1) / spec.rate
        if nxt < spec.stop:
            self._schedule(nxt, "attack", a, k + 1)
        rreq = node.aodv.originate_rreq(spec.target_addr)
        pkt = Packet(self._new_uid(), "rreq", a, BROADCAST, CONTROL_SIZES["rreq"], rreq)
        self.transmit(a, pkt, None, originated=True)

    def _on_deliver(self, v: int, u: int, pkt: Packet, broadcast: bool) -> None:
        node = self.nodes[v]
        self._debit(node, self.rx_nj)
        self._record("r", node, u, BROADCAST if broadcast else v, pkt)
        getattr(self, "_recv_" + pkt.ptype)(node, u, pkt)

    def _recv_cbr(self, node: NodeRuntime, u: int, pkt: Packet) -> None:
        if pkt.dst == node.id:
            self.flow_stats[pkt.flow].delivered += 1
            return
        if self._dropper_active(node):
            self._drop(node, pkt, DROPPER, u)
            return
        route = node.aodv.lookup_next_hop(pkt.dst)
        if route is None:
            self._drop(node, pkt, NO_ROUTE, u)
            return
        self.transmit(node.id, pkt, route[0], originated=False)

    def _recv_rreq(self, node: NodeRuntime, u: int, pkt: Packet) -> None:
        rreq: aodv.Rreq = pkt.payload
        if self._dropper_active(node) and rreq.dest != node.id:
            self._drop(node, pkt, DROPPER, u)
            return
        action = node.aodv.handle_rreq(rreq, u)
        if isinstance(action, aodv.Discard):
            self._drop(node, pkt, DUPLICATE, u)
        elif isinstance(action, aodv.Rebroadcast):
            fwd = Packet(pkt.uid, "rreq", pkt.src, BROADCAST, pkt.size, action.rreq)
            self.transmit(node.id, fwd, None, originated=False)
        else:
            rrep = action.rrep
            reply = Packet(self._new_uid(), "rrep", node.id, rrep.origin, CONTROL_SIZES["rrep"], rrep)
            self.transmit(node.id, reply, action.next_hop, originated=True)
        if node.queues.get(rreq.origin):
            self._flush(node.id, rreq.origin)

    def _recv_rrep(self, node: NodeRuntime, u: int, pkt: Packet) -> None:
        rrep: aodv.Rrep = pkt.payload
        if self._dropper_active(node) and rrep.origin != node.id:
            self._drop(node, pkt, DROPPER, u)
            return
        try:
            action = node.aodv.handle_rrep(rrep, u)
        except MissingReverseRoute:
            self._drop(node, pkt, NO_REVERSE_ROUTE, u)
            return
        if isinstance(action, aodv.Consume):
            node.pending.pop(rrep.dest, None)
        else:
            fwd = Packet(pkt.uid, "rrep", pkt.src, pkt.dst, pkt.size, action.rrep)
            self.transmit(node.id, fwd, action.next_hop, originated=False)
        if node.queues.get(rrep.dest):
            self._flush(node.id, rrep.dest)

    def _recv_rerr(self, node: NodeRuntime, u: int, pkt: Packet) -> None:
        if self._dropper_active(node):
            self._drop(node, pkt, DROPPER, u)
            return
        out = node.aodv.handle_rerr(pkt.payload, u)
        if out is not None:
            self._send_rerr(node.id, out)


def run(config: ScenarioConfig) -> RunResult:
    return Simulator(config).run()


def generate_flows(
    node_count: int,
    count: int,
    seed: int,
    *,
    exclude: Sequence[int] = (),
    rate: float = 4.0,
    duration: float = 200.0,
    flow_duration: float = 50.0,
) -> tuple[CbrFlow, ...]:
    """Random CBR connections between distinct honest nodes."""
    allowed = [i for i in range(node_count) if i not in set(exclude)]
    if len(allowed) < 2 and count > 0:
        raise ConfigInvalid("need at least two honest nodes to place flows")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), 7919]))
    span = min(flow_duration, duration)
    flows = []
    for _ in range(count):
        src, dst = rng.choice(allowed, size=2, replace=False)
        start = math.floor(rng.uniform(0.0, duration - span) * 1000) / 1000
        flows.append(CbrFlow(int(src), int(dst), rate, start, min(start + span, duration)))
    return tuple(flows)

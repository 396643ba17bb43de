"""AODV routing state for a single node.

The node is a plain state machine: each handler updates the node's tables
and returns the action the simulator must carry out. Nothing here knows
about time, radios, or energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import MissingReverseRoute


@dataclass(frozen=True)
class RouteEntry:
    dest: int
    next_hop: int
    hop_count: int
    dest_seq: int
    valid: bool = True


@dataclass(frozen=True)
class Rreq:
    origin: int
    origin_seq: int
    rreq_id: int
    dest: int
    dest_seq_known: Optional[int]
    hop_count: int = 0

    @property
    def flood_id(self) -> tuple[int, int]:
        return (self.origin, self.rreq_id)


@dataclass(frozen=True)
class Rrep:
    dest: int
    dest_seq: int
    hop_count: int
    origin: int


@dataclass(frozen=True)
class Rerr:
    unreachable: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.unreachable:
            raise ValueError("Rerr must list at least one destination")


# Actions returned by the handlers.

@dataclass(frozen=True)
class Discard:
    pass


@dataclass(frozen=True)
class Rebroadcast:
    rreq: Rreq


@dataclass(frozen=True)
class Reply:
    rrep: Rrep
    next_hop: int


@dataclass(frozen=True)
class Consume:
    rrep: Rrep


@dataclass(frozen=True)
class Forward:
    rrep: Rrep
    next_hop: int


RreqAction = Union[Discard, Rebroadcast, Reply]
RrepAction = Union[Consume, Forward]


def route_update_rule(existing: Optional[RouteEntry], candidate: RouteEntry) -> RouteEntry:
    """Pick between an installed route and a newly learned one.

    The candidate wins when nothing valid is installed, when it carries a
    higher destination sequence number, or when the numbers tie and it is
    strictly shorter. Full ties keep the existing entry.
    """
    if not candidate.valid:
        raise ValueError("candidate route must be valid")
    if existing is None or not existing.valid:
        return candidate
    if candidate.dest_seq > existing.dest_seq:
        return candidate
    if candidate.dest_seq == existing.dest_seq and candidate.hop_count < existing.hop_count:
        return candidate
    return existing


@dataclass
class AodvNode:
    self_id: int
    seq: int = 0
    rreq_counter: int = 0
    table: dict[int, RouteEntry] = field(default_factory=dict)
    seen: set[tuple[int, int]] = field(default_factory=set)

    def lookup_next_hop(self, dest: int) -> Optional[tuple[int, int]]:
        if dest == self.self_id:
            return (self.self_id, 0)
        entry = self.table.get(dest)
        if entry is None or not entry.valid:
            return None
        return (entry.next_hop, entry.hop_count)

    def install(self, candidate: RouteEntry) -> RouteEntry:
        existing = self.table.get(candidate.dest)
        chosen = route_update_rule(existing, candidate)
        if chosen is candidate and existing is not None and existing.dest_seq > candidate.dest_seq:
            # replacing an invalidated entry must not roll its sequence number back
            chosen = replace(candidate, dest_seq=existing.dest_seq)
        self.table[candidate.dest] = chosen
        return chosen

    def originate_rreq(self, dest: int) -> Rreq:
        if dest == self.self_id:
            raise ValueError("a node always has a route to itself")
        if self.lookup_next_hop(dest) is not None:
            raise ValueError(f"node {self.self_id} already has a valid route to {dest}")
        self.seq += 1
        self.rreq_counter += 1
        known = self.table.get(dest)
        rreq = Rreq(
            origin=self.self_id,
            origin_seq=self.seq,
            rreq_id=self.rreq_counter,
            dest=dest,
            dest_seq_known=None if known is None else known.dest_seq,
            hop_count=0,
        )
        self.seen.add(rreq.flood_id)
        return rreq

    def handle_rreq(self, rreq: Rreq, prev_hop: int) -> RreqAction:
        if rreq.origin != self.self_id:
            self.install(RouteEntry(rreq.origin, prev_hop, rreq.hop_count + 1, rreq.origin_seq))
        if rreq.flood_id in self.seen:
            return Discard()
        self.seen.add(rreq.flood_id)

        if rreq.dest == self.self_id:
            self.seq += 1
            if rreq.dest_seq_known is not None and rreq.dest_seq_known > self.seq:
                self.seq = rreq.dest_seq_known
            return Reply(Rrep(self.self_id, self.seq, 0, rreq.origin), prev_hop)

        cached = self.table.get(rreq.dest)
        if cached is not None and cached.valid and (
            rreq.dest_seq_known is None or cached.dest_seq >= rreq.dest_seq_known
        ):
            return Reply(Rrep(rreq.dest, cached.dest_seq, cached.hop_count, rreq.origin), prev_hop)

        return Rebroadcast(replace(rreq, hop_count=rreq.hop_count + 1))

    def handle_rrep(self, rrep: Rrep, prev_hop: int) -> RrepAction:
        if rrep.dest != self.self_id:
            self.install(RouteEntry(rrep.dest, prev_hop, rrep.hop_count + 1, rrep.dest_seq))
        if rrep.origin == self.self_id:
            return Consume(rrep)
        back = self.lookup_next_hop(rrep.origin)
        if back is None:
            raise MissingReverseRoute(f"node {self.self_id} has no route back to {rrep.origin}")
        return Forward(replace(rrep, hop_count=rrep.hop_count + 1), back[0])

    def _invalidate(self, entry: RouteEntry, seq: int) -> RouteEntry:
        dead = replace(entry, valid=False, dest_seq=max(entry.dest_seq, seq))
        self.table[entry.dest] = dead
        return dead

    def handle_link_break(self, dead_next_hop: int) -> Optional[Rerr]:
        lost = []
        for dest in sorted(self.table):
            entry = self.table[dest]
            if entry.valid and entry.next_hop == dead_next_hop:
                dead = self._invalidate(entry, entry.dest_seq + 1)
                lost.append((dest, dead.dest_seq))
        return Rerr(tuple(lost)) if lost else None

    def handle_rerr(self, rerr: Rerr, sender: int) -> Optional[Rerr]:
        """Invalidate routes that went through ``sender`` to any listed destination.

        Returns the error to propagate further, or ``None`` when this node
        lost nothing.
        """
        lost = []
        for dest, seq in rerr.unreachable:
            entry = self.table.get(dest)
            if entry is not None and entry.valid and entry.next_hop == sender:
                dead = self._invalidate(entry, seq)
                lost.append((dest, dead.dest_seq))
        return Rerr(tuple(lost)) if lost else None

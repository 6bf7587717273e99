"""Channel-timeslot segments: status tables, bandwidth, and allocation.

A segment is a (channel, timeslot) pair within one frame's communication
window.  Capacity of a segment is the channel bandwidth divided by the
number of timeslots.  The allocator walks segments in descending
capacity order and takes every candidate that keeps the schedule
collision-free, until the rate requirement is met.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .errors import ConfigurationError, ContractViolation
from .spectrum import ChannelTable, ChannelId
from .topology import CommunicationGraph, Link, NodeId

SegmentId = tuple[ChannelId, int]

# segment states
FREE = "free"
OCCUPIED = "occupied"
ASSIGNED = "assigned"


def segment_capacity(table: ChannelTable, channel: ChannelId, num_slots: int) -> float:
    """Deliverable rate of one segment on `channel`, in bit/s."""
    if num_slots <= 0:
        raise ConfigurationError("num_slots must be positive, got %d" % num_slots)
    return table.bandwidth(channel) / num_slots


@lru_cache(maxsize=16)
def capacity_order(table: ChannelTable, num_slots: int) -> tuple[SegmentId, ...]:
    """All segments, highest capacity first; ties by lower channel, lower slot."""
    segs = [(c, t) for c in table.all_channels for t in range(num_slots)]
    segs.sort(key=lambda s: (-segment_capacity(table, s[0], num_slots), s[0], s[1]))
    return tuple(segs)


class SegmentTable:
    """One node's per-frame view of every segment's status.

    Free is the default; `occupied` and `assigned` are tracked as sets.
    Assigning (c, t) also marks (c', t) on every other channel Occupied:
    a single half-duplex transceiver cannot use a slot twice.
    """

    def __init__(self, owner: NodeId, frame: int, table: ChannelTable, num_slots: int):
        self.owner = owner
        self.frame = frame
        self.channel_table = table
        self.num_slots = num_slots
        self.universe: frozenset[SegmentId] = frozenset(
            (c, t) for c in table.all_channels for t in range(num_slots)
        )
        self.occupied: set[SegmentId] = set()
        self.assigned: set[SegmentId] = set()

    def status(self, seg: SegmentId) -> str:
        if seg not in self.universe:
            raise ContractViolation("segment %r outside table" % (seg,))
        if seg in self.assigned:
            return ASSIGNED
        if seg in self.occupied:
            return OCCUPIED
        return FREE

    def mark_channel_occupied(self, c: ChannelId) -> None:
        """Whole channel unusable this frame (PU sensed busy)."""
        for t in range(self.num_slots):
            self.occupied.add((c, t))

    def mark_occupied(self, seg: SegmentId) -> None:
        if seg not in self.assigned:
            self.occupied.add(seg)

    def assign(self, seg: SegmentId) -> None:
        c, t = seg
        self.assigned.add(seg)
        self.occupied.discard(seg)
        for other in self.channel_table.all_channels:
            if other != c:
                self.mark_occupied((other, t))

    def unassign(self, seg: SegmentId) -> None:
        """Roll back a tentative assignment (no ATIM-RES arrived)."""
        c, t = seg
        self.assigned.discard(seg)
        if not any((cc, t) in self.assigned for cc in self.channel_table.all_channels):
            for other in self.channel_table.all_channels:
                if other != c:
                    self.occupied.discard((other, t))

    def free_segments(self) -> frozenset[SegmentId]:
        return self.universe - self.occupied - self.assigned


def link_bandwidth(t1: SegmentTable, t2: SegmentTable) -> frozenset[SegmentId]:
    """B(u, v): segments free at both endpoints of a link."""
    if t1.frame != t2.frame:
        raise ContractViolation(
            "segment tables from different frames (%d vs %d)" % (t1.frame, t2.frame)
        )
    return t1.free_segments() & t2.free_segments()


@dataclass
class RateRequirement:
    """Per-session rate demand in bit/s; `remaining` is the unmet residue."""

    session: int
    requested: float
    remaining: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.requested < 0:
            raise ConfigurationError("negative rate requirement")
        if self.remaining is None:
            self.remaining = self.requested


@dataclass(frozen=True)
class Assignment:
    """Outcome of one negotiation: segments granted to a directed link."""

    link: Link
    segments: tuple[SegmentId, ...]
    achieved: float


def _conditions_ok(
    seg: SegmentId,
    link: Link,
    schedule,
    g: CommunicationGraph,
    literal_receiver_rule: bool,
) -> bool:
    c, t = seg
    u, v = link
    # (1) sender is not already committed in this timeslot
    if t in schedule.slots_incident(u):
        return False
    # (2) receiver likewise; the literal variant only bars its outgoing slots
    if literal_receiver_rule:
        if t in schedule.outgoing_slots(v):
            return False
    else:
        if t in schedule.slots_incident(v):
            return False
    users = schedule.users(c, t)
    if users:
        nb_v = g.neighbors(v)
        nb_u = g.neighbors(u)
        for lx in users:
            # (3) no same-segment transmitter audible at our receiver
            if lx[0] in nb_v:
                return False
            # (4) no same-segment receiver audible to our transmitter
            if lx[1] in nb_u:
                return False
    return True


def select_segments(
    link: Link,
    demand: RateRequirement,
    candidates: frozenset[SegmentId],
    schedule,
    g: CommunicationGraph,
    table: ChannelTable,
    num_slots: int,
    literal_receiver_rule: bool = False,
) -> Assignment:
    """Greedy allocation for one link against the known frame schedule.

    Walks segments by descending capacity (ties: lower channel, then
    lower slot), takes each candidate that passes the collision-free
    conditions and does not reuse a slot already taken for this link,
    and decrements `demand.remaining` by the segment capacity, floored
    at zero.  Stops as soon as the demand is met; a shortfall returns a
    partial assignment for the caller to retry next frame.
    """
    chosen: list[SegmentId] = []
    achieved = 0.0
    if demand.remaining > 0 and candidates:
        used_slots: set[int] = set()
        for seg in capacity_order(table, num_slots):
            if seg not in candidates or seg[1] in used_slots:
                continue
            if not _conditions_ok(seg, link, schedule, g, literal_receiver_rule):
                continue
            w = segment_capacity(table, seg[0], num_slots)
            chosen.append(seg)
            used_slots.add(seg[1])
            achieved += w
            demand.remaining = max(0.0, demand.remaining - w)
            if demand.remaining <= 0:
                break
    return Assignment(link=link, segments=tuple(chosen), achieved=achieved)


def validate_assignment(
    a: Assignment,
    schedule,
    g: CommunicationGraph,
    literal_receiver_rule: bool = False,
) -> list[str]:
    """Independent audit of an assignment against a schedule.

    Shares no logic with select_segments: works from a raw scan of the
    schedule's (link, segment) entries.  Returns human-readable
    violation strings, empty when the assignment is collision-free.
    """
    problems: list[str] = []
    u, v = a.link
    entries = [(lk, seg) for (lk, seg) in schedule]
    seen_slots: dict[int, SegmentId] = {}
    for seg in a.segments:
        c, t = seg
        if t in seen_slots:
            problems.append(
                "segments %r and %r of link %r share slot %d"
                % (seen_slots[t], seg, a.link, t)
            )
        seen_slots[t] = seg
        for (lk, (ec, et)) in entries:
            x, y = lk
            if et != t:
                continue
            if x == u or y == u:
                problems.append(
                    "slot %d already used by %r incident on sender %d" % (t, lk, u)
                )
            if literal_receiver_rule:
                if x == v:
                    problems.append(
                        "slot %d already used by outgoing %r of receiver %d" % (t, lk, v)
                    )
            elif x == v or y == v:
                problems.append(
                    "slot %d already used by %r incident on receiver %d" % (t, lk, v)
                )
            if ec == c:
                if x in g.neighbors(v):
                    problems.append(
                        "segment %r: transmitter %d of %r within range of receiver %d"
                        % (seg, x, lk, v)
                    )
                if y in g.neighbors(u):
                    problems.append(
                        "segment %r: receiver %d of %r within range of transmitter %d"
                        % (seg, y, lk, u)
                    )
    return problems


def update_from_beacons(
    table: SegmentTable,
    overheard: list[tuple[Link, Assignment]],
    neighbors: frozenset[NodeId] | set[NodeId],
    two_hop_channels: dict[NodeId, frozenset[int]] | None = None,
) -> None:
    """Fold overheard grants into a node's table.

    Every segment claimed by an overheard assignment with an endpoint in
    the owner's neighbor set becomes Occupied; claims from farther nodes
    are audible on the control channel but cannot interfere, so they are
    ignored.  `two_hop_channels` (identities and channel lists learned
    from beacons) is accepted for completeness; channel availability is
    already folded into the free lists exchanged during negotiation.
    """
    del two_hop_channels
    for (lk, assignment) in overheard:
        x, y = lk
        if x == table.owner or y == table.owner:
            continue
        if x in neighbors or y in neighbors:
            for seg in assignment.segments:
                table.mark_occupied(seg)

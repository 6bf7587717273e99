"""Frame cycle machinery: ATIM negotiation, TDMA schedule, retries, doze.

Each frame runs sensing, a beacon sub-window, mini-slotted contention on
the control channel, then the slotted communication window.  A
negotiation is a three-way handshake (request, grant, confirm) that
occupies three consecutive mini-slots atomically; everyone hearing a
participant freezes its backoff for the whole span, so only same-slot
starts can collide.  Grants live for one frame.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .segments import (
    Assignment,
    RateRequirement,
    SegmentId,
    SegmentTable,
    link_bandwidth,
    select_segments,
)
from .spectrum import ChannelTable, SensingReport, CONTROL_CHANNEL
from .topology import CommunicationGraph, Link, NodeId


@dataclass(frozen=True)
class FrameConfig:
    """Frame timing; durations in seconds."""

    sensing_dur: float = 0.002
    atim_dur: float = 0.020
    num_slots: int = 20
    d_data: float = 0.004
    d_ack: float = 0.0003
    d_guard: float = 0.0001
    switch_delay: float = 40e-6
    beacon_dur: float = 0.0001
    atim_mini_slots: int = 40
    contention_window: int = 16

    def __post_init__(self) -> None:
        if self.num_slots < 1:
            raise ConfigurationError("num_slots must be >= 1")
        if self.atim_mini_slots < 3:
            raise ConfigurationError("need at least 3 mini-slots for one handshake")
        if self.contention_window < 1:
            raise ConfigurationError("contention_window must be >= 1")
        if self.d_guard < self.switch_delay:
            raise ConfigurationError(
                "d_guard %g cannot absorb switch_delay %g"
                % (self.d_guard, self.switch_delay)
            )
        if min(self.sensing_dur, self.atim_dur, self.d_data, self.d_ack) < 0:
            raise ConfigurationError("negative duration")

    @property
    def slot_duration(self) -> float:
        return self.d_data + self.d_ack + 2 * self.d_guard

    @property
    def comm_offset(self) -> float:
        return self.sensing_dur + self.atim_dur

    @property
    def frame_duration(self) -> float:
        return self.comm_offset + self.num_slots * self.slot_duration

    def validate_for(self, num_nodes: int) -> None:
        control = self.atim_dur - num_nodes * self.beacon_dur
        if control <= 0 or control / self.atim_mini_slots <= 0:
            raise ConfigurationError(
                "atim_dur %g s leaves no contention room after %d beacons"
                % (self.atim_dur, num_nodes)
            )

    def mini_slot_dur(self, num_nodes: int) -> float:
        return (self.atim_dur - num_nodes * self.beacon_dur) / self.atim_mini_slots


@dataclass(frozen=True)
class ControlMessage:
    """One control-channel transmission, for traces."""

    kind: str  # beacon | atim | atim_ack | atim_res
    sender: NodeId
    receiver: NodeId | None
    frame: int
    mini_slot: int | None = None


@dataclass(slots=True)
class Packet:
    flow: int
    seq: int
    src: NodeId
    dst: NodeId
    size_bits: int
    gen_time: float
    path: tuple[NodeId, ...]
    hop: int = 0  # index into path of the node currently holding it
    retry_count: int = 0
    eligible_frame: int = 0

    def next_hop(self) -> NodeId:
        return self.path[self.hop + 1]


class NodeMacState:
    """Per-node MAC state: queues, segment table, retry bookkeeping."""

    def __init__(self, node: NodeId, queue_limit: int):
        self.node = node
        self.queue_limit = queue_limit
        self.queues: dict[NodeId, deque[Packet]] = {}
        self.table: SegmentTable | None = None
        self.known: FrameSchedule | None = None  # this node's view of grants
        self.last_initiated: dict[NodeId, int] = {}
        # rate requirements of the sessions routed through this node,
        # keyed by next hop; they size this node's negotiation requests
        self.pending_demand: dict[NodeId, float] = {}
        self.doze_slots = 0

    def enqueue(self, pkt: Packet) -> bool:
        """Drop-tail per next-hop queue; False when the packet was dropped."""
        nh = pkt.next_hop()
        q = self.queues.setdefault(nh, deque())
        if len(q) >= self.queue_limit:
            return False
        q.append(pkt)
        return True

    def pop(self, next_hop: NodeId) -> Packet:
        return self.queues[next_hop].popleft()

    def requeue_front(self, pkt: Packet) -> None:
        """Put a popped packet back at the FIFO head (failed transmission)."""
        self.queues.setdefault(pkt.next_hop(), deque()).appendleft(pkt)

    def eligible_backlog(self, next_hop: NodeId, frame: int) -> int:
        """Packets sendable this frame: the eligible FIFO prefix."""
        q = self.queues.get(next_hop)
        if not q:
            return 0
        n = 0
        for pkt in q:
            if pkt.eligible_frame > frame:
                break
            n += 1
        return n

    def queued_total(self) -> int:
        return sum(len(q) for q in self.queues.values())


class FrameSchedule:
    """All confirmed grants of one frame, with lookup indexes.

    Iterating yields raw (link, segment) pairs so that independent
    validators need none of the index machinery.
    """

    def __init__(self, frame: int):
        self.frame = frame
        self.entries: list[tuple[Link, SegmentId]] = []
        self._users: dict[SegmentId, list[Link]] = {}
        self._slots: dict[NodeId, set[int]] = {}
        self._out: dict[NodeId, set[int]] = {}
        self._by_slot: dict[int, list[tuple[Link, SegmentId]]] = {}
        self.assignments: list[Assignment] = []

    def add(self, a: Assignment) -> None:
        u, v = a.link
        self.assignments.append(a)
        for seg in a.segments:
            c, t = seg
            self.entries.append((a.link, seg))
            self._users.setdefault(seg, []).append(a.link)
            self._slots.setdefault(u, set()).add(t)
            self._slots.setdefault(v, set()).add(t)
            self._out.setdefault(u, set()).add(t)
            self._by_slot.setdefault(t, []).append((a.link, seg))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def users(self, c: int, t: int):
        return self._users.get((c, t), ())

    def slots_incident(self, node: NodeId) -> set[int]:
        return self._slots.get(node, _EMPTY_SET)

    def outgoing_slots(self, node: NodeId) -> set[int]:
        return self._out.get(node, _EMPTY_SET)

    def by_slot(self, t: int):
        return self._by_slot.get(t, ())

    def used_slots(self) -> list[int]:
        return sorted(self._by_slot)

    def active_nodes_in_slot(self, t: int) -> set[NodeId]:
        out = set()
        for (lk, _seg) in self.by_slot(t):
            out.add(lk[0])
            out.add(lk[1])
        return out


_EMPTY_SET: set[int] = set()


def begin_frame(
    state: NodeMacState,
    frame: int,
    report: SensingReport,
    table: ChannelTable,
    num_slots: int,
) -> SegmentTable:
    """Reset a node's per-frame view from its sensing report."""
    st = SegmentTable(state.node, frame, table, num_slots)
    for c in table.data_channels:
        if c not in report.available:
            st.mark_channel_occupied(c)
    state.table = st
    state.known = FrameSchedule(frame)
    return st


@dataclass(slots=True)
class NegotiationIntent:
    """One queued negotiation a node wants to run this frame."""

    initiator: NodeId
    receiver: NodeId
    demand: RateRequirement


@dataclass
class AtimResult:
    grants: list[Assignment] = field(default_factory=list)
    collisions: int = 0  # attempts lost to mini-slot collisions or busy receivers
    empty_selections: int = 0  # handshakes answered with no usable segments
    truncated: int = 0  # handshakes cut off by the window end (rolled back)
    messages: list[ControlMessage] = field(default_factory=list)


def run_atim_window(
    frame: int,
    intents: dict[NodeId, list[NegotiationIntent]],
    states: dict[NodeId, NodeMacState],
    g: CommunicationGraph,
    cfg: FrameConfig,
    channels: ChannelTable,
    schedule: FrameSchedule,
    rng,
    overhear: bool = True,
    literal_receiver_rule: bool = False,
    collect_messages: bool = False,
) -> AtimResult:
    """Resolve one frame's contention window into confirmed grants.

    `intents` maps each initiator to its ordered attempts (already capped
    by max_negotiations_per_frame).  Backoff draws come from `rng` in
    sorted-initiator order, so outcomes are reproducible for a seed.
    """
    res = AtimResult()
    K = cfg.atim_mini_slots
    W = cfg.contention_window

    # live contender state: node -> [remaining backoff, current intent, queue]
    live: dict[NodeId, list] = {}
    for node in sorted(intents):
        queue = deque(intents[node])
        if queue:
            draw = int(rng.integers(0, W))
            live[node] = [draw, queue.popleft(), queue]

    busy_until: dict[NodeId, int] = {}

    def mark_busy(center: NodeId, until: int) -> None:
        if busy_until.get(center, -1) < until:
            busy_until[center] = until
        for w in g.control_hearers(center):
            if busy_until.get(w, -1) < until:
                busy_until[w] = until

    def is_busy(node: NodeId, m: int) -> bool:
        return busy_until.get(node, -1) >= m

    def advance(node: NodeId) -> None:
        """Pop the node's next intent with a fresh draw, or retire it."""
        entry = live[node]
        if entry[2]:
            entry[0] = int(rng.integers(0, W))
            entry[1] = entry[2].popleft()
        else:
            del live[node]

    m = 0
    while m < K and live:
        starters = []
        for node in sorted(live):
            if is_busy(node, m):
                continue
            entry = live[node]
            if entry[0] == 0:
                starters.append(node)
            else:
                entry[0] -= 1
        if not starters:
            m += 1
            continue

        # participants of each would-be handshake
        parts = {n: (n, live[n][1].receiver) for n in starters}

        failed: set[NodeId] = set()
        for i, a in enumerate(starters):
            ua, va = parts[a]
            # the receiver must be idle and hear exactly this request
            if is_busy(va, m):
                failed.add(a)
            for b in starters[i + 1:]:
                ub, vb = parts[b]
                hear = g.control_hearers
                if (
                    ub in hear(ua) or ub in hear(va) or vb in hear(ua) or vb in hear(va)
                    or ua == ub or ua == vb or va == ub or va == vb
                ):
                    failed.add(a)
                    failed.add(b)

        for node in starters:
            intent = live[node][1]
            u, v = node, intent.receiver
            if collect_messages:
                res.messages.append(ControlMessage("atim", u, v, frame, m))
            if node in failed:
                res.collisions += 1
                mark_busy(u, m)
                advance(node)
                continue
            if m + 1 > K - 1:
                # not even the grant message fits before the window closes
                res.truncated += 1
                mark_busy(u, m)
                advance(node)
                continue
            link = (u, v)
            su, sv = states[u], states[v]
            candidates = link_bandwidth(su.table, sv.table)
            a = select_segments(
                link,
                intent.demand,
                candidates,
                sv.known,
                g,
                channels,
                cfg.num_slots,
                literal_receiver_rule,
            )
            if not a.segments:
                res.empty_selections += 1
                mark_busy(u, m)
                advance(node)
                continue
            # grant: tentative at the receiver until the confirm message
            for seg in a.segments:
                sv.table.assign(seg)
            if collect_messages:
                res.messages.append(ControlMessage("atim_ack", v, u, frame, m + 1))
            confirm_fits = m + 2 <= K - 1
            free_u = su.table.free_segments()
            if not confirm_fits or not all(seg in free_u for seg in a.segments):
                # no confirm by window end: the receiver rolls the grant back
                for seg in a.segments:
                    sv.table.unassign(seg)
                res.truncated += 1
                mark_busy(u, m + 1)
                mark_busy(v, m + 1)
                advance(node)
                continue
            for seg in a.segments:
                su.table.assign(seg)
            schedule.add(a)
            su.known.add(a)
            sv.known.add(a)
            res.grants.append(a)
            if collect_messages:
                res.messages.append(ControlMessage("atim_res", u, v, frame, m + 2))
            if overhear:
                for w in (g.neighbors(u) | g.neighbors(v)) - {u, v}:
                    sw = states[w]
                    for seg in a.segments:
                        sw.table.mark_occupied(seg)
                    sw.known.add(a)
            mark_busy(u, m + 2)
            mark_busy(v, m + 2)
            advance(node)
        m += 1
    return res


def handle_missed_ack(
    state: NodeMacState, pkt: Packet, frame: int, rng, retry_limit: int
) -> bool:
    """Retry bookkeeping after a failed transmission.

    Returns True when the packet survives (re-queued at the head), False
    when it exhausted its retries and was dropped.
    """
    pkt.retry_count += 1
    if pkt.retry_count > retry_limit:
        return False
    pkt.eligible_frame = frame + 1 + int(rng.integers(0, 4))
    return True


def audit_schedule(schedule: FrameSchedule, g: CommunicationGraph) -> tuple[int, int]:
    """Frame-level schedule audit.

    Returns (conflicting same-segment pairs, same-slot double-booked
    node pairs across channels).  Both must be zero for a compliant
    negotiation.
    """
    from .topology import links_conflict

    conflict_pairs = 0
    double_booked = 0
    for seg, users in schedule._users.items():
        if len(users) > 1:
            for i, l1 in enumerate(users):
                for l2 in users[i + 1:]:
                    if l1 != l2 and links_conflict(l1, l2, True, g):
                        conflict_pairs += 1
    for t, entries in schedule._by_slot.items():
        for i, (l1, s1) in enumerate(entries):
            for (l2, s2) in entries[i + 1:]:
                if s1[0] != s2[0] and set(l1) & set(l2):
                    double_booked += 1
    return conflict_pairs, double_booked

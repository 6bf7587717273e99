"""Deterministic discrete-event engine and the multichannel MAC run loop.

All randomness flows through named substreams derived from the scenario
seed and topology id, so repeated runs are bit-identical and changing
the flow count never perturbs topology draws.  Packets are forwarded
hop by hop along static shortest-hop paths computed at build time.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .mac import (
    AtimResult,
    FrameConfig,
    FrameSchedule,
    NegotiationIntent,
    NodeMacState,
    Packet,
    audit_schedule,
    begin_frame,
    handle_missed_ack,
    run_atim_window,
)
from .segments import RateRequirement
from .spectrum import (
    CONTROL_CHANNEL,
    ChannelTable,
    PrimaryUser,
    SensingReport,
    random_pus,
)
from .topology import (
    CommunicationGraph,
    RadioProfile,
    distance,
    links_conflict,
    positions_from_file,
    random_positions,
)

# substream labels
_STREAMS = {"topology": 0, "traffic": 1, "pu": 2, "backoff": 3}
_TOPOLOGY_BASE = 20260101  # topology draws depend on topology_id only


def substream(name: str, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((_STREAMS[name],) + key))


@dataclass(frozen=True)
class TrafficConfig:
    packet_rate: float = 4.0
    packet_size: int = 1000  # bytes
    demand_low_frac: float = 0.1
    demand_high_frac: float = 0.6
    demand_ref_rate: float = 2e6
    queue_limit: int = 50
    retry_limit: int = 7
    max_negotiations_per_frame: int = 2

    def __post_init__(self) -> None:
        if self.packet_rate <= 0 or self.packet_size <= 0:
            raise ConfigurationError("packet rate and size must be positive")
        if not (0 <= self.demand_low_frac <= self.demand_high_frac):
            raise ConfigurationError("demand fractions out of order")


@dataclass(frozen=True)
class PuConfig:
    count: int = 5
    coverage: float = 300.0
    mean_on: float = 1.0
    mean_off: float = 1.0
    placements: tuple[tuple[float, float, int], ...] | None = None


@dataclass(frozen=True)
class Flags:
    overhear: bool = True
    sensing: bool = True
    pu_midframe_toggle: bool = False
    literal_receiver_rule: bool = False
    warmup: float = 10.0
    tail_cut: float = 2.0


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs; defaults reproduce the desk-scale setup."""

    seed: int = 1
    topology_id: int = 0
    area_width: float = 1000.0
    area_height: float = 750.0
    num_nodes: int = 50
    num_flows: int = 8
    duration: float = 500.0
    protocol: str = "crmac"
    channels: ChannelTable = field(default_factory=ChannelTable)
    frame: FrameConfig = field(default_factory=FrameConfig)
    radio: RadioProfile = field(default_factory=RadioProfile)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    pu: PuConfig = field(default_factory=PuConfig)
    flags: Flags = field(default_factory=Flags)
    positions_file: str | None = None
    baseline: object = None  # BaselineConfig; resolved in baseline module

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ConfigurationError("duration must be >= 0")
        if self.num_flows < 0:
            raise ConfigurationError("num_flows must be >= 0")
        if self.protocol not in ("crmac", "baseline"):
            raise ConfigurationError("unknown protocol %r" % (self.protocol,))
        self.frame.validate_for(self.num_nodes)


@dataclass(frozen=True)
class Flow:
    id: int
    src: int
    dst: int
    path: tuple[int, ...]
    demand_bps: float
    jitter: float


@dataclass
class Metrics:
    """Run outcome; counters are full-run, rates use the measurement window."""

    protocol: str = "crmac"
    duration: float = 0.0
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    queued_at_end: int = 0
    throughput_bps: float = 0.0
    normalized_throughput: float | None = None
    mean_delay_s: float | None = None
    pdr: float | None = None
    doze_fraction: float = 0.0
    per_channel_bits: dict[int, int] = field(default_factory=dict)
    measured_generated: int = 0
    measured_delivered: int = 0
    measured_dropped: int = 0
    schedule_conflicts: int = 0
    double_booked: int = 0
    pu_violations: int = 0
    data_collisions: int = 0
    atim_collisions: int = 0
    frames: int = 0


class Trace:
    """Line-oriented event trace: `t=<s> frame=<k> node=<id> ev=<kind> ...`."""

    def __init__(self, fh=None):
        self.fh = fh
        self.lines: list[str] = []

    def emit(self, t: float, frame: int, node, ev: str, ch=None, slot=None, **extra):
        parts = ["t=%.6f" % t, "frame=%d" % frame, "node=%s" % node, "ev=%s" % ev]
        if ch is not None:
            parts.append("ch=%d" % ch)
        if slot is not None:
            parts.append("slot=%d" % slot)
        for k in sorted(extra):
            parts.append("%s=%s" % (k, extra[k]))
        line = " ".join(parts)
        if self.fh is not None:
            self.fh.write(line + "\n")
        else:
            self.lines.append(line)


# event kinds
FRAME_START = 0
ATIM_MINI_SLOT = 1
SLOT_START = 2
PACKET_ARRIVAL = 3
STATS_SNAPSHOT = 4


@dataclass(order=True, slots=True)
class Event:
    time: float
    seq: int
    kind: int = field(compare=False)
    payload: tuple = field(compare=False, default=())


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._seq = itertools.count()
        self._last: tuple[float, int] = (-1.0, -1)

    def push(self, time: float, kind: int, payload: tuple = ()) -> None:
        heapq.heappush(self._heap, Event(time, next(self._seq), kind, payload))

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        key = (ev.time, ev.seq)
        assert key > self._last, "event executed out of order"
        self._last = key
        return ev

    def __bool__(self) -> bool:
        return bool(self._heap)


# -- world building ----------------------------------------------------


def build_graph(s: Scenario) -> CommunicationGraph:
    if s.positions_file:
        positions = positions_from_file(s.positions_file, s.area_width, s.area_height)
    else:
        rng = substream("topology", _TOPOLOGY_BASE, s.topology_id)
        positions = random_positions(s.num_nodes, s.area_width, s.area_height, rng)
    all_ch = frozenset(s.channels.data_channels)
    return CommunicationGraph.build(positions, s.radio, all_channels=all_ch)


def build_pus(s: Scenario) -> list[PrimaryUser]:
    phase_rngs = [
        substream("pu", s.seed, s.topology_id, i) for i in range(max(s.pu.count, 0))
    ]
    if s.pu.placements is not None:
        out = []
        for i, (x, y, c) in enumerate(s.pu.placements):
            out.append(
                PrimaryUser(
                    position=(x, y),
                    channel=c,
                    coverage=s.pu.coverage,
                    mean_on=s.pu.mean_on,
                    mean_off=s.pu.mean_off,
                    rng=substream("pu", s.seed, s.topology_id, i),
                )
            )
        return out
    if s.pu.count == 0:
        return []
    place_rng = substream("pu", _TOPOLOGY_BASE, s.topology_id)
    return random_pus(
        s.pu.count,
        s.area_width,
        s.area_height,
        s.channels,
        place_rng,
        coverage=s.pu.coverage,
        mean_on=s.pu.mean_on,
        mean_off=s.pu.mean_off,
        phase_rngs=phase_rngs,
    )


def max_feasible_flows(g: CommunicationGraph) -> int:
    """Endpoint-disjoint connected pairs the graph can host."""
    return sum(len(c) // 2 for c in g.components())


def build_flows(s: Scenario, g: CommunicationGraph, rng) -> list[Flow]:
    """Endpoint-disjoint source-destination pairs within components."""
    comps = sorted(g.components(), key=lambda c: (-len(c), c[0]))
    if s.num_flows > sum(len(c) // 2 for c in comps):
        raise ConfigurationError(
            "more flows (%d) than disjoint connected pairs available (%d)"
            % (s.num_flows, sum(len(c) // 2 for c in comps))
        )
    pools = [list(c) for c in comps]
    flows: list[Flow] = []
    lo = s.traffic.demand_low_frac * s.traffic.demand_ref_rate
    hi = s.traffic.demand_high_frac * s.traffic.demand_ref_rate
    for f in range(s.num_flows):
        eligible = [i for i, p in enumerate(pools) if len(p) >= 2]
        weights = np.array([len(pools[i]) for i in eligible], dtype=float)
        pick = eligible[int(rng.choice(len(eligible), p=weights / weights.sum()))]
        pool = pools[pick]
        src = pool.pop(int(rng.integers(0, len(pool))))
        dst = pool.pop(int(rng.integers(0, len(pool))))
        path = g.shortest_path(src, dst)
        assert path is not None
        demand = float(rng.uniform(lo, hi))
        jitter = float(rng.uniform(0.0, 1.0 / s.traffic.packet_rate))
        flows.append(Flow(f, src, dst, tuple(path), demand, jitter))
    return flows


def generate_traffic(s: Scenario, flows: list[Flow]) -> list[tuple[float, int, int]]:
    """Constant-bit-rate arrival schedule: (time, flow id, seq) tuples."""
    arrivals: list[tuple[float, int, int]] = []
    period = 1.0 / s.traffic.packet_rate
    for fl in flows:
        k = 0
        t = fl.jitter
        while t < s.duration:
            arrivals.append((t, fl.id, k))
            k += 1
            t = fl.jitter + (k * period)
    arrivals.sort()
    return arrivals


# -- metrics -----------------------------------------------------------


def measurement_window(s: Scenario) -> tuple[float, float]:
    """[start, end) of the interval metrics are computed over, by gen time."""
    lo = s.flags.warmup
    hi = s.duration - s.flags.tail_cut
    if hi <= lo:  # trimming disabled or the run is too short for it
        return 0.0, s.duration
    return lo, hi


def compute_metrics(
    protocol: str,
    s: Scenario,
    generated: int,
    delivered_records: list[tuple[float, float, int]],
    dropped_gen_times: list[float],
    queued_at_end: int,
    arrivals: list[tuple[float, int, int]],
    per_channel_bits: dict[int, int],
    doze_fraction: float = 0.0,
    baseline_throughput: float | None = None,
) -> Metrics:
    """Assemble a Metrics record; rates use the trimmed measurement window."""
    m = Metrics(protocol=protocol, duration=s.duration)
    m.generated = generated
    m.delivered = len(delivered_records)
    m.dropped = len(dropped_gen_times)
    m.queued_at_end = queued_at_end
    m.per_channel_bits = dict(per_channel_bits)
    m.doze_fraction = doze_fraction

    lo, hi = measurement_window(s)
    window = hi - lo
    meas_gen = sum(1 for (t, _f, _k) in arrivals if lo <= t < hi)
    meas = [(g, d, b) for (g, d, b) in delivered_records if lo <= g < hi]
    m.measured_generated = meas_gen
    m.measured_delivered = len(meas)
    m.measured_dropped = sum(1 for t in dropped_gen_times if lo <= t < hi)
    if window > 0:
        m.throughput_bps = sum(b for (_g, _d, b) in meas) / window
    if meas:
        m.mean_delay_s = sum(d for (_g, d, _b) in meas) / len(meas)
    m.pdr = (len(meas) / meas_gen) if meas_gen > 0 else None
    if baseline_throughput is not None and baseline_throughput > 0:
        m.normalized_throughput = m.throughput_bps / baseline_throughput
    return m


# -- the multichannel MAC run -----------------------------------------


def run_scenario(s: Scenario, trace: Trace | None = None) -> Metrics:
    """Run one scenario to completion and return its metrics."""
    if s.protocol == "baseline":
        from .baseline import run_baseline_scenario

        return run_baseline_scenario(s, trace)
    return _run_crmac(s, trace)


def _run_crmac(s: Scenario, trace: Trace | None) -> Metrics:
    g = build_graph(s)
    pus = build_pus(s)
    traffic_rng = substream("traffic", s.seed, s.topology_id)
    backoff_rng = substream("backoff", s.seed, s.topology_id)
    flows = build_flows(s, g, traffic_rng)
    arrivals = generate_traffic(s, flows)
    flow_by_id = {fl.id: fl for fl in flows}
    cfg = s.frame
    chan = s.channels
    frame_dur = cfg.frame_duration
    num_frames = int(s.duration / frame_dur) if s.duration > 0 else 0
    pkt_bits = s.traffic.packet_size * 8

    states = {v: NodeMacState(v, s.traffic.queue_limit) for v in g.nodes}
    # session setup leaves a rate requirement at every hop of a flow's
    # path; a hop's negotiation request asks for that rate, not for
    # whatever happens to sit in the queue at the frame boundary
    for fl in flows:
        for i in range(len(fl.path) - 1):
            st = states[fl.path[i]]
            nh = fl.path[i + 1]
            st.pending_demand[nh] = st.pending_demand.get(nh, 0.0) + fl.demand_bps

    # which PUs cover each node, resolved once
    covering: dict[int, list[PrimaryUser]] = {v: [] for v in g.nodes}
    for pu in pus:
        for v in g.nodes:
            if distance(pu.position, g.positions[v]) <= pu.coverage:
                covering[v].append(pu)

    q = EventQueue()
    for (t, fid, k) in arrivals:
        q.push(t, PACKET_ARRIVAL, (fid, k))
    for k in range(num_frames):
        q.push(k * frame_dur, FRAME_START, (k,))
    if s.flags.warmup > 0 and s.flags.warmup < s.duration:
        q.push(s.flags.warmup, STATS_SNAPSHOT, ())

    generated = 0
    dropped_gens: list[float] = []
    delivered_records: list[tuple[float, float, int]] = []
    per_channel_bits: dict[int, int] = {}
    m_audit_conflicts = 0
    m_double_booked = 0
    m_pu_violations = 0
    m_data_collisions = 0
    m_atim_collisions = 0
    doze_slots = 0
    frames_run = 0
    snapshots: list[tuple[float, int]] = []

    schedule: FrameSchedule | None = None
    pu_on_frame: dict[int, bool] = {}

    def pu_busy(node: int, channel: int, t_abs: float) -> bool:
        if channel == CONTROL_CHANNEL:
            return False
        for pu in covering[node]:
            if pu.channel != channel:
                continue
            if s.flags.pu_midframe_toggle:
                if pu.phase_at(t_abs):
                    return True
            elif pu_on_frame.get(id(pu), False):
                return True
        return False

    while q:
        ev = q.pop()
        if ev.time >= s.duration and s.duration > 0:
            break
        if ev.kind == PACKET_ARRIVAL:
            fid, seq = ev.payload
            fl = flow_by_id[fid]
            generated += 1
            pkt = Packet(
                flow=fid,
                seq=seq,
                src=fl.src,
                dst=fl.dst,
                size_bits=pkt_bits,
                gen_time=ev.time,
                path=fl.path,
            )
            if not states[fl.src].enqueue(pkt):
                dropped_gens.append(pkt.gen_time)
                if trace:
                    trace.emit(ev.time, int(ev.time / frame_dur), fl.src, "drop",
                               flow=fid, seqno=seq, reason="queue_full")
            elif trace:
                trace.emit(ev.time, int(ev.time / frame_dur), fl.src, "arrival",
                           flow=fid, seqno=seq)
        elif ev.kind == FRAME_START:
            (k,) = ev.payload
            frames_run += 1
            t0 = ev.time
            pu_on_frame = {id(pu): pu.phase_at(t0) for pu in pus}
            # sensing + fresh tables
            for v in g.nodes:
                st = states[v]
                if s.flags.sensing:
                    busy = {
                        pu.channel
                        for pu in covering[v]
                        if pu_on_frame[id(pu)]
                    }
                else:
                    busy = set()
                avail = frozenset(
                    c for c in chan.all_channels if c == CONTROL_CHANNEL or c not in busy
                )
                report = SensingReport(node=v, frame=k, available=avail)
                begin_frame(st, k, report, chan, cfg.num_slots)
                if trace:
                    trace.emit(t0, k, v, "sense", avail=len(report.available))
            if trace:
                for v in g.nodes:  # beacon order: round-robin by node id
                    trace.emit(t0 + cfg.sensing_dur, k, v, "beacon")
            # negotiation intents: only nodes with sendable backlog contend,
            # asking for the session rate registered for that next hop;
            # round-robin over hops so no link starves under the per-frame cap
            intents: dict[int, list[NegotiationIntent]] = {}
            for v in g.nodes:
                st = states[v]
                backlogged = [
                    nh for nh in st.queues if st.eligible_backlog(nh, k) > 0
                ]
                if not backlogged:
                    continue
                ready = sorted(
                    (st.last_initiated.get(nh, -1), nh) for nh in backlogged
                )
                chosen = [nh for (_last, nh) in ready[: s.traffic.max_negotiations_per_frame]]
                lst = []
                for nh in chosen:
                    st.last_initiated[nh] = k
                    lst.append(
                        NegotiationIntent(
                            initiator=v,
                            receiver=nh,
                            demand=RateRequirement(
                                session=v, requested=st.pending_demand[nh]
                            ),
                        )
                    )
                intents[v] = lst
            schedule = FrameSchedule(k)
            res = run_atim_window(
                k,
                intents,
                states,
                g,
                cfg,
                chan,
                schedule,
                backoff_rng,
                overhear=s.flags.overhear,
                literal_receiver_rule=s.flags.literal_receiver_rule,
                collect_messages=trace is not None,
            )
            m_atim_collisions += res.collisions
            c1, c2 = audit_schedule(schedule, g)
            m_audit_conflicts += c1
            m_double_booked += c2
            if trace:
                for msg in res.messages:
                    trace.emit(t0 + cfg.sensing_dur, k, msg.sender, msg.kind,
                               peer=msg.receiver, mini=msg.mini_slot)
                for a in schedule.assignments:
                    for (c, t) in a.segments:
                        trace.emit(t0 + cfg.sensing_dur, k, a.link[0], "grant",
                                   ch=c, slot=t, peer=a.link[1])
            for v in g.nodes:
                idle = cfg.num_slots - len(schedule.slots_incident(v))
                doze_slots += idle
                if trace and idle == cfg.num_slots:
                    trace.emit(t0 + cfg.comm_offset, k, v, "doze", slots=idle)
            for j in schedule.used_slots():
                q.push(t0 + cfg.comm_offset + j * cfg.slot_duration, SLOT_START, (k, j))
        elif ev.kind == SLOT_START:
            k, j = ev.payload
            t_slot = ev.time
            assert schedule is not None and schedule.frame == k
            entries = schedule.by_slot(j)
            active = []
            for (link, seg) in entries:
                st = states[link[0]]
                if st.eligible_backlog(link[1], k) > 0:
                    active.append((link, seg))
            if not active:
                continue
            conflict_failed: set[tuple] = set()
            pu_failed: set[tuple] = set()
            # physical outcome: same-channel protocol-model conflicts
            by_ch: dict[int, list] = {}
            for (link, seg) in active:
                by_ch.setdefault(seg[0], []).append((link, seg))
            for group in by_ch.values():
                for i, (l1, s1) in enumerate(group):
                    for (l2, s2) in group[i + 1:]:
                        if links_conflict(l1, l2, True, g):
                            conflict_failed.add((l1, s1))
                            conflict_failed.add((l2, s2))
            # cross-channel shared transceiver (cannot arise from clean grants)
            for i, (l1, s1) in enumerate(active):
                for (l2, s2) in active[i + 1:]:
                    if s1[0] != s2[0] and set(l1) & set(l2):
                        conflict_failed.add((l1, s1))
                        conflict_failed.add((l2, s2))
            for (link, seg) in active:
                if pu_busy(link[0], seg[0], t_slot) or pu_busy(link[1], seg[0], t_slot):
                    pu_failed.add((link, seg))
            m_data_collisions += len(conflict_failed)
            m_pu_violations += len(pu_failed)
            failed = conflict_failed | pu_failed
            for (link, seg) in sorted(active, key=lambda e: (e[1][0], e[0])):
                u, v = link
                st = states[u]
                pps = chan.packets_per_slot(seg[0])
                n = min(pps, st.eligible_backlog(v, k))
                if (link, seg) in failed:
                    # the whole unacked batch retries with a frame backoff
                    batch = [st.pop(v) for _ in range(n)]
                    kept = []
                    for pkt in batch:
                        if handle_missed_ack(st, pkt, k, backoff_rng,
                                             s.traffic.retry_limit):
                            kept.append(pkt)
                            if trace:
                                trace.emit(t_slot, k, u, "missed_ack", ch=seg[0],
                                           slot=j, flow=pkt.flow, seqno=pkt.seq)
                        else:
                            dropped_gens.append(pkt.gen_time)
                            if trace:
                                trace.emit(t_slot, k, u, "drop", ch=seg[0], slot=j,
                                           flow=pkt.flow, seqno=pkt.seq,
                                           reason="retry_limit")
                    for pkt in reversed(kept):
                        st.requeue_front(pkt)
                    continue
                sent = 0
                t_deliver = t_slot + cfg.d_data
                for _ in range(n):
                    pkt = st.pop(v)
                    sent += 1
                    if v == pkt.dst:
                        delivered_records.append(
                            (pkt.gen_time, t_deliver - pkt.gen_time, pkt.size_bits)
                        )
                        # delivered bits attributed to the final-hop channel
                        per_channel_bits[seg[0]] = (
                            per_channel_bits.get(seg[0], 0) + pkt.size_bits
                        )
                        if trace:
                            trace.emit(t_slot, k, u, "tx", ch=seg[0], slot=j,
                                       flow=pkt.flow, seqno=pkt.seq, to=v, final=1)
                    else:
                        pkt.hop += 1
                        pkt.retry_count = 0
                        if not states[v].enqueue(pkt):
                            dropped_gens.append(pkt.gen_time)
                            if trace:
                                trace.emit(t_slot, k, v, "drop", flow=pkt.flow,
                                           seqno=pkt.seq, reason="queue_full")
                        elif trace:
                            trace.emit(t_slot, k, u, "tx", ch=seg[0], slot=j,
                                       flow=pkt.flow, seqno=pkt.seq, to=v, final=0)
                if sent and trace:
                    trace.emit(t_deliver, k, v, "ack", ch=seg[0], slot=j, to=u,
                               count=sent)
        elif ev.kind == STATS_SNAPSHOT:
            snapshots.append((ev.time, len(delivered_records)))

    queued_at_end = sum(st.queued_total() for st in states.values())
    assert generated == len(delivered_records) + len(dropped_gens) + queued_at_end, (
        "conservation violated: %d != %d + %d + %d"
        % (generated, len(delivered_records), len(dropped_gens), queued_at_end)
    )

    total_slots = len(states) * cfg.num_slots * frames_run
    doze_fraction = (doze_slots / total_slots) if total_slots else 0.0
    m = compute_metrics(
        "crmac",
        s,
        generated,
        delivered_records,
        dropped_gens,
        queued_at_end,
        arrivals,
        per_channel_bits,
        doze_fraction=doze_fraction,
    )
    m.schedule_conflicts = m_audit_conflicts
    m.double_booked = m_double_booked
    m.pu_violations = m_pu_violations
    m.data_collisions = m_data_collisions
    m.atim_collisions = m_atim_collisions
    m.frames = frames_run

    # physical sanity: no channel can carry more than its bandwidth
    if s.duration > 0:
        for c, bits in m.per_channel_bits.items():
            cap = chan.bandwidth(c) * s.duration
            assert bits <= cap + 1e-6, "channel %d carried %d bits > capacity" % (c, bits)
    return m

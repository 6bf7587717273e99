"""Single-channel CSMA/CA comparison MAC: RTS/CTS, NAV, binary exponential
backoff, retry limit, per-listener collision physics.

Every station shares one channel.  A transmission is decodable within
transmission range and raises carrier (and corrupts receptions) out to
the interference range; a listener decodes a frame only if nothing
else overlapped it there, with no capture.  Nodes that decode an RTS
or CTS addressed elsewhere defer via NAV; any sensed frame that fails
to decode imposes EIFS on the listener.  Backoff is counted lazily: a
node schedules its fire time when the medium goes idle and cancels via
version tokens when it goes busy again, so no per-slot events exist.

A packet changes custody only when its sender decodes the ACK, so the
conservation identity stays exact even for exchanges cut off mid-air.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass

from .engine import (
    EventQueue,
    Metrics,
    Scenario,
    Trace,
    build_flows,
    build_graph,
    compute_metrics,
    generate_traffic,
    substream,
)
from .errors import ConfigurationError
from .mac import Packet

RTS, CTS, DATA, ACK = "rts", "cts", "data", "ack"

EV_ARRIVAL = 0
EV_TX_START = 1
EV_TX_END = 2
EV_TIMER = 3
EV_RESPONSE = 4


@dataclass(frozen=True)
class BaselineConfig:
    """Classic 802.11 DSSS timing: 2 Mbps data, 1 Mbps control frames."""

    bitrate: float = 2e6
    basic_rate: float = 1e6  # RTS/CTS/ACK go at the lowest mandatory rate
    slot_time: float = 20e-6
    sifs: float = 10e-6
    difs: float = 50e-6
    plcp_overhead: float = 192e-6  # preamble + PHY header at the base rate
    rts_bytes: int = 20
    cts_bytes: int = 14
    ack_bytes: int = 14
    mac_header_bytes: int = 28
    ip_header_bytes: int = 20  # payload sizes exclude it, the air does not
    cw_min: int = 16
    cw_max: int = 1024
    retry_limit: int = 7
    timeout_slack_slots: int = 2

    def __post_init__(self) -> None:
        if self.bitrate <= 0 or self.basic_rate <= 0:
            raise ConfigurationError("bitrate must be positive")
        if self.cw_min < 1 or self.cw_max < self.cw_min:
            raise ConfigurationError("contention window bounds out of order")
        if self.sifs >= self.difs:
            raise ConfigurationError("sifs must be shorter than difs")

    def t_control(self, frame_bytes: int) -> float:
        return self.plcp_overhead + frame_bytes * 8 / self.basic_rate

    @property
    def t_rts(self) -> float:
        return self.t_control(self.rts_bytes)

    @property
    def t_cts(self) -> float:
        return self.t_control(self.cts_bytes)

    @property
    def t_ack(self) -> float:
        return self.t_control(self.ack_bytes)

    def t_data(self, payload_bytes: int) -> float:
        wire = payload_bytes + self.ip_header_bytes + self.mac_header_bytes
        return self.plcp_overhead + wire * 8 / self.bitrate

    @property
    def eifs(self) -> float:
        return self.sifs + self.t_ack + self.difs


@dataclass
class Tx:
    """One transmission on the air."""

    id: int
    sender: int
    kind: str
    dst: int
    start: float
    end: float
    nav: float = 0.0  # medium reservation after this frame ends
    pkt: Packet | None = None


class DcfNode:
    """Per-station DCF state."""

    __slots__ = (
        "node", "queue", "cw", "bo_remaining", "contending",
        "counting", "count_start", "bo_version", "nav_until", "eifs_until",
        "cs_count", "tx_until", "awaiting", "await_version", "rx",
    )

    def __init__(self, node: int, cw_min: int):
        self.node = node
        self.queue: deque[Packet] = deque()
        self.cw = cw_min
        self.bo_remaining = 0
        self.contending = False  # drew a backoff, counts down whenever idle
        self.counting = False  # actively counting right now
        self.count_start = 0.0
        self.bo_version = 0
        self.nav_until = 0.0
        self.eifs_until = 0.0
        self.cs_count = 0  # in-range transmissions currently on the air
        self.tx_until = 0.0  # busy transmitting until then
        self.awaiting: str | None = None  # "cts" | "ack"
        self.await_version = 0
        self.rx: dict[int, bool] = {}  # tx id -> still clean here

    def transmitting(self, now: float) -> bool:
        return self.tx_until > now

    def medium_idle(self, now: float) -> bool:
        return self.cs_count == 0 and not self.transmitting(now)


def run_baseline_scenario(s: Scenario, trace: Trace | None = None) -> Metrics:
    cfg = s.baseline if isinstance(s.baseline, BaselineConfig) else BaselineConfig()
    g = build_graph(s)
    traffic_rng = substream("traffic", s.seed, s.topology_id)
    backoff_rng = substream("backoff", s.seed, s.topology_id)
    flows = build_flows(s, g, traffic_rng)
    arrivals = generate_traffic(s, flows)
    flow_by_id = {fl.id: fl for fl in flows}
    # decodable within tx range; carrier and corruption out to interference range
    from .topology import distance as _dist

    hear: dict[int, set[int]] = {v: g.neighbors(v) for v in g.nodes}
    sense: dict[int, set[int]] = {}
    cs_range = s.radio.interference_range
    for u in g.nodes:
        pu = g.positions[u]
        sense[u] = {
            w for w in g.nodes
            if w != u and _dist(pu, g.positions[w]) <= cs_range
        }
    pkt_bits = s.traffic.packet_size * 8
    t_data = cfg.t_data(s.traffic.packet_size)
    nav_rts = 3 * cfg.sifs + cfg.t_cts + t_data + cfg.t_ack
    nav_cts = 2 * cfg.sifs + t_data + cfg.t_ack
    nav_data = cfg.sifs + cfg.t_ack
    cts_timeout = cfg.sifs + cfg.t_cts + cfg.timeout_slack_slots * cfg.slot_time
    ack_timeout = cfg.sifs + cfg.t_ack + cfg.timeout_slack_slots * cfg.slot_time

    nodes = {v: DcfNode(v, cfg.cw_min) for v in g.nodes}

    q = EventQueue()
    for (t, fid, k) in arrivals:
        q.push(t, EV_ARRIVAL, (fid, k))

    txs: dict[int, Tx] = {}
    tx_counter = [0]
    generated = 0
    dropped_gens: list[float] = []
    delivered_records: list[tuple[float, float, int]] = []
    per_channel_bits: dict[int, int] = {}
    now = 0.0

    def frame_no(t: float) -> int:
        return int(t / s.frame.frame_duration)

    def emit(node, ev, **extra):
        if trace:
            trace.emit(now, frame_no(now), node, ev, ch=0, **extra)

    def drop_pkt(node: int, pkt: Packet, reason: str) -> None:
        dropped_gens.append(pkt.gen_time)
        emit(node, "drop", flow=pkt.flow, seqno=pkt.seq, reason=reason)

    def enqueue(st: DcfNode, pkt: Packet) -> bool:
        if len(st.queue) >= s.traffic.queue_limit:
            return False
        st.queue.append(pkt)
        return True

    def pop_head(st: DcfNode) -> Packet:
        return st.queue.popleft()

    def draw_backoff(st: DcfNode) -> None:
        st.bo_remaining = int(backoff_rng.integers(0, st.cw))
        st.contending = True
        st.counting = False
        st.bo_version += 1

    def pause_count(st: DcfNode, t: float) -> None:
        if not st.counting:
            return
        elapsed = int((t - st.count_start) / cfg.slot_time + 1e-9)
        if elapsed > 0:
            st.bo_remaining = max(0, st.bo_remaining - elapsed)
        st.counting = False
        st.bo_version += 1

    def resume_contention(st: DcfNode, t: float) -> None:
        """(Re)start the countdown if the node wants the medium and it is idle."""
        if not st.contending or st.counting or st.awaiting is not None:
            return
        if not st.queue or not st.medium_idle(t):
            return
        boundary = max(t + cfg.difs, st.eifs_until, st.nav_until + cfg.difs)
        st.counting = True
        st.count_start = boundary
        st.bo_version += 1
        q.push(boundary + st.bo_remaining * cfg.slot_time, EV_TIMER,
               (st.node, st.bo_version, "fire"))

    def begin_tx(st: DcfNode, kind: str, dst: int, dur: float, nav: float,
                 pkt: Packet | None, t: float) -> None:
        pause_count(st, t)  # a responder may have been mid-countdown
        tx = Tx(tx_counter[0], st.node, kind, dst, t, t + dur, nav, pkt)
        tx_counter[0] += 1
        txs[tx.id] = tx
        q.push(t, EV_TX_START, (tx.id,))
        q.push(tx.end, EV_TX_END, (tx.id,))

    def after_exchange(st: DcfNode, t: float) -> None:
        if st.queue:
            draw_backoff(st)
            resume_contention(st, t)
        else:
            st.contending = False

    def retry_or_drop(st: DcfNode, t: float) -> None:
        """Failed exchange: double the window; give up past the retry limit."""
        st.awaiting = None
        st.await_version += 1
        pkt = st.queue[0]
        pkt.retry_count += 1
        if pkt.retry_count > cfg.retry_limit:
            pop_head(st)
            drop_pkt(st.node, pkt, "retry_limit")
            st.cw = cfg.cw_min
        else:
            st.cw = min(2 * st.cw, cfg.cw_max)
            emit(st.node, "retry", flow=pkt.flow, seqno=pkt.seq,
                 attempt=pkt.retry_count)
        after_exchange(st, t)

    def handover(sender: DcfNode, t: float) -> None:
        """ACK decoded: the link transfer is complete; custody moves now."""
        sender.awaiting = None
        sender.await_version += 1
        pkt = pop_head(sender)
        sender.cw = cfg.cw_min
        nh = pkt.next_hop()
        if nh == pkt.dst:
            delivered_records.append((pkt.gen_time, t - pkt.gen_time, pkt.size_bits))
            per_channel_bits[0] = per_channel_bits.get(0, 0) + pkt.size_bits
            emit(sender.node, "delivered", flow=pkt.flow, seqno=pkt.seq, to=nh)
        else:
            fwd = dataclasses.replace(pkt, hop=pkt.hop + 1, retry_count=0)
            rxn = nodes[nh]
            if not enqueue(rxn, fwd):
                drop_pkt(nh, fwd, "queue_full")
            else:
                emit(sender.node, "forwarded", flow=pkt.flow, seqno=pkt.seq, to=nh)
                if not rxn.contending and rxn.awaiting is None:
                    draw_backoff(rxn)
                    resume_contention(rxn, t)
        after_exchange(sender, t)

    def decode(wn: DcfNode, tx: Tx, t: float) -> None:
        """A frame arrived clean at wn; react per its kind and addressee."""
        if tx.kind == RTS:
            if wn.node == tx.dst:
                if wn.nav_until <= t and not wn.transmitting(t):
                    q.push(t + cfg.sifs, EV_RESPONSE, (wn.node, CTS, tx.sender, None))
                # a NAV-blocked receiver stays silent; the sender times out
            else:
                wn.nav_until = max(wn.nav_until, t + tx.nav)
        elif tx.kind == CTS:
            if wn.node == tx.dst:
                if wn.awaiting == "cts":
                    wn.awaiting = "ack"
                    wn.await_version += 1
                    pkt = wn.queue[0]
                    q.push(t + cfg.sifs, EV_RESPONSE, (wn.node, DATA, tx.sender, pkt))
            else:
                wn.nav_until = max(wn.nav_until, t + tx.nav)
        elif tx.kind == DATA:
            if wn.node == tx.dst:
                q.push(t + cfg.sifs, EV_RESPONSE, (wn.node, ACK, tx.sender, None))
            else:
                wn.nav_until = max(wn.nav_until, t + tx.nav)
        elif tx.kind == ACK:
            if wn.node == tx.dst and wn.awaiting == "ack":
                handover(wn, t)

    # -- event loop ----------------------------------------------------

    while q:
        ev = q.pop()
        now = ev.time
        if now >= s.duration and s.duration > 0:
            break

        if ev.kind == EV_ARRIVAL:
            fid, seq = ev.payload
            fl = flow_by_id[fid]
            generated += 1
            pkt = Packet(flow=fid, seq=seq, src=fl.src, dst=fl.dst,
                         size_bits=pkt_bits, gen_time=now, path=fl.path)
            st = nodes[fl.src]
            if not enqueue(st, pkt):
                drop_pkt(fl.src, pkt, "queue_full")
                continue
            emit(fl.src, "arrival", flow=fid, seqno=seq)
            if not st.contending and st.awaiting is None:
                draw_backoff(st)
                resume_contention(st, now)

        elif ev.kind == EV_TX_START:
            (tx_id,) = ev.payload
            tx = txs[tx_id]
            st = nodes[tx.sender]
            st.tx_until = tx.end
            for rid in st.rx:  # a transmitter hears nothing
                st.rx[rid] = False
            emit(tx.sender, "tx_%s" % tx.kind, to=tx.dst)
            decodable = hear[tx.sender]
            for w in sense[tx.sender]:
                wn = nodes[w]
                wn.cs_count += 1
                pause_count(wn, now)
                clean = (w in decodable) and not wn.rx and not wn.transmitting(now)
                if wn.rx:
                    for rid in wn.rx:  # overlap garbles everything here
                        wn.rx[rid] = False
                wn.rx[tx_id] = clean

        elif ev.kind == EV_TX_END:
            (tx_id,) = ev.payload
            tx = txs.pop(tx_id)
            st = nodes[tx.sender]
            hearers = sense[tx.sender]
            for w in hearers:
                wn = nodes[w]
                wn.cs_count -= 1
                if wn.rx.pop(tx_id, False):
                    decode(wn, tx, now)
                elif not wn.transmitting(now):
                    # sensed energy that never decoded is an errored
                    # reception, whether garbled or just too weak: EIFS
                    wn.eifs_until = max(wn.eifs_until, now + cfg.eifs)
            if tx.kind == RTS and st.awaiting == "cts":
                q.push(now + cts_timeout, EV_TIMER,
                       (st.node, st.await_version, "cts_timeout"))
            elif tx.kind == DATA and st.awaiting == "ack":
                q.push(now + ack_timeout, EV_TIMER,
                       (st.node, st.await_version, "ack_timeout"))
            elif st.awaiting is None:
                resume_contention(st, now)
            for w in hearers:
                wn = nodes[w]
                if wn.medium_idle(now):
                    resume_contention(wn, now)

        elif ev.kind == EV_RESPONSE:
            node, kind, dst, pkt_ref = ev.payload
            st = nodes[node]
            if kind == CTS:
                begin_tx(st, CTS, dst, cfg.t_cts, nav_cts, None, now)
            elif kind == ACK:
                begin_tx(st, ACK, dst, cfg.t_ack, 0.0, None, now)
            elif kind == DATA:
                if st.awaiting == "ack" and st.queue and st.queue[0] is pkt_ref:
                    begin_tx(st, DATA, dst, t_data, nav_data, pkt_ref, now)

        elif ev.kind == EV_TIMER:
            node, version, what = ev.payload
            st = nodes[node]
            if what == "fire":
                if version != st.bo_version or not st.counting:
                    continue
                st.counting = False
                st.contending = False
                st.bo_remaining = 0
                if not st.queue:
                    continue
                pkt = st.queue[0]
                st.awaiting = "cts"
                st.await_version += 1
                begin_tx(st, RTS, pkt.next_hop(), cfg.t_rts, nav_rts, None, now)
            elif what in ("cts_timeout", "ack_timeout"):
                if version != st.await_version or st.awaiting is None:
                    continue
                retry_or_drop(st, now)

    queued_at_end = sum(len(st.queue) for st in nodes.values())
    assert generated == len(delivered_records) + len(dropped_gens) + queued_at_end, (
        "conservation violated: %d != %d + %d + %d"
        % (generated, len(delivered_records), len(dropped_gens), queued_at_end)
    )
    m = compute_metrics(
        "baseline",
        s,
        generated,
        delivered_records,
        dropped_gens,
        queued_at_end,
        arrivals,
        per_channel_bits,
        doze_fraction=0.0,
    )
    if s.duration > 0 and 0 in m.per_channel_bits:
        assert m.per_channel_bits[0] <= cfg.bitrate * s.duration + 1e-6
    return m

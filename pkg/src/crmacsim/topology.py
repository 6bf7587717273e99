"""Node placement, the communication graph, and link conflict relations.

A link (u, v) exists when the nodes are within transmit range and share at
least one data channel.  Interference between links follows the protocol
model: it is derived from one-hop neighbor sets only.  The interference
range is wider than the transmit range but only primary-user coverage
uses it; link conflicts never do.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .errors import ConfigurationError

NodeId = int
Position = tuple[float, float]
Link = tuple[NodeId, NodeId]

DEFAULT_TX_RANGE = 150.0
DEFAULT_INTERFERENCE_RANGE = 300.0
DEFAULT_CONTROL_RANGE = 200.0


@dataclass(frozen=True)
class RadioProfile:
    """Radio ranges in meters, fixed for a scenario."""

    tx_range: float = DEFAULT_TX_RANGE
    interference_range: float = DEFAULT_INTERFERENCE_RANGE
    control_tx_range: float = DEFAULT_CONTROL_RANGE

    def __post_init__(self) -> None:
        if self.tx_range <= 0:
            raise ConfigurationError("tx_range must be positive")
        if self.interference_range < self.tx_range:
            raise ConfigurationError(
                "interference_range %g < tx_range %g"
                % (self.interference_range, self.tx_range)
            )


def distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class CommunicationGraph:
    """Static graph over node positions and per-node data-channel sets."""

    def __init__(
        self,
        positions: dict[NodeId, Position],
        profile: RadioProfile | None = None,
        channel_sets: dict[NodeId, frozenset[int]] | None = None,
    ):
        self.profile = profile or RadioProfile()
        self.positions: dict[NodeId, Position] = dict(positions)
        if channel_sets is None:
            channel_sets = {}
        self.channel_sets = {v: frozenset(channel_sets.get(v, ())) for v in positions}

        self._adj: dict[NodeId, set[NodeId]] = {v: set() for v in positions}
        self._control_hear: dict[NodeId, set[NodeId]] = {v: set() for v in positions}
        nodes = sorted(positions)
        for i, u in enumerate(nodes):
            pu = positions[u]
            for v in nodes[i + 1:]:
                d = distance(pu, positions[v])
                if d <= self.profile.control_tx_range:
                    self._control_hear[u].add(v)
                    self._control_hear[v].add(u)
                if d <= self.profile.tx_range and (
                    self.channel_sets[u] & self.channel_sets[v]
                ):
                    self._adj[u].add(v)
                    self._adj[v].add(u)

    @classmethod
    def build(
        cls,
        positions: dict[NodeId, Position],
        profile: RadioProfile | None = None,
        channel_sets: dict[NodeId, frozenset[int]] | None = None,
        all_channels: frozenset[int] | None = None,
    ) -> "CommunicationGraph":
        """Validating constructor. Nodes default to the full channel set."""
        seen: set[NodeId] = set()
        for v in positions:
            if v in seen:
                raise ConfigurationError("duplicate node id %r" % (v,))
            seen.add(v)
        if channel_sets is None:
            if all_channels is None:
                raise ConfigurationError("need channel_sets or all_channels")
            channel_sets = {v: all_channels for v in positions}
        return cls(positions, profile, channel_sets)

    # -- queries -------------------------------------------------------

    @property
    def nodes(self) -> list[NodeId]:
        return sorted(self.positions)

    def neighbors(self, v: NodeId) -> set[NodeId]:
        try:
            return self._adj[v]
        except KeyError:
            raise KeyError("unknown node %r" % (v,)) from None

    def control_hearers(self, v: NodeId) -> set[NodeId]:
        """Nodes that can decode v's control-channel transmissions."""
        return self._control_hear[v]

    def has_link(self, u: NodeId, v: NodeId) -> bool:
        return v in self._adj.get(u, ())

    @property
    def links(self) -> list[Link]:
        """All directed links, sorted. (u, v) present iff (v, u) is."""
        out = []
        for u in self.nodes:
            for v in sorted(self._adj[u]):
                out.append((u, v))
        return out

    def node_distance(self, u: NodeId, v: NodeId) -> float:
        return distance(self.positions[u], self.positions[v])

    # -- graph algorithms ----------------------------------------------

    def components(self) -> list[list[NodeId]]:
        seen: set[NodeId] = set()
        comps: list[list[NodeId]] = []
        for start in self.nodes:
            if start in seen:
                continue
            comp = []
            q = deque([start])
            seen.add(start)
            while q:
                u = q.popleft()
                comp.append(u)
                for w in sorted(self._adj[u]):
                    if w not in seen:
                        seen.add(w)
                        q.append(w)
            comps.append(sorted(comp))
        return comps

    def shortest_path(self, src: NodeId, dst: NodeId) -> list[NodeId] | None:
        """BFS shortest hop path; lowest-id tie-break for determinism."""
        if src == dst:
            return [src]
        prev: dict[NodeId, NodeId] = {src: src}
        q = deque([src])
        while q:
            u = q.popleft()
            for w in sorted(self._adj[u]):
                if w not in prev:
                    prev[w] = u
                    if w == dst:
                        path = [dst]
                        while path[-1] != src:
                            path.append(prev[path[-1]])
                        path.reverse()
                        return path
                    q.append(w)
        return None

    def hops_between(self, u: NodeId, v: NodeId) -> int | None:
        p = self.shortest_path(u, v)
        return None if p is None else len(p) - 1


def links_conflict(
    l1: Link, l2: Link, same_channel: bool, g: CommunicationGraph
) -> bool:
    """Whether two directed links may not be active in the same timeslot.

    Links sharing a node always conflict (single half-duplex transceiver).
    Otherwise they conflict only on a shared channel, when a transmitter
    is the other link's receiver or neighbors it.
    """
    u, v = l1
    x, y = l2
    if u == x or u == y or v == x or v == y:
        return True
    if not same_channel:
        return False
    nb = g.neighbors
    return v == x or u == y or v in nb(x) or u in nb(y)


class ConflictGraph:
    """Potential-conflict graph over directed links (same-channel case)."""

    def __init__(self, links: list[Link], edges: set[frozenset[Link]]):
        self.links = links
        self.edges = edges

    def conflicts(self, l1: Link, l2: Link) -> bool:
        return frozenset((l1, l2)) in self.edges


def build_conflict_graph(g: CommunicationGraph) -> ConflictGraph:
    links = g.links
    edges: set[frozenset[Link]] = set()
    for i, l1 in enumerate(links):
        for l2 in links[i + 1:]:
            if links_conflict(l1, l2, True, g):
                edges.add(frozenset((l1, l2)))
    return ConflictGraph(links, edges)


# -- placement ---------------------------------------------------------


def random_positions(
    n: int, width: float, height: float, rng
) -> dict[NodeId, Position]:
    if n <= 0:
        raise ConfigurationError("node count must be positive")
    xs = rng.uniform(0.0, width, size=n)
    ys = rng.uniform(0.0, height, size=n)
    return {i: (float(xs[i]), float(ys[i])) for i in range(n)}


def positions_from_file(path: str, width: float, height: float) -> dict[NodeId, Position]:
    """Parse a plain-text table: one line per node, 'id x y'."""
    out: dict[NodeId, Position] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ConfigurationError(
                    "%s:%d: expected 'id x y', got %r" % (path, lineno, raw.rstrip())
                )
            try:
                nid = int(parts[0])
                x, y = float(parts[1]), float(parts[2])
            except ValueError:
                raise ConfigurationError(
                    "%s:%d: malformed numbers in %r" % (path, lineno, raw.rstrip())
                ) from None
            if nid in out:
                raise ConfigurationError("%s:%d: duplicate node id %d" % (path, lineno, nid))
            if not (0.0 <= x <= width and 0.0 <= y <= height):
                raise ConfigurationError(
                    "%s:%d: node %d at (%g, %g) outside %gx%g area"
                    % (path, lineno, nid, x, y, width, height)
                )
            out[nid] = (x, y)
    if not out:
        raise ConfigurationError("%s: no nodes" % path)
    return out

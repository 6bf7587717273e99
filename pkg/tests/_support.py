"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from crmacsim.topology import CommunicationGraph, RadioProfile


ALL_DATA_CHANNELS = frozenset(range(1, 12))


def graph_from(coords, profile: RadioProfile | None = None,
               channels: frozenset[int] = ALL_DATA_CHANNELS) -> CommunicationGraph:
    """Graph over explicit (x, y) coordinates, node ids by list order."""
    positions = {i: (float(x), float(y)) for i, (x, y) in enumerate(coords)}
    return CommunicationGraph.build(positions, profile or RadioProfile(),
                                    all_channels=channels)


def chain_graph(n: int, spacing: float = 100.0) -> CommunicationGraph:
    """n nodes on a line; adjacent pairs are neighbors at the default ranges."""
    return graph_from([(i * spacing, 0.0) for i in range(n)])


def clique_graph(side: float = 100.0) -> CommunicationGraph:
    """Four nodes on a small square, all mutually in data and control range."""
    return graph_from([(0.0, 0.0), (side, 0.0), (0.0, side), (side, side)])


def random_graph(rng, n_low: int = 2, n_high: int = 8,
                 width: float = 400.0, height: float = 400.0) -> CommunicationGraph:
    """Small random placement; may be disconnected, which tests must tolerate."""
    n = int(rng.integers(n_low, n_high + 1))
    coords = [(float(rng.uniform(0, width)), float(rng.uniform(0, height)))
              for _ in range(n)]
    return graph_from(coords)


def write_positions(path, coords) -> str:
    """Write an 'id x y' placement file and return its path as a string."""
    lines = ["%d %g %g" % (i, x, y) for i, (x, y) in enumerate(coords)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class ScriptedRng:
    """Stand-in generator that replays a fixed list of integer draws.

    Only integers(low, high) is provided; tests that need scripted
    backoff or retry draws feed exactly the values they expect to be
    consumed, so an unconsumed or missing draw fails the test.
    """

    def __init__(self, values):
        self._values = list(values)

    def integers(self, low, high):
        if not self._values:
            raise AssertionError("scripted rng ran out of draws")
        v = self._values.pop(0)
        assert low <= v < high, "scripted draw %r outside [%r, %r)" % (v, low, high)
        return v

    def exhausted(self) -> bool:
        return not self._values


def fresh_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))

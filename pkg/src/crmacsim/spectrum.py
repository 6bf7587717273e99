"""Channel table, primary-user activity, and spectrum sensing.

Channel 0 is the always-available common control channel; data channels
are numbered from 1.  Each primary user owns one data channel and an
ON-OFF renewal process with exponential holding times; within a frame
the sensed state is frozen at the frame-start phase.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError, ContractViolation
from .topology import Position, distance

ChannelId = int

CONTROL_CHANNEL: ChannelId = 0

# 11 data channels: three at 2 Mb/s, four at 5.5 Mb/s, four at 11 Mb/s.
DEFAULT_DATA_RATES: tuple[float, ...] = (2e6,) * 3 + (5.5e6,) * 4 + (11e6,) * 4
DEFAULT_CONTROL_RATE = 2e6
DEFAULT_PU_COVERAGE = 300.0


def packets_per_slot_for_rate(rate: float) -> int:
    """Consecutive packets a slot carries on a channel of this bitrate."""
    if rate >= 11e6:
        return 5
    if rate >= 5.5e6:
        return 3
    return 1


@dataclass(frozen=True)
class ChannelTable:
    """Bitrates per channel; index 0 is the control channel."""

    data_rates: tuple[float, ...] = DEFAULT_DATA_RATES
    control_rate: float = DEFAULT_CONTROL_RATE

    def __post_init__(self) -> None:
        if not self.data_rates:
            raise ConfigurationError("need at least one data channel")
        if any(r <= 0 for r in self.data_rates) or self.control_rate <= 0:
            raise ConfigurationError("channel rates must be positive")

    @property
    def num_data_channels(self) -> int:
        return len(self.data_rates)

    @property
    def data_channels(self) -> range:
        return range(1, len(self.data_rates) + 1)

    @property
    def all_channels(self) -> range:
        return range(0, len(self.data_rates) + 1)

    def bandwidth(self, c: ChannelId) -> float:
        if c == CONTROL_CHANNEL:
            return self.control_rate
        return self.data_rates[c - 1]

    def packets_per_slot(self, c: ChannelId) -> int:
        return packets_per_slot_for_rate(self.bandwidth(c))


@dataclass
class PrimaryUser:
    """Licensed transmitter with a coverage disc and exponential ON-OFF phases.

    The toggle trajectory is generated lazily from `rng` and cached, so
    phase queries at arbitrary times are deterministic for a given seed.
    """

    position: Position
    channel: ChannelId
    coverage: float = DEFAULT_PU_COVERAGE
    mean_on: float = 1.0
    mean_off: float = 1.0
    rng: object = None
    _toggles: list[float] = field(default_factory=list, repr=False)
    _initial_on: bool | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.channel == CONTROL_CHANNEL:
            raise ConfigurationError("primary users never occupy the control channel")
        if self.mean_on < 0 or self.mean_off < 0:
            raise ConfigurationError("ON/OFF means must be non-negative")

    def _ensure_until(self, t: float) -> None:
        if self._initial_on is None:
            tot = self.mean_on + self.mean_off
            if math.isinf(self.mean_off):
                p_on = 0.0
            elif math.isinf(self.mean_on):
                p_on = 1.0
            else:
                p_on = self.mean_on / tot if tot > 0 else 0.0
            self._initial_on = bool(self.rng.random() < p_on) if self.rng is not None else False
        last = self._toggles[-1] if self._toggles else 0.0
        while last <= t:
            n = len(self._toggles)
            phase_on = self._initial_on ^ (n % 2 == 1)
            mean = self.mean_on if phase_on else self.mean_off
            if math.isinf(mean):
                self._toggles.append(math.inf)
                return
            dur = float(self.rng.exponential(mean)) if self.rng is not None else mean
            last = last + dur
            self._toggles.append(last)

    def phase_at(self, t: float) -> bool:
        """True when the PU is ON at time t >= 0."""
        if t < 0:
            raise ContractViolation("negative time %g" % t)
        # degenerate holding times pin the phase outright
        if self.mean_on == 0:
            return False
        if self.mean_off == 0:
            return True
        self._ensure_until(t)
        flips = bisect.bisect_right(self._toggles, t)
        return bool(self._initial_on ^ (flips % 2 == 1))

    def on_fraction(self, horizon: float) -> float:
        """Fraction of [0, horizon] spent ON, from the toggle trajectory."""
        if self.mean_on == 0:
            return 0.0
        if self.mean_off == 0:
            return 1.0
        self._ensure_until(horizon)
        total_on = 0.0
        prev = 0.0
        phase = self._initial_on
        for tg in self._toggles:
            seg_end = min(tg, horizon)
            if seg_end > prev and phase:
                total_on += seg_end - prev
            prev = seg_end
            phase = not phase
            if prev >= horizon:
                break
        if prev < horizon and phase:
            total_on += horizon - prev
        return total_on / horizon if horizon > 0 else 0.0


def pu_phase_at(pu: PrimaryUser, t: float) -> bool:
    return pu.phase_at(t)


def channel_busy_at(
    channel: ChannelId, pos: Position, t: float, pus: list[PrimaryUser]
) -> bool:
    """Whether a secondary at `pos` must treat `channel` as PU-occupied at t."""
    if channel == CONTROL_CHANNEL:
        raise ContractViolation("control channel is never PU-occupied; do not query it")
    for pu in pus:
        if pu.channel != channel:
            continue
        if distance(pu.position, pos) <= pu.coverage and pu.phase_at(t):
            return True
    return False


@dataclass(frozen=True)
class SensingReport:
    """Per-node, per-frame set of usable channels (control always included)."""

    node: int
    frame: int
    available: frozenset[ChannelId]

    def __post_init__(self) -> None:
        if CONTROL_CHANNEL not in self.available:
            raise ConfigurationError("control channel missing from sensing report")


def sense(
    node: int,
    pos: Position,
    frame: int,
    t: float,
    table: ChannelTable,
    pus: list[PrimaryUser],
    perfect: bool = True,
) -> SensingReport:
    """Perfect per-frame sensing at the frame-start instant."""
    del perfect  # imperfect sensing is out of scope; kept for signature clarity
    avail = {CONTROL_CHANNEL}
    for c in table.data_channels:
        if not channel_busy_at(c, pos, t, pus):
            avail.add(c)
    return SensingReport(node=node, frame=frame, available=frozenset(avail))


def random_pus(
    count: int,
    width: float,
    height: float,
    table: ChannelTable,
    rng,
    coverage: float = DEFAULT_PU_COVERAGE,
    mean_on: float = 1.0,
    mean_off: float = 1.0,
    phase_rngs: list | None = None,
) -> list[PrimaryUser]:
    """Place PUs uniformly, each on a uniformly drawn data channel."""
    out = []
    for i in range(count):
        x = float(rng.uniform(0.0, width))
        y = float(rng.uniform(0.0, height))
        c = int(rng.integers(1, table.num_data_channels + 1))
        out.append(
            PrimaryUser(
                position=(x, y),
                channel=c,
                coverage=coverage,
                mean_on=mean_on,
                mean_off=mean_off,
                rng=phase_rngs[i] if phase_rngs is not None else None,
            )
        )
    return out

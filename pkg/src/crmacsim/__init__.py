"""Deterministic simulator for a multichannel cognitive-radio MAC and its
single-channel CSMA/CA baseline."""

from .baseline import BaselineConfig, run_baseline_scenario
from .engine import (
    Flags,
    Flow,
    Metrics,
    PuConfig,
    Scenario,
    Trace,
    TrafficConfig,
    build_flows,
    build_graph,
    build_pus,
    compute_metrics,
    generate_traffic,
    run_scenario,
)
from .errors import ConfigurationError, ContractViolation
from .mac import (
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
from .segments import (
    Assignment,
    RateRequirement,
    SegmentTable,
    link_bandwidth,
    segment_capacity,
    select_segments,
    validate_assignment,
)
from .spectrum import (
    CONTROL_CHANNEL,
    ChannelTable,
    PrimaryUser,
    SensingReport,
    channel_busy_at,
    sense,
)
from .topology import (
    CommunicationGraph,
    ConflictGraph,
    RadioProfile,
    build_conflict_graph,
    links_conflict,
    random_positions,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "BaselineConfig",
    "ChannelTable",
    "CommunicationGraph",
    "ConfigurationError",
    "ConflictGraph",
    "ContractViolation",
    "CONTROL_CHANNEL",
    "Flags",
    "Flow",
    "FrameConfig",
    "FrameSchedule",
    "Metrics",
    "NegotiationIntent",
    "NodeMacState",
    "Packet",
    "PrimaryUser",
    "PuConfig",
    "RadioProfile",
    "RateRequirement",
    "Scenario",
    "SegmentTable",
    "SensingReport",
    "Trace",
    "TrafficConfig",
    "audit_schedule",
    "begin_frame",
    "build_conflict_graph",
    "build_flows",
    "build_graph",
    "build_pus",
    "channel_busy_at",
    "compute_metrics",
    "generate_traffic",
    "handle_missed_ack",
    "link_bandwidth",
    "links_conflict",
    "random_positions",
    "run_atim_window",
    "run_baseline_scenario",
    "run_scenario",
    "segment_capacity",
    "select_segments",
    "sense",
    "validate_assignment",
]

"""Command line front end: config parsing, sweeps, CSV and trace output.

Config files are INI-style key=value sections.  Unknown sections or
keys are rejected by name, so typos fail loudly instead of silently
running defaults.  The CSV schema is fixed: one row per run plus
mean/stddev summary rows flagged in the last column.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

from .baseline import BaselineConfig
from .engine import (
    Flags,
    Metrics,
    PuConfig,
    Scenario,
    Trace,
    TrafficConfig,
    run_scenario,
)
from .errors import ConfigurationError
from .mac import FrameConfig
from .spectrum import ChannelTable
from .topology import RadioProfile

CSV_COLUMNS = [
    "protocol",
    "seed",
    "topology_id",
    "num_flows",
    "throughput_bps",
    "normalized_throughput",
    "mean_delay_s",
    "pdr",
    "generated",
    "delivered",
    "dropped",
    "doze_fraction",
    "summary",
]


# -- config file -------------------------------------------------------

_SCHEMA: dict[str, dict[str, type]] = {
    "scenario": {
        "nodes": int,
        "area_width": float,
        "area_height": float,
        "duration": float,
        "flows": int,
        "positions_file": str,
    },
    "radio": {
        "tx_range": float,
        "interference_range": float,
        "control_tx_range": float,
    },
    "channels": {
        "data_rates": str,
        "control_rate": float,
    },
    "frame": {
        "sensing_dur": float,
        "atim_dur": float,
        "num_slots": int,
        "d_data": float,
        "d_ack": float,
        "d_guard": float,
        "switch_delay": float,
        "beacon_dur": float,
        "atim_mini_slots": int,
        "contention_window": int,
    },
    "traffic": {
        "packet_rate": float,
        "packet_size": int,
        "demand_low_frac": float,
        "demand_high_frac": float,
        "demand_ref_rate": float,
        "queue_limit": int,
        "retry_limit": int,
        "max_negotiations_per_frame": int,
    },
    "pu": {
        "count": int,
        "coverage": float,
        "mean_on": float,
        "mean_off": float,
    },
    "baseline": {
        "bitrate": float,
        "slot_time": float,
        "sifs": float,
        "difs": float,
        "plcp_overhead": float,
        "rts_bytes": int,
        "cts_bytes": int,
        "ack_bytes": int,
        "mac_header_bytes": int,
        "cw_min": int,
        "cw_max": int,
        "retry_limit": int,
        "timeout_slack_slots": int,
    },
    "flags": {
        "overhear": bool,
        "sensing": bool,
        "pu_midframe_toggle": bool,
        "literal_receiver_rule": bool,
        "warmup": float,
        "tail_cut": float,
    },
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _convert(section: str, key: str, raw: str, want: type):
    try:
        if want is bool:
            try:
                return _BOOL_WORDS[raw.strip().lower()]
            except KeyError:
                raise ValueError(raw)
        return want(raw)
    except ValueError:
        raise ConfigurationError(
            "bad value for [%s] %s: %r (expected %s)"
            % (section, key, raw, want.__name__)
        ) from None


def parse_config(path: str) -> Scenario:
    """Read an INI config into a Scenario; unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh, source=path)
    except OSError as e:
        raise ConfigurationError("cannot read config %s: %s" % (path, e)) from None
    except configparser.MissingSectionHeaderError as e:
        raise ConfigurationError(
            "parse error in %s at line %d: key outside any [section]"
            % (path, e.lineno)
        ) from None
    except configparser.ParsingError as e:
        lines = ", ".join(str(lineno) for (lineno, _line) in e.errors)
        raise ConfigurationError(
            "parse error in %s at line(s) %s" % (path, lines)
        ) from None

    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(
                "unknown section [%s] in %s (known: %s)"
                % (section, path, ", ".join(sorted(_SCHEMA)))
            )
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(
                    "unknown key %r in [%s] of %s (known: %s)"
                    % (key, section, path, ", ".join(sorted(_SCHEMA[section])))
                )
            values[section][key] = _convert(section, key, raw, _SCHEMA[section][key])

    return _scenario_from_values(values)


def _scenario_from_values(values: dict[str, dict]) -> Scenario:
    sc = values.get("scenario", {})
    ch = values.get("channels", {})
    channel_kwargs = {}
    if "data_rates" in ch:
        try:
            rates = tuple(float(tok) for tok in ch["data_rates"].split(",") if tok.strip())
        except ValueError:
            raise ConfigurationError(
                "bad value for [channels] data_rates: %r" % (ch["data_rates"],)
            ) from None
        channel_kwargs["data_rates"] = rates
    if "control_rate" in ch:
        channel_kwargs["control_rate"] = ch["control_rate"]

    kwargs = {
        "num_nodes": sc.get("nodes", 50),
        "area_width": sc.get("area_width", 1000.0),
        "area_height": sc.get("area_height", 750.0),
        "duration": sc.get("duration", 500.0),
        "num_flows": sc.get("flows", 8),
        "positions_file": sc.get("positions_file"),
        "channels": ChannelTable(**channel_kwargs),
        "radio": RadioProfile(**values.get("radio", {})),
        "frame": FrameConfig(**values.get("frame", {})),
        "traffic": TrafficConfig(**values.get("traffic", {})),
        "pu": PuConfig(**values.get("pu", {})),
        "baseline": BaselineConfig(**values.get("baseline", {})),
        "flags": Flags(**values.get("flags", {})),
    }
    return Scenario(**kwargs)


# -- flow specs --------------------------------------------------------


def parse_flow_spec(spec: str) -> list[int]:
    """`N`, `A..B:STEP`, and comma-joined combinations of those."""
    out: list[int] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if ".." in token:
            head, _, step_s = token.partition(":")
            a_s, _, b_s = head.partition("..")
            try:
                a, b = int(a_s), int(b_s)
                step = int(step_s) if step_s else 1
            except ValueError:
                raise ConfigurationError("bad flow range %r" % (token,)) from None
            if step < 1 or b < a:
                raise ConfigurationError("bad flow range %r" % (token,))
            out.extend(range(a, b + 1, step))
        else:
            try:
                out.append(int(token))
            except ValueError:
                raise ConfigurationError("bad flow count %r" % (token,)) from None
    if not out or any(f < 0 for f in out):
        raise ConfigurationError("flow spec %r yields no valid counts" % (spec,))
    return sorted(set(out))


# -- sweep -------------------------------------------------------------


@dataclass
class RunRecord:
    protocol: str
    seed: int
    topology_id: int
    num_flows: int
    throughput_bps: float
    normalized_throughput: float | None
    mean_delay_s: float | None
    pdr: float | None
    generated: int
    delivered: int
    dropped: int
    doze_fraction: float
    summary: str = ""


def run_sweep(
    base: Scenario,
    protocols: list[str],
    flow_counts: list[int],
    seeds: list[int],
    topology_ids: list[int],
    trace_dir: str | None = None,
) -> tuple[list[RunRecord], dict[tuple, Metrics]]:
    """Cartesian sweep; returns data rows and the raw Metrics per run."""
    results: dict[tuple, Metrics] = {}
    for protocol in sorted(protocols):
        for flows in flow_counts:
            for topo in topology_ids:
                for seed in seeds:
                    s = dataclasses.replace(
                        base,
                        protocol=protocol,
                        num_flows=flows,
                        topology_id=topo,
                        seed=seed,
                    )
                    trace = None
                    fh = None
                    if trace_dir:
                        os.makedirs(trace_dir, exist_ok=True)
                        name = "%s_f%d_t%d_s%d.trace" % (protocol, flows, topo, seed)
                        fh = open(os.path.join(trace_dir, name), "w")
                        trace = Trace(fh)
                    try:
                        m = run_scenario(s, trace)
                    finally:
                        if fh is not None:
                            fh.close()
                    results[(protocol, flows, topo, seed)] = m

    records: list[RunRecord] = []
    for (protocol, flows, topo, seed) in sorted(results):
        m = results[(protocol, flows, topo, seed)]
        base_m = results.get(("baseline", flows, topo, seed))
        norm: float | None = None
        if base_m is not None and base_m.throughput_bps > 0:
            norm = m.throughput_bps / base_m.throughput_bps
        records.append(
            RunRecord(
                protocol=protocol,
                seed=seed,
                topology_id=topo,
                num_flows=flows,
                throughput_bps=m.throughput_bps,
                normalized_throughput=norm,
                mean_delay_s=m.mean_delay_s,
                pdr=m.pdr,
                generated=m.measured_generated,
                delivered=m.measured_delivered,
                dropped=m.measured_dropped,
                doze_fraction=m.doze_fraction,
            )
        )
    return records, results


def _mean(xs: list[float]) -> float | None:
    return sum(xs) / len(xs) if xs else None


def _stddev(xs: list[float]) -> float | None:
    if len(xs) < 2:
        return None
    mu = sum(xs) / len(xs)
    return math.sqrt(sum((x - mu) ** 2 for x in xs) / (len(xs) - 1))


_SUMMARY_FIELDS = [
    "throughput_bps",
    "normalized_throughput",
    "mean_delay_s",
    "pdr",
    "generated",
    "delivered",
    "dropped",
    "doze_fraction",
]


def summarize(records: list[RunRecord]) -> list[RunRecord]:
    """Per (protocol, num_flows) mean and sample-stddev rows."""
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.protocol, r.num_flows), []).append(r)
    out: list[RunRecord] = []
    for (protocol, flows) in sorted(groups):
        rows = groups[(protocol, flows)]
        for which, fn in (("mean", _mean), ("stddev", _stddev)):
            vals = {}
            for f in _SUMMARY_FIELDS:
                xs = [getattr(r, f) for r in rows if getattr(r, f) is not None]
                vals[f] = fn(xs)
            out.append(
                RunRecord(
                    protocol=protocol,
                    seed=-1,
                    topology_id=-1,
                    num_flows=flows,
                    throughput_bps=vals["throughput_bps"],
                    normalized_throughput=vals["normalized_throughput"],
                    mean_delay_s=vals["mean_delay_s"],
                    pdr=vals["pdr"],
                    generated=vals["generated"],
                    delivered=vals["delivered"],
                    dropped=vals["dropped"],
                    doze_fraction=vals["doze_fraction"],
                    summary=which,
                )
            )
    return out


def _fmt(value, spec: str = "%.6f") -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    return spec % value


def _cell(value) -> str:
    """Full-precision cell text so consumers can recompute the summary
    rows from the raw rows exactly; rounding is display work and is
    left to whatever renders the CSV."""
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def format_record(r: RunRecord) -> str:
    is_summary = bool(r.summary)
    cells = [
        r.protocol,
        "" if is_summary else str(r.seed),
        "" if is_summary else str(r.topology_id),
        str(r.num_flows),
        _cell(r.throughput_bps),
        _cell(r.normalized_throughput),
        _cell(r.mean_delay_s),
        _cell(r.pdr),
        _cell(r.generated),
        _cell(r.delivered),
        _cell(r.dropped),
        _cell(r.doze_fraction),
        r.summary,
    ]
    return ",".join(cells)


def write_csv(records: list[RunRecord], fh, reproducible: bool = False) -> None:
    if not reproducible:
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        fh.write("# generated %s\n" % stamp)
    fh.write(",".join(CSV_COLUMNS) + "\n")
    for r in records:
        fh.write(format_record(r) + "\n")
    for r in summarize(records):
        fh.write(format_record(r) + "\n")


# -- entry point -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="crmac-sim",
        description="Multichannel cognitive-radio MAC simulator and its "
        "single-channel CSMA/CA baseline.",
    )
    p.add_argument("--config", metavar="PATH", help="INI scenario config")
    p.add_argument("--protocol", choices=["crmac", "baseline", "both"],
                   default="both", help="which protocol(s) to run")
    p.add_argument("--flows", default="8",
                   help="flow counts: N, A..B:STEP, comma-combinable")
    p.add_argument("--seeds", type=int, default=1, metavar="N",
                   help="run seeds 1..N per point")
    p.add_argument("--topologies", type=int, default=1, metavar="N",
                   help="topology ids 0..N-1 per point")
    p.add_argument("--duration", type=float, default=None, metavar="SECONDS",
                   help="override simulated duration")
    p.add_argument("--out", default="results.csv", metavar="CSV",
                   help="sweep output file")
    p.add_argument("--trace", metavar="DIR", default=None,
                   help="write one event trace file per run into DIR")
    p.add_argument("--disable-sensing", action="store_true",
                   help="diagnostic: skip spectrum sensing (breaks the PU audit)")
    p.add_argument("--no-overhear", action="store_true",
                   help="diagnostic: drop third-party reservation overhearing "
                   "(reproduces the multichannel hidden-terminal failure)")
    p.add_argument("--no-warmup-cut", action="store_true",
                   help="include the warmup ramp in reported totals")
    p.add_argument("--reproducible", action="store_true",
                   help="suppress the timestamp comment for byte-stable output")
    return p


def scenario_from_args(args) -> Scenario:
    base = parse_config(args.config) if args.config else Scenario()
    flag_changes = {}
    if args.disable_sensing:
        flag_changes["sensing"] = False
    if args.no_overhear:
        flag_changes["overhear"] = False
    if args.no_warmup_cut:
        flag_changes["warmup"] = 0.0
        flag_changes["tail_cut"] = 0.0
    changes = {}
    if flag_changes:
        changes["flags"] = dataclasses.replace(base.flags, **flag_changes)
    if args.duration is not None:
        changes["duration"] = args.duration
    return dataclasses.replace(base, **changes) if changes else base


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        base = scenario_from_args(args)
        flow_counts = parse_flow_spec(args.flows)
        if args.seeds < 1 or args.topologies < 1:
            raise ConfigurationError("--seeds and --topologies must be >= 1")
        protocols = ["crmac", "baseline"] if args.protocol == "both" else [args.protocol]
        seeds = list(range(1, args.seeds + 1))
        topology_ids = list(range(args.topologies))
        records, _results = run_sweep(
            base, protocols, flow_counts, seeds, topology_ids, trace_dir=args.trace
        )
        with open(args.out, "w") as fh:
            write_csv(records, fh, reproducible=args.reproducible)
    except ConfigurationError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    for r in summarize(records):
        if r.summary == "mean":
            print(
                "%s flows=%d throughput=%s bps delay=%s s pdr=%s"
                % (
                    r.protocol,
                    r.num_flows,
                    _fmt(r.throughput_bps, "%.0f"),
                    _fmt(r.mean_delay_s, "%.4f"),
                    _fmt(r.pdr, "%.4f"),
                )
            )
    print("wrote %s (%d runs)" % (args.out, len(records)))
    return 0


if __name__ == "__main__":
    sys.exit(main())

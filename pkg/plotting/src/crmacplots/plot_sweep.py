"""Render the three standard sweep figures from a results CSV.

The input is the CSV written by `crmac-sim`: one raw row per run plus
per (protocol, flow count) `mean` and `stddev` summary rows.  Each
figure plots one metric against the number of flows, one line per
protocol, with sample-stddev error bars.

Figures are regenerable artifacts.  Nothing in the simulator reads
them back, so this package only consumes the CSV and never imports the
simulator.
"""

import argparse
import csv
import os
import statistics
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


class SchemaError(ValueError):
    """The CSV does not match the sweep result layout."""


REQUIRED_COLUMNS = [
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


@dataclass(frozen=True)
class FigureSpec:
    metric: str
    ylabel: str
    filename: str


FIGURES = (
    FigureSpec("normalized_throughput", "normalized throughput", "normalized_throughput.png"),
    FigureSpec("mean_delay_s", "mean end-to-end delay (s)", "mean_delay_s.png"),
    FigureSpec("pdr", "packet delivery ratio", "pdr.png"),
)


def read_rows(csv_path: str) -> list[dict]:
    """All CSV rows as dicts, after a strict header check."""
    with open(csv_path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(
            "%s: missing column(s) %s" % (csv_path, ", ".join(missing))
        )
    rows = list(reader)
    if not rows:
        raise SchemaError("%s: no data rows" % csv_path)
    return rows


def _parse(cell: str | None) -> float | None:
    s = (cell or "").strip()
    if not s:
        return None
    try:
        return float(s)
    except ValueError:
        raise SchemaError("bad numeric cell %r" % (s,)) from None


Series = dict[str, dict[str, list[tuple[int, float, float]]]]


def load_series(csv_path: str) -> Series:
    """metric -> protocol -> sorted (flows, mean, stddev) triples.

    Summary rows are authoritative when present and the raw rows are
    then ignored; without them the raw rows are aggregated here with
    the same mean / sample-stddev definitions the writer uses.
    """
    rows = read_rows(csv_path)
    summaries = [r for r in rows if r["summary"]]
    series: Series = {spec.metric: {} for spec in FIGURES}

    def add(protocol: str, flows: int, metric: str,
            mean: float | None, dev: float | None) -> None:
        if mean is None:
            return
        series[metric].setdefault(protocol, []).append(
            (flows, mean, 0.0 if dev is None else dev)
        )

    if summaries:
        means = {}
        devs = {}
        for r in summaries:
            key = (r["protocol"], int(r["num_flows"]))
            if r["summary"] == "mean":
                means[key] = r
            elif r["summary"] == "stddev":
                devs[key] = r
            else:
                raise SchemaError("unknown summary kind %r" % (r["summary"],))
        for (protocol, flows), row in sorted(means.items()):
            dev_row = devs.get((protocol, flows))
            for spec in FIGURES:
                add(protocol, flows, spec.metric, _parse(row[spec.metric]),
                    _parse(dev_row[spec.metric]) if dev_row else None)
    else:
        groups: dict[tuple[str, int], list[dict]] = {}
        for r in rows:
            groups.setdefault((r["protocol"], int(r["num_flows"])), []).append(r)
        for (protocol, flows), grp in sorted(groups.items()):
            for spec in FIGURES:
                vals = [v for v in (_parse(r[spec.metric]) for r in grp)
                        if v is not None]
                if not vals:
                    continue
                dev = statistics.stdev(vals) if len(vals) > 1 else None
                add(protocol, flows, spec.metric, statistics.fmean(vals), dev)

    for metric in series:
        for pts in series[metric].values():
            pts.sort()
    return series


def plot_sweep(csv_path: str, out_dir: str) -> list[str]:
    """Write the three figures into out_dir; returns the file paths."""
    series = load_series(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for spec in FIGURES:
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for protocol in sorted(series[spec.metric]):
            pts = series[spec.metric][protocol]
            ax.errorbar(
                [p[0] for p in pts],
                [p[1] for p in pts],
                yerr=[p[2] for p in pts],
                marker="o",
                capsize=3,
                label=protocol,
            )
        ax.set_xlabel("number of flows")
        ax.set_ylabel(spec.ylabel)
        ax.grid(True, alpha=0.3)
        if series[spec.metric]:
            ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, spec.filename)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(
        prog="crmac-plots",
        description="Render the three sweep figures from a crmac-sim CSV.",
    )
    p.add_argument("--csv", required=True, metavar="PATH",
                   help="sweep results CSV")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory for the PNG files")
    args = p.parse_args(argv)
    try:
        written = plot_sweep(args.csv, args.out)
    except (SchemaError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    for path in written:
        print("wrote %s" % path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Per-trial timing records, their summary, CSV output and the linearity report.

Jitter is the mean absolute difference of consecutive per-trial RTTs.  Each
trial row carries its own |rtt_i - rtt_(i-1)| term (blank for the first), and
the summary row carries their mean.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

CSV_COLUMNS = (
    "scheme", "scenario", "vehicles", "medium_profile",
    "encrypt_ms", "hom_op_ms", "decrypt_ms", "total_comp_ms",
    "rtt_ms", "comm_latency_ms", "jitter_ms",
    "fragments_total", "frag_ms", "reasm_ms",
    "bytes_sent", "bytes_received", "trials",
)
META_PREFIX = "# hevx-run: "

TIMED_FIELDS = ("encrypt_ms", "hom_op_ms", "decrypt_ms", "total_comp_ms", "rtt_ms",
                "comm_latency_ms", "frag_ms", "reasm_ms")
COUNT_FIELDS = ("fragments_total", "bytes_sent", "bytes_received")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class TrialMetrics:
    encrypt_ms: float
    hom_op_ms: float
    decrypt_ms: float
    rtt_ms: float
    frag_ms: float
    reasm_ms: float
    fragments_total: int
    bytes_sent: int
    bytes_received: int
    trial: int = 0

    def __post_init__(self):
        for name in ("encrypt_ms", "hom_op_ms", "decrypt_ms", "rtt_ms", "frag_ms", "reasm_ms"):
            if getattr(self, name) < 0:
                raise MetricsError(f"negative duration {name}={getattr(self, name)}")

    @property
    def comm_latency_ms(self) -> float:
        return self.rtt_ms - self.hom_op_ms

    @property
    def total_comp_ms(self) -> float:
        return self.encrypt_ms + self.hom_op_ms + self.decrypt_ms

    def value(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class Summary:
    count: int
    mean: dict[str, float]
    stddev: dict[str, float]
    jitter_ms: float
    jitter_defined: bool
    rtt_differences: tuple[float, ...] = field(default=(), repr=False)


def rtt_differences(rtts: Sequence[float]) -> list[float]:
    return [abs(b - a) for a, b in zip(rtts, rtts[1:])]


def summarize(trials: Sequence[TrialMetrics]) -> Summary:
    if not trials:
        raise MetricsError("no completed trials to summarize")
    mean, std = {}, {}
    for name in TIMED_FIELDS + COUNT_FIELDS:
        vals = [float(t.value(name)) for t in trials]
        mean[name] = statistics.fmean(vals)
        std[name] = statistics.stdev(vals) if len(vals) > 1 else 0.0
    diffs = rtt_differences([t.rtt_ms for t in trials])
    return Summary(
        count=len(trials),
        mean=mean,
        stddev=std,
        jitter_ms=statistics.fmean(diffs) if diffs else 0.0,
        jitter_defined=bool(diffs),
        rtt_differences=tuple(diffs),
    )


@dataclass(frozen=True)
class RunLabel:
    """Identifies a run in the CSV's leading columns."""

    scheme: str
    scenario: str
    vehicles: int
    medium_profile: str


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def csv_rows(summary: Summary, trials: Sequence[TrialMetrics], label: RunLabel) -> list[list[str]]:
    lead = [label.scheme, label.scenario, str(label.vehicles), label.medium_profile]
    rows = [list(CSV_COLUMNS)]
    prev_rtt = None
    for t in trials:
        jitter = "" if prev_rtt is None else _fmt(abs(t.rtt_ms - prev_rtt))
        prev_rtt = t.rtt_ms
        rows.append(lead + [
            _fmt(t.encrypt_ms), _fmt(t.hom_op_ms), _fmt(t.decrypt_ms), _fmt(t.total_comp_ms),
            _fmt(t.rtt_ms), _fmt(t.comm_latency_ms), jitter,
            str(t.fragments_total), _fmt(t.frag_ms), _fmt(t.reasm_ms),
            str(t.bytes_sent), str(t.bytes_received), str(t.trial),
        ])
    m = summary.mean
    rows.append(lead + [
        _fmt(m["encrypt_ms"]), _fmt(m["hom_op_ms"]), _fmt(m["decrypt_ms"]), _fmt(m["total_comp_ms"]),
        _fmt(m["rtt_ms"]), _fmt(m["comm_latency_ms"]), _fmt(summary.jitter_ms),
        _fmt(m["fragments_total"]), _fmt(m["frag_ms"]), _fmt(m["reasm_ms"]),
        _fmt(m["bytes_sent"]), _fmt(m["bytes_received"]), str(summary.count),
    ])
    return rows


def emit_csv(summary: Summary, trials: Sequence[TrialMetrics], path: "str | Path | io.TextIOBase",
             label: RunLabel, metadata: dict | None = None) -> None:
    """Header, one row per trial, then the summary row (means).  A leading
    comment line holds the resolved run configuration, standard deviations
    and any failures."""
    meta = dict(metadata or {})
    meta.setdefault("stddev", {k: round(v, 6) for k, v in summary.stddev.items()})
    meta.setdefault("jitter_defined", summary.jitter_defined)
    meta.setdefault("jitter_definition", "mean |rtt_i - rtt_(i-1)| over consecutive trials")
    text = io.StringIO()
    text.write(META_PREFIX + json.dumps(meta, sort_keys=True, default=str) + "\n")
    csv.writer(text, lineterminator="\n").writerows(csv_rows(summary, trials, label))
    if isinstance(path, io.TextIOBase):
        path.write(text.getvalue())
    else:
        Path(path).write_text(text.getvalue())


@dataclass
class ParsedCsv:
    metadata: dict
    header: list[str]
    trial_rows: list[dict[str, str]]
    summary_row: dict[str, str]


def read_csv(path: "str | Path") -> ParsedCsv:
    lines = Path(path).read_text().splitlines()
    meta: dict = {}
    body = []
    for line in lines:
        if line.startswith(META_PREFIX):
            meta = json.loads(line[len(META_PREFIX):])
        elif not line.startswith("#") and line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise MetricsError(f"unexpected columns {header}")
    rows = [dict(zip(header, r)) for r in reader]
    if not rows:
        raise MetricsError("no summary row")
    return ParsedCsv(meta, header, rows[:-1], rows[-1])


def format_summary(summary: Summary, label: RunLabel) -> str:
    """Human-readable mean +/- std table in the layout of the latency tables."""
    m, s = summary.mean, summary.stddev
    lines = [
        f"{label.scheme} / {label.scenario} / {label.vehicles} vehicles / {label.medium_profile} "
        f"({summary.count} trials)",
        "  computational latency (ms)",
    ]
    for name, title in (("encrypt_ms", "encryption"), ("hom_op_ms", "homomorphic ops"),
                        ("decrypt_ms", "decryption"), ("total_comp_ms", "total")):
        lines.append(f"    {title:<18}{m[name]:>12.2f} +/- {s[name]:.2f}")
    lines.append("  communication")
    for name, title in (("rtt_ms", "RTT (ms)"), ("comm_latency_ms", "comm latency (ms)"),
                        ("frag_ms", "fragmentation (ms)"), ("reasm_ms", "reassembly (ms)")):
        lines.append(f"    {title:<18}{m[name]:>12.2f} +/- {s[name]:.2f}")
    jitter = f"{summary.jitter_ms:.2f}" if summary.jitter_defined else "0 (single trial)"
    lines.append(f"    {'jitter (ms)':<18}{jitter:>12}")
    lines.append(f"    {'fragments':<18}{m['fragments_total']:>12.0f}")
    lines.append(f"    {'bytes sent/recv':<18}{m['bytes_sent']:>12.0f} / {m['bytes_received']:.0f}")
    return "\n".join(lines)


# --- linearity ------------------------------------------------------------

@dataclass(frozen=True)
class LinearityReport:
    points: tuple[tuple[int, float], ...]
    ratio: float
    r_squared: float
    slope: float
    intercept: float


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least squares y = slope*x + intercept; returns (slope, intercept, R^2)."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise MetricsError("need at least two points")
    slope, intercept = statistics.linear_regression(xs, ys)
    mean_y = statistics.fmean(ys)
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def linearity_check(runs: Iterable[tuple[RunLabel, Summary]] | dict[int, float]) -> LinearityReport:
    """hom_op_ms(max N)/hom_op_ms(min N) and R^2 of hom_op_ms against N - 1.

    Accepts (label, summary) pairs, which must agree on scheme and scenario,
    or a plain {vehicles: hom_op_ms} mapping.
    """
    if isinstance(runs, dict):
        points = sorted((int(n), float(v)) for n, v in runs.items())
    else:
        runs = list(runs)
        keys = {(lab.scheme, lab.scenario, lab.medium_profile) for lab, _ in runs}
        if len(keys) != 1:
            raise MetricsError(f"mismatched configurations: {sorted(keys)}")
        points = sorted((lab.vehicles, s.mean["hom_op_ms"]) for lab, s in runs)
    if len({n for n, _ in points}) != len(points):
        raise MetricsError("duplicate vehicle counts")
    if len(points) < 2:
        raise MetricsError("need at least two vehicle counts")
    if points[0][1] <= 0:
        raise MetricsError("non-positive baseline time")
    slope, intercept, r2 = linear_fit([n - 1 for n, _ in points], [v for _, v in points])
    return LinearityReport(tuple(points), points[-1][1] / points[0][1], r2, slope, intercept)


import csv
import io
import json
import logging
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from Controller import NetworkCondition, QualityTier
from Scenario import display_cost
from Simulator import MetricsReport, SlotRecord

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "slot",
    "interface",
    "condition",
    "rtt_ms",
    "loss",
    "l_combined",
    "gop",
    "quality",
    "net_bitrate_mbps",
    "latency_ms",
    "generated_mb",
    "offloaded_mb",
    "carried_mb",
    "cost_units",
)

SUMMARY_MARKER = "# summary"


class OutputFormat(Enum):
    TABLE = "table"
    CSV = "csv"
    STRUCTURED = "structured"


@dataclass(frozen=True)
class OutputSpec:
    """
    Args:
        format: table, csv or structured (JSON)
        chart: Directory receiving the chart images, None for no charts
        destination: Report file, None for standard output
    """

    format: OutputFormat = OutputFormat.TABLE
    chart: Optional[Path] = None
    destination: Optional[Path] = None


def format_mbps(bps: float) -> str:
    return f"{bps / 1e6:.2f} Mbps"


def format_fraction(value: float) -> str:
    return f"{value:.4f}"


def format_cost(value: float) -> str:
    return f"{display_cost(value)} (exact {value!r})"


def journal_row(record: SlotRecord) -> list:
    return [
        record.slot_index,
        record.interface_chosen,
        record.condition.value,
        record.rtt_ms,
        record.loss,
        record.l_combined,
        record.gop_size,
        record.quality_tier.value,
        record.net_bitrate_bps / 1e6,
        record.latency_ms,
        record.generated_mb,
        record.offloaded_mb,
        record.carried_mb,
        record.cost_units,
    ]


def summary_items(report: MetricsReport) -> list[tuple[str, object]]:
    """
    Flat (key, value) view of a report, shared by the csv and structured
    outputs.
    """
    items = [
        ("scenario", report.scenario),
        ("seed", report.seed),
        ("slots", report.slots),
        ("offload_ratio", report.offload_ratio),
        ("total_offloaded_mb", report.total_offloaded_mb),
        ("baseline_cost_units", report.baseline_cost_units),
        ("reduced_cost_units", report.reduced_cost_units),
        (
            "reduced_cost_units_display",
            display_cost(report.reduced_cost_units),
        ),
        ("mean_latency_ms", report.mean_latency_ms),
        ("p95_latency_ms", report.p95_latency_ms),
        ("mean_throughput_mbps", report.mean_throughput_mbps),
    ]
    for condition, count in report.condition_breakdown.items():
        items.append((f"condition_{condition}", count))
    if report.comparison is not None:
        c = report.comparison
        items += [
            ("baseline_mean_latency_ms", c.baseline_mean_latency_ms),
            ("latency_delta_ms", c.latency_delta_ms),
            ("throughput_gain_fraction", c.throughput_gain_fraction),
            ("baseline_mean_throughput_mbps", c.baseline_mean_throughput_mbps),
        ]
    return items


def render_table(report: MetricsReport) -> str:
    lines = [
        f"Scenario {report.scenario} (seed {report.seed}, "
        f"{report.slots} slots)",
        f"  offload_ratio          {format_fraction(report.offload_ratio)}",
        f"  total_offloaded_mb     {report.total_offloaded_mb:.2f}",
        f"  baseline_cost_units    {format_cost(report.baseline_cost_units)}",
        f"  reduced_cost_units     {format_cost(report.reduced_cost_units)}",
        f"  mean_latency_ms        {report.mean_latency_ms:.2f}",
        f"  p95_latency_ms         {report.p95_latency_ms:.2f}",
        f"  mean_throughput        "
        f"{format_mbps(report.mean_throughput_mbps * 1e6)}",
    ]
    for condition, count in report.condition_breakdown.items():
        lines.append(f"  slots {condition:<16} {count}")

    if report.comparison is not None:
        c = report.comparison
        lines += [
            "Adaptive vs static",
            f"  static mean_latency_ms {c.baseline_mean_latency_ms:.2f}",
            f"  latency_delta_ms       {c.latency_delta_ms:.2f}",
            f"  throughput_gain        "
            f"{format_fraction(c.throughput_gain_fraction)}",
        ]
    return "\n".join(lines) + "\n"


def render_csv(report: MetricsReport, journal: list[SlotRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in journal:
        writer.writerow(journal_row(record))
    writer.writerow([SUMMARY_MARKER])
    for key, value in summary_items(report):
        writer.writerow([key, value])
    return buffer.getvalue()


def render_structured(report: MetricsReport, journal: list[SlotRecord]) -> str:
    rows = []
    for record in journal:
        row = dict(zip(CSV_COLUMNS, journal_row(record)))
        row.update(
            video_mb=record.video_mb,
            audio_mb=record.audio_mb,
            text_mb=record.text_mb,
            correction_mode=record.correction_mode.value,
            connectivity=record.connectivity,
        )
        rows.append(row)
    document = {"summary": dict(summary_items(report)), "journal": rows}
    return json.dumps(document, indent=2) + "\n"


def render_charts(
    report: MetricsReport, journal: list[SlotRecord], chart_dir
) -> list[Path]:
    from ChartRenderer import ChartRenderer

    chart_dir = Path(chart_dir)
    chart_dir.mkdir(parents=True, exist_ok=True)
    renderer = ChartRenderer()

    written = [
        renderer.render_line_chart(
            {"latency_ms": [r.latency_ms for r in journal]},
            f"{report.scenario}: latency per slot",
            "ms",
            chart_dir / "latency_over_slots.png",
        ),
        renderer.render_line_chart(
            {"net_mbps": [r.net_bitrate_bps / 1e6 for r in journal]},
            f"{report.scenario}: throughput per slot",
            "Mbps",
            chart_dir / "throughput_over_slots.png",
        ),
        renderer.render_ratio_chart(
            {"offload_ratio": report.offload_ratio},
            f"{report.scenario}: offloaded share of generated traffic",
            chart_dir / "offload_ratio.png",
        ),
    ]
    log.info(f"Wrote {len(written)} charts to {chart_dir}")
    return written


def emit_report(
    report: MetricsReport, journal: list[SlotRecord], spec: OutputSpec
) -> list[Path]:
    """
    Writes a run in the requested format to a file or standard output and
    renders the charts when a chart directory is given. Returns the files
    written.
    """
    if spec.format is OutputFormat.CSV:
        content = render_csv(report, journal)
    elif spec.format is OutputFormat.STRUCTURED:
        content = render_structured(report, journal)
    else:
        content = render_table(report)

    written = []
    if spec.destination is None:
        sys.stdout.write(content)
    else:
        destination = Path(spec.destination)
        with open(destination, "w", newline="") as f:
            f.write(content)
        written.append(destination)

    if spec.chart is not None:
        written += render_charts(report, journal, spec.chart)
    return written


def read_csv_journal(path) -> tuple[list[SlotRecord], dict[str, str]]:
    """
    Parses a csv report back into slot records and its summary block.
    """
    records = []
    summary = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected csv header {header}")

        in_summary = False
        for row in reader:
            if row == [SUMMARY_MARKER]:
                in_summary = True
                continue
            if in_summary:
                summary[row[0]] = row[1]
                continue
            values = dict(zip(CSV_COLUMNS, row))
            records.append(
                SlotRecord(
                    slot_index=int(values["slot"]),
                    interface_chosen=int(values["interface"]),
                    condition=NetworkCondition(values["condition"]),
                    rtt_ms=float(values["rtt_ms"]),
                    loss=float(values["loss"]),
                    l_combined=float(values["l_combined"]),
                    gop_size=int(values["gop"]),
                    quality_tier=QualityTier(values["quality"]),
                    net_bitrate_bps=float(values["net_bitrate_mbps"]) * 1e6,
                    latency_ms=float(values["latency_ms"]),
                    generated_mb=float(values["generated_mb"]),
                    offloaded_mb=float(values["offloaded_mb"]),
                    carried_mb=float(values["carried_mb"]),
                    cost_units=float(values["cost_units"]),
                )
            )
    return records, summary

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from Config import ScenarioConfig
from Controller import (
    CorrectionMode,
    NetworkCondition,
    QualityTier,
    control_step,
    static_decision,
)
from EventManager import Event, EventManager, EventType
from FrameRecorder import FrameRecorder
from Models import LinkMetrics, SelectionContext, SelectionMode
from Scenario import (
    active_connections,
    baseline_cost,
    offload_ratio,
    offloaded_volume,
    reduced_cost,
)

log = logging.getLogger(__name__)


class Policy(Enum):
    ADAPTIVE = "adaptive"
    STATIC = "static"


class SimulationError(Exception):
    """
    A slot failed. The slot index is kept so the run can be diagnosed.
    """

    def __init__(self, slot_index: int, cause: Exception):
        self.slot_index = slot_index
        self.cause = cause
        super().__init__(f"slot {slot_index}: {cause}")


@dataclass(frozen=True)
class SlotRecord:
    slot_index: int
    interface_chosen: int
    condition: NetworkCondition
    rtt_ms: float
    loss: float
    l_combined: float
    gop_size: int
    quality_tier: QualityTier
    net_bitrate_bps: float
    latency_ms: float
    generated_mb: float
    offloaded_mb: float
    carried_mb: float
    cost_units: float
    video_mb: float = 0.0
    audio_mb: float = 0.0
    text_mb: float = 0.0
    correction_mode: CorrectionMode = CorrectionMode.HYBRID
    connectivity: float = 1.0


@dataclass(frozen=True)
class Comparison:
    baseline_mean_latency_ms: float
    latency_delta_ms: float
    throughput_gain_fraction: float
    baseline_mean_throughput_mbps: float = 0.0


@dataclass(frozen=True)
class MetricsReport:
    offload_ratio: float
    total_offloaded_mb: float
    baseline_cost_units: float
    reduced_cost_units: float
    mean_latency_ms: float
    p95_latency_ms: float
    mean_throughput_mbps: float
    condition_breakdown: dict = field(default_factory=dict)
    comparison: Optional[Comparison] = None
    scenario: str = ""
    seed: int = 0
    slots: int = 0


def generate_trace(config: ScenarioConfig) -> list[list[LinkMetrics]]:
    """
    Builds the per-slot, per-interface link metrics of a scenario.

    A PCG64 generator seeded with config.seed draws one block of
    U[-1, 1) samples shaped (slots, interfaces, 3) in C order; the three
    samples of each cell jitter RTT, capacity and loss in that order:
        rtt      = base.rtt      * (1 + jitter * u0)
        capacity = base.capacity * (1 + jitter * u1)
        loss     = base.loss     + loss_jitter * u2
    Congestion windows are then applied (capacity * (1 - speed_drop),
    rtt + rtt_spike_ms, loss + loss_add) and loss is clamped to [0, 1].
    """
    n_interfaces = len(config.interfaces)
    for window in config.congestion_windows:
        if window.end_slot > config.slots:
            raise ValueError(
                f"congestion window [{window.start_slot}, {window.end_slot})"
                f" exceeds {config.slots} slots"
            )
        for index in window.interfaces or ():
            if not 0 <= index < n_interfaces:
                raise ValueError(f"unknown interface index {index}")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    u = rng.uniform(-1.0, 1.0, size=(config.slots, n_interfaces, 3))

    base = config.base_links
    base_rtt = np.array([link.rtt for link in base], dtype=float)
    base_capacity = np.array([link.capacity for link in base], dtype=float)
    base_loss = np.array([link.loss for link in base], dtype=float)

    rtt = base_rtt * (1 + config.noise.jitter * u[..., 0])
    capacity = base_capacity * (1 + config.noise.jitter * u[..., 1])
    loss = base_loss + config.noise.loss_jitter * u[..., 2]

    for window in config.congestion_windows:
        mask = np.zeros((config.slots, n_interfaces), dtype=bool)
        columns = (
            list(window.interfaces)
            if window.interfaces is not None
            else slice(None)
        )
        mask[window.start_slot : window.end_slot, columns] = True
        capacity[mask] *= 1 - window.speed_drop
        rtt[mask] += window.rtt_spike_ms
        loss[mask] += window.loss_add

    loss = np.clip(loss, 0.0, 1.0)

    return [
        [
            LinkMetrics(
                rtt=float(rtt[slot, i]),
                loss=float(loss[slot, i]),
                capacity=float(capacity[slot, i]),
            )
            for i in range(n_interfaces)
        ]
        for slot in range(config.slots)
    ]


def generated_volume(config: ScenarioConfig) -> float:
    """
    MB generated per slot, derived from the social profile when a
    per-connection volume is configured.
    """
    per_connection = config.offload.generated_mb_per_connection
    if per_connection is not None:
        return active_connections(config.social) * per_connection
    return config.offload.generated_mb


def step_slot(
    slot_index: int,
    trace_row: list[LinkMetrics],
    config: ScenarioConfig,
    policy: Policy = Policy.ADAPTIVE,
    randomness: Optional[np.random.Generator] = None,
) -> SlotRecord:
    """
    Runs the controller on one slot and accounts for the traffic volumes.
    """
    if len(trace_row) != len(config.interfaces):
        raise ValueError(
            f"trace row has {len(trace_row)} links for "
            f"{len(config.interfaces)} interfaces"
        )

    ctx = SelectionContext(tuple(trace_row), config.processing_delay)
    if policy is Policy.STATIC:
        decision = static_decision(
            ctx,
            config.video,
            config.compression,
            config.correction,
            config.gop,
            config.thresholds,
            config.reliability,
        )
    else:
        decision = control_step(
            ctx,
            config.video,
            config.compression,
            config.correction,
            config.gop,
            config.thresholds,
            config.reliability,
            mode=config.selection_mode,
            randomness=randomness,
        )

    generated = generated_volume(config)
    offloaded = offloaded_volume(
        replace(config.offload, generated_mb=generated)
    )
    carried = generated - offloaded
    link = trace_row[decision.chosen_interface]
    mix = config.traffic_mix

    return SlotRecord(
        slot_index=slot_index,
        interface_chosen=decision.chosen_interface,
        condition=decision.condition,
        rtt_ms=link.rtt,
        loss=link.loss,
        l_combined=decision.l_combined,
        gop_size=decision.settings.gop_size,
        quality_tier=decision.settings.quality_tier,
        net_bitrate_bps=decision.predicted_net_bitrate,
        latency_ms=decision.predicted_latency,
        generated_mb=generated,
        offloaded_mb=offloaded,
        carried_mb=carried,
        cost_units=baseline_cost(carried, config.cost),
        video_mb=generated * mix.video,
        audio_mb=generated * mix.audio,
        text_mb=generated * mix.text,
        correction_mode=decision.correction_mode,
        connectivity=decision.connectivity,
    )


def aggregate_journal(
    journal: list[SlotRecord],
    config: ScenarioConfig,
) -> MetricsReport:
    """
    Folds a slot journal into the run summary.
    """
    if not journal:
        raise ValueError("cannot aggregate an empty journal")

    generated = math.fsum(r.generated_mb for r in journal)
    offloaded = math.fsum(r.offloaded_mb for r in journal)
    ratio = offload_ratio(offloaded, generated) if generated > 0 else 0.0

    baseline = math.fsum(
        baseline_cost(r.generated_mb, config.cost) for r in journal
    ) / len(journal)

    latencies = np.array([r.latency_ms for r in journal], dtype=float)
    throughput = math.fsum(r.net_bitrate_bps for r in journal) / len(journal)

    breakdown = {condition.value: 0 for condition in NetworkCondition}
    for record in journal:
        breakdown[record.condition.value] += 1

    return MetricsReport(
        offload_ratio=ratio,
        total_offloaded_mb=offloaded,
        baseline_cost_units=baseline,
        reduced_cost_units=reduced_cost(baseline, config.cost),
        mean_latency_ms=math.fsum(latencies) / len(journal),
        p95_latency_ms=float(np.percentile(latencies, 95)),
        mean_throughput_mbps=throughput / 1e6,
        condition_breakdown=breakdown,
        scenario=config.name,
        seed=config.seed,
        slots=len(journal),
    )


class Simulator:
    """
    Drives the controller over a link trace one slot at a time, publishing
    every slot record on its own event bus so the frame recorder can
    journal it.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        policy: Policy = Policy.ADAPTIVE,
        recorder: Optional[FrameRecorder] = None,
        record: bool = True,
    ):
        """
        Args:
            config: Validated scenario
            policy: ADAPTIVE controller or the STATIC comparator
            recorder: Frame journal sink, built from config.recording if None
            record: False disables frame recording for this run
        """
        self.config = config
        self.policy = policy
        self.events = EventManager()

        if recorder is None:
            recorder = FrameRecorder(
                config.frames_per_slot,
                path=config.recording.path,
                enabled=record and config.recording.enabled,
            )
        self.recorder = recorder
        self.recorder.attach(self.events)

        # Separate stream so stochastic selection never shifts the trace.
        self.randomness = (
            np.random.default_rng([config.seed, 1])
            if config.selection_mode is SelectionMode.STOCHASTIC
            else None
        )
        self.journal: list[SlotRecord] = []

    def step(
        self, slot_index: int, trace_row: list[LinkMetrics]
    ) -> SlotRecord:
        try:
            record = step_slot(
                slot_index,
                trace_row,
                self.config,
                self.policy,
                self.randomness,
            )
        except Exception as e:
            raise SimulationError(slot_index, e) from e

        log.debug(
            f"Slot {slot_index}: interface {record.interface_chosen} "
            f"{record.condition.value} gop={record.gop_size} "
            f"latency={record.latency_ms:.1f} ms"
        )
        self.journal.append(record)
        self.events.publish(Event(EventType.SLOT_COMPLETED, record))
        return record

    def run(
        self, trace: Optional[list[list[LinkMetrics]]] = None
    ) -> tuple[list[SlotRecord], MetricsReport]:
        if trace is None:
            trace = generate_trace(self.config)

        log.info(
            f"Running {self.config.name} ({self.policy.value}): "
            f"{len(trace)} slots, seed {self.config.seed}"
        )
        self.events.publish(Event(EventType.RUN_STARTED, self.config))
        try:
            for slot_index, trace_row in enumerate(trace):
                self.step(slot_index, trace_row)
            report = aggregate_journal(self.journal, self.config)
        except Exception as e:
            self.events.publish(Event(EventType.RUN_ABORTED, e))
            raise
        self.events.publish(Event(EventType.RUN_FINISHED, report))
        log.info(
            f"Finished {self.config.name}: mean latency "
            f"{report.mean_latency_ms:.1f} ms, offload ratio "
            f"{report.offload_ratio:.4f}"
        )
        return self.journal, report


def run(
    config: ScenarioConfig,
    recorder: Optional[FrameRecorder] = None,
) -> tuple[list[SlotRecord], MetricsReport]:
    return Simulator(config, recorder=recorder).run()


def compare_runs(
    config: ScenarioConfig,
    recorder: Optional[FrameRecorder] = None,
) -> tuple[list[SlotRecord], list[SlotRecord], MetricsReport]:
    """
    Runs the adaptive controller and the static comparator on the same
    trace. Returns both journals and the adaptive report with the
    comparison filled in.
    """
    trace = generate_trace(config)
    journal, report = Simulator(config, recorder=recorder).run(trace)
    static_journal, static_report = Simulator(
        config, Policy.STATIC, record=False
    ).run(trace)

    static_throughput = static_report.mean_throughput_mbps
    gain = (
        (report.mean_throughput_mbps - static_throughput) / static_throughput
        if static_throughput > 0
        else 0.0
    )
    comparison = Comparison(
        baseline_mean_latency_ms=static_report.mean_latency_ms,
        latency_delta_ms=static_report.mean_latency_ms
        - report.mean_latency_ms,
        throughput_gain_fraction=gain,
        baseline_mean_throughput_mbps=static_throughput,
    )
    return journal, static_journal, replace(report, comparison=comparison)


def compare_baseline(config: ScenarioConfig) -> MetricsReport:
    return compare_runs(config)[2]


def run_batch(
    configs: list[ScenarioConfig], jobs: int = 1, compare: bool = False
) -> list[tuple[list[SlotRecord], MetricsReport]]:
    """
    Runs independent scenarios, concurrently when jobs > 1. Results keep
    the order of configs.
    """

    def execute(config: ScenarioConfig):
        if compare:
            journal, _, report = compare_runs(config)
            return journal, report
        return run(config)

    if jobs <= 1:
        return [execute(config) for config in configs]

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(execute, configs))

import math
import time
from collections import Counter
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from Config import CongestionWindow, default_scenario
from Controller import NetworkCondition, QualityTier, classify_condition
from FrameRecorder import FrameRecorder, read_journal
from Models import LinkMetrics
from Scenario import baseline_cost, display_cost, reduced_cost
from Simulator import (
    SimulationError,
    Simulator,
    aggregate_journal,
    compare_baseline,
    compare_runs,
    generate_trace,
    generated_volume,
    run,
    run_batch,
    step_slot,
)

QUIET = {"jitter": 0.0, "loss_jitter": 0.0}


@pytest.fixture(scope="module")
def dhaka():
    config = default_scenario()
    journal, report = run(config)
    return config, journal, report


def percentile_95(values):
    ordered = sorted(values)
    rank = 0.95 * (len(ordered) - 1)
    low = math.floor(rank)
    high = min(low + 1, len(ordered) - 1)
    return ordered[low] + (ordered[high] - ordered[low]) * (rank - low)


def assert_matches_journal(report, journal, config):
    """Recomputes every report field from the journal independently."""
    n = len(journal)
    generated = sum(r.generated_mb for r in journal)
    offloaded = sum(r.offloaded_mb for r in journal)
    baseline = sum(baseline_cost(r.generated_mb, config.cost) for r in journal)
    latencies = [r.latency_ms for r in journal]

    assert report.offload_ratio == pytest.approx(offloaded / generated)
    assert report.total_offloaded_mb == pytest.approx(offloaded, rel=1e-9)
    assert report.baseline_cost_units == pytest.approx(baseline / n, rel=1e-9)
    assert report.reduced_cost_units == pytest.approx(
        reduced_cost(baseline / n, config.cost), rel=1e-9
    )
    assert report.mean_latency_ms == pytest.approx(sum(latencies) / n, rel=1e-9)
    assert report.p95_latency_ms == pytest.approx(
        percentile_95(latencies), rel=1e-9
    )
    assert report.mean_throughput_mbps == pytest.approx(
        sum(r.net_bitrate_bps for r in journal) / n / 1e6, rel=1e-9
    )
    counts = Counter(r.condition.value for r in journal)
    for condition in NetworkCondition:
        assert report.condition_breakdown[condition.value] == counts.get(
            condition.value, 0
        )


class TestGenerateTrace:
    def test_quiet_trace_without_windows_is_the_base(self, make_config):
        config = make_config(slots=20, noise=QUIET, congestion_windows=[])
        trace = generate_trace(config)

        assert len(trace) == 20
        for row in trace:
            assert row == config.base_links

    def test_speed_drop_inside_window(self, make_config):
        config = make_config(slots=500, noise=QUIET)
        trace = generate_trace(config)

        assert trace[350][0].capacity == pytest.approx(25.542e6)
        assert trace[350][0].rtt == pytest.approx(80.0)
        assert trace[350][0].loss == pytest.approx(0.04)
        assert trace[299][0].capacity == pytest.approx(42.57e6)
        assert trace[400][0].capacity == pytest.approx(42.57e6)

    def test_window_limited_to_interfaces(self, make_config):
        config = make_config(
            slots=10,
            noise=QUIET,
            congestion_windows=[
                {
                    "start_slot": 2,
                    "end_slot": 5,
                    "speed_drop": 0.5,
                    "interfaces": [1],
                }
            ],
        )
        trace = generate_trace(config)
        assert trace[3][0] == config.base_links[0]
        assert trace[3][1].capacity == pytest.approx(15e6)

    def test_same_seed_same_trace(self, default_config):
        assert generate_trace(default_config) == generate_trace(
            default_config
        )

    def test_seed_changes_trace(self, default_config):
        other = replace(default_config, seed=7)
        assert generate_trace(default_config) != generate_trace(other)

    def test_noise_stays_within_bounds(self, default_config):
        trace = generate_trace(default_config)
        for slot, row in enumerate(trace):
            if 300 <= slot < 400 or 700 <= slot < 800:
                continue
            for link, base in zip(row, default_config.base_links):
                assert abs(link.rtt / base.rtt - 1) <= 0.05 + 1e-12
                assert abs(link.capacity / base.capacity - 1) <= 0.05 + 1e-12
                assert abs(link.loss - base.loss) <= 0.002 + 1e-12

    def test_loss_is_clamped(self, make_config):
        config = make_config(
            slots=5,
            congestion_windows=[
                {
                    "start_slot": 0,
                    "end_slot": 5,
                    "speed_drop": 0.1,
                    "loss_add": 1.0,
                }
            ],
        )
        trace = generate_trace(config)
        assert all(link.loss <= 1.0 for row in trace for link in row)

    def test_rejects_window_beyond_horizon(self, default_config):
        config = replace(
            default_config,
            congestion_windows=(CongestionWindow(900, 1100, 0.4),),
        )
        with pytest.raises(ValueError):
            generate_trace(config)


class TestStepSlot:
    def test_zero_traffic(self, make_config):
        config = make_config(
            offload={"ap_count": 50, "avg_offload_mb": 70, "generated_mb": 0}
        )
        row = [LinkMetrics(1.0, 0.0, 1e9) for _ in config.interfaces]
        record = step_slot(0, row, config)

        assert record.offloaded_mb == 0
        assert record.carried_mb == 0
        assert record.cost_units == 0

    def test_slot_outside_congestion(self, default_config):
        trace = generate_trace(default_config)
        record = step_slot(0, trace[0], default_config)

        assert record.condition is NetworkCondition.OPTIMAL
        assert record.offloaded_mb == 3500
        assert record.generated_mb == 5000
        assert record.carried_mb == 1500
        assert record.cost_units == baseline_cost(1500, default_config.cost)

    def test_slot_inside_congestion(self, default_config):
        trace = generate_trace(default_config)
        record = step_slot(350, trace[350], default_config)

        assert record.condition is NetworkCondition.CONGESTED
        assert record.quality_tier is QualityTier.LOW_LATENCY

    def test_latency_covers_buffering(self, default_config):
        trace = generate_trace(default_config)
        record = step_slot(5, trace[5], default_config)
        assert record.latency_ms >= default_config.gop.t_buffer

    def test_traffic_mix_is_journaled(self, default_config):
        trace = generate_trace(default_config)
        record = step_slot(0, trace[0], default_config)
        assert record.video_mb == pytest.approx(2750)
        assert record.audio_mb == pytest.approx(1500)
        assert record.text_mb == pytest.approx(750)

    def test_row_must_cover_every_interface(self, default_config):
        with pytest.raises(ValueError):
            step_slot(0, default_config.base_links[:2], default_config)

    def test_generated_volume_from_connections(self, make_config):
        config = make_config(
            offload={
                "ap_count": 50,
                "avg_offload_mb": 70,
                "generated_mb": 5000,
                "generated_mb_per_connection": 0.0001,
            }
        )
        assert generated_volume(config) == pytest.approx(7560)


class TestRun:
    def test_dhaka_metrics(self, dhaka):
        config, journal, report = dhaka

        assert len(journal) == 1000
        assert report.offload_ratio == pytest.approx(0.70)
        assert report.baseline_cost_units == 11_250
        assert report.reduced_cost_units == pytest.approx(9562.5)
        assert display_cost(report.reduced_cost_units) == 9563
        assert report.total_offloaded_mb == pytest.approx(3_500_000)

    def test_dhaka_condition_breakdown(self, dhaka):
        _, _, report = dhaka
        assert report.condition_breakdown == {"Optimal": 800, "Congested": 200}

    def test_conservation(self, dhaka):
        _, journal, _ = dhaka
        for record in journal:
            assert record.offloaded_mb + record.carried_mb == (
                record.generated_mb
            )

    def test_slots_run_in_order(self, dhaka):
        _, journal, _ = dhaka
        assert [r.slot_index for r in journal] == list(range(1000))

    def test_report_matches_journal(self, dhaka):
        config, journal, report = dhaka
        assert_matches_journal(report, journal, config)

    def test_report_matches_journal_without_congestion(self, make_config):
        config = make_config(slots=200, congestion_windows=[])
        journal, report = run(config)
        assert report.condition_breakdown["Congested"] == 0
        assert_matches_journal(report, journal, config)

    def test_report_matches_journal_under_constant_congestion(
        self, make_config
    ):
        config = make_config(
            slots=50,
            congestion_windows=[
                {
                    "start_slot": 0,
                    "end_slot": 50,
                    "speed_drop": 0.4,
                    "rtt_spike_ms": 60,
                    "loss_add": 0.03,
                }
            ],
        )
        journal, report = run(config)
        assert report.condition_breakdown["Optimal"] == 0
        assert_matches_journal(report, journal, config)

    def test_congested_windows_match_classifier(self, dhaka):
        config, journal, _ = dhaka
        trace = generate_trace(config)
        for record in journal[300:400] + journal[700:800]:
            link = trace[record.slot_index][record.interface_chosen]
            assert record.condition is classify_condition(
                link, config.thresholds
            )
            assert record.condition is NetworkCondition.CONGESTED

    def test_single_slot(self, make_config):
        config = make_config(slots=1, congestion_windows=[])
        journal, report = run(config)

        assert len(journal) == 1
        assert report.mean_latency_ms == journal[0].latency_ms
        assert report.p95_latency_ms == journal[0].latency_ms
        assert report.mean_throughput_mbps == pytest.approx(
            journal[0].net_bitrate_bps / 1e6
        )

    def test_deterministic(self, make_config):
        config = make_config(slots=100)
        assert run(config) == run(config)

    def test_stochastic_selection_is_reproducible(self, make_config):
        config = make_config(slots=60, selection_mode="stochastic")
        first, _ = run(config)
        second, _ = run(config)

        assert first == second
        assert len({r.interface_chosen for r in first}) > 1

    def test_stochastic_selection_keeps_the_trace(self, make_config):
        deterministic = make_config(slots=30)
        stochastic = make_config(slots=30, selection_mode="stochastic")
        assert generate_trace(deterministic) == generate_trace(stochastic)

    def test_frame_accounting(self, make_config):
        config = make_config(slots=20)
        recorder = FrameRecorder(config.frames_per_slot)
        journal, _ = Simulator(config, recorder=recorder).run()

        assert recorder.total_frames == 20 * 30
        assert recorder.finalized
        assert recorder.total_bytes == pytest.approx(
            sum(r.net_bitrate_bps for r in journal) / 8
        )

    def test_recording_section_writes_journal(self, make_config, tmp_path):
        path = tmp_path / "frames.ndjson"
        config = make_config(
            slots=3, recording={"enabled": True, "path": str(path)}
        )
        run(config)
        assert len(path.read_text().splitlines()) == 3 * 30 + 1

    def test_slot_error_carries_index(self, default_config):
        trace = generate_trace(default_config)[:5]
        trace[3] = trace[3][:1]
        with pytest.raises(SimulationError) as excinfo:
            Simulator(default_config).run(trace)
        assert excinfo.value.slot_index == 3
        assert isinstance(excinfo.value.cause, ValueError)

    def test_any_slot_failure_carries_index(self, make_config):
        config = make_config(slots=3)
        with patch("Simulator.step_slot", side_effect=KeyError("gop")):
            with pytest.raises(SimulationError) as excinfo:
                Simulator(config).run()
        assert excinfo.value.slot_index == 0
        assert isinstance(excinfo.value.cause, KeyError)

    def test_failed_run_closes_journal(self, make_config, tmp_path):
        path = tmp_path / "frames.ndjson"
        config = make_config(
            slots=3, recording={"enabled": True, "path": str(path)}
        )
        trace = generate_trace(config)
        trace[1] = trace[1][:1]
        simulator = Simulator(config)

        with pytest.raises(SimulationError):
            simulator.run(trace)

        assert simulator.recorder.finalized
        assert simulator.recorder._file.closed
        entries, footer = read_journal(path)
        assert len(entries) == 30
        assert footer == {}

    def test_default_run_within_time_budget(self, default_config):
        started = time.perf_counter()
        journal, _ = run(default_config)
        assert time.perf_counter() - started < 10.0
        assert len(journal) == 1000

    def test_empty_journal_cannot_be_aggregated(self, default_config):
        with pytest.raises(ValueError):
            aggregate_journal([], default_config)


class TestCompareBaseline:
    def test_dhaka_adaptive_is_not_worse(self, default_config):
        report = compare_baseline(default_config)
        comparison = report.comparison

        assert report.mean_latency_ms <= comparison.baseline_mean_latency_ms
        assert comparison.latency_delta_ms >= 0
        assert comparison.throughput_gain_fraction >= 0
        assert (
            report.mean_throughput_mbps
            >= comparison.baseline_mean_throughput_mbps
        )

    def test_static_policy_is_fixed(self, make_config):
        config = make_config(slots=400)
        _, static_journal, _ = compare_runs(config)

        assert all(r.interface_chosen == 0 for r in static_journal)
        assert all(r.gop_size == config.gop.g_max for r in static_journal)
        assert all(
            r.quality_tier is QualityTier.HIGH_QUALITY for r in static_journal
        )

    def test_without_congestion_only_the_gop_differs(self, make_config):
        config = make_config(slots=50, congestion_windows=[])
        journal, static_journal, report = compare_runs(config)

        assert [r.interface_chosen for r in journal] == [
            r.interface_chosen for r in static_journal
        ]
        gop = config.gop
        assert report.comparison.latency_delta_ms == pytest.approx(
            1000 * (gop.g_max - 9) / gop.frame_rate
        )
        assert report.comparison.throughput_gain_fraction == pytest.approx(
            0.0, abs=1e-12
        )

    def test_latency_only_window_trades_throughput(self, make_config):
        config = make_config(
            slots=20,
            noise=QUIET,
            congestion_windows=[
                {
                    "start_slot": 0,
                    "end_slot": 20,
                    "speed_drop": 0.0,
                    "rtt_spike_ms": 60,
                }
            ],
        )
        journal, static_journal, report = compare_runs(config)
        comparison = report.comparison

        assert all(
            r.quality_tier is QualityTier.LOW_LATENCY for r in journal
        )
        assert report.mean_throughput_mbps == pytest.approx(27.36)
        assert comparison.baseline_mean_throughput_mbps == pytest.approx(
            34.0402176
        )
        assert comparison.throughput_gain_fraction == pytest.approx(
            27.36 / 34.0402176 - 1
        )
        assert comparison.throughput_gain_fraction < 0
        assert comparison.latency_delta_ms > 0

    def test_capacity_bound_window_is_not_worse(self, make_config):
        config = make_config(
            slots=20,
            noise=QUIET,
            congestion_windows=[
                {
                    "start_slot": 0,
                    "end_slot": 20,
                    "speed_drop": 0.4,
                    "rtt_spike_ms": 60,
                    "loss_add": 0.03,
                }
            ],
        )
        _, static_journal, report = compare_runs(config)

        # Capacity, not the tier, limits both runs.
        assert all(r.net_bitrate_bps < 27.36e6 for r in static_journal)
        assert report.comparison.throughput_gain_fraction >= -1e-12

    def test_dominating_interface(self, make_config):
        config = make_config(
            slots=10,
            noise=QUIET,
            congestion_windows=[],
            interfaces=[
                {
                    "name": "slow",
                    "base": {"rtt": 80, "loss": 0.05, "capacity": 10_000_000},
                },
                {
                    "name": "fast",
                    "base": {"rtt": 10, "loss": 0.001, "capacity": 50_000_000},
                },
            ],
        )
        journal, static_journal, report = compare_runs(config)

        assert all(r.interface_chosen == 1 for r in journal)
        assert all(r.interface_chosen == 0 for r in static_journal)
        assert report.mean_latency_ms < (
            report.comparison.baseline_mean_latency_ms
        )
        assert report.comparison.throughput_gain_fraction > 0

    def test_static_run_does_not_record(self, make_config, tmp_path):
        path = tmp_path / "frames.ndjson"
        config = make_config(
            slots=2, recording={"enabled": True, "path": str(path)}
        )
        compare_runs(config)
        assert len(path.read_text().splitlines()) == 2 * 30 + 1


class TestRunBatch:
    def test_parallel_matches_sequential(self, make_config):
        configs = [make_config(slots=30, seed=seed) for seed in (1, 2, 3)]
        assert run_batch(configs, jobs=3) == run_batch(configs, jobs=1)

    def test_results_keep_config_order(self, make_config):
        configs = [make_config(slots=10, seed=seed) for seed in (5, 6)]
        results = run_batch(configs, jobs=2, compare=True)
        assert [report.seed for _, report in results] == [5, 6]
        assert all(report.comparison is not None for _, report in results)

    def test_independent_seeds_differ(self, make_config):
        a, b = run_batch(
            [make_config(slots=20, seed=1), make_config(slots=20, seed=2)],
            jobs=2,
        )
        assert not np.array_equal(
            [r.rtt_ms for r in a[0]], [r.rtt_ms for r in b[0]]
        )

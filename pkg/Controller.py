from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from Models import (
    CompressionParams,
    CorrectionParams,
    GopParams,
    LinkMetrics,
    ReliabilityParams,
    SelectionContext,
    SelectionMode,
    VideoProfile,
    buffering_latency,
    combined_loss,
    connectivity_probability,
    corrected_loss,
    effective_bitrate,
    effective_latency,
    net_bitrate,
    optimal_gop,
    raw_bitrate,
    select_interface,
)


class NetworkCondition(Enum):
    OPTIMAL = "Optimal"
    CONGESTED = "Congested"


class QualityTier(Enum):
    HIGH_QUALITY = "high_quality"
    LOW_LATENCY = "low_latency"


class CorrectionMode(Enum):
    """
    HYBRID runs FEC then NACK recovery, NACK skips the FEC stage.
    """

    HYBRID = "hybrid"
    NACK = "nack"


@dataclass(frozen=True)
class ControllerThresholds:
    """
    Limits separating an Optimal link from a Congested one and the encoder
    bitrate used for each tier.

    Args:
        max_loss_optimal: Highest loss fraction still considered Optimal
        max_rtt_optimal: Highest RTT (ms) still considered Optimal
        high_quality_bitrate: Encoder target on Optimal links (bits/s)
        low_latency_bitrate: Encoder target on Congested links (bits/s)
        congestion_factor: Multiplier applied to t_max before recomputing
            the GOP on Congested links
        fec_switch_loss: When set, links with loss below it use NACK only
    """

    max_loss_optimal: float = 0.02
    max_rtt_optimal: float = 50.0
    high_quality_bitrate: float = 40_000_000.0
    low_latency_bitrate: float = 32_000_000.0
    congestion_factor: float = 0.6
    fec_switch_loss: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.max_loss_optimal <= 1.0:
            raise ValueError("max_loss_optimal must be within [0, 1]")
        if self.max_rtt_optimal <= 0:
            raise ValueError("max_rtt_optimal must be > 0")
        if self.low_latency_bitrate <= 0:
            raise ValueError("low_latency_bitrate must be > 0")
        if self.low_latency_bitrate > self.high_quality_bitrate:
            raise ValueError(
                "low_latency_bitrate must not exceed high_quality_bitrate"
            )
        if not 0.0 < self.congestion_factor <= 1.0:
            raise ValueError("congestion_factor must be within (0, 1]")
        if self.fec_switch_loss is not None and not (
            0.0 <= self.fec_switch_loss <= 1.0
        ):
            raise ValueError("fec_switch_loss must be within [0, 1]")


@dataclass(frozen=True)
class EncoderSettings:
    quality_tier: QualityTier
    target_bitrate: float
    gop_size: int

    def __post_init__(self):
        if self.target_bitrate <= 0:
            raise ValueError("target_bitrate must be > 0")


@dataclass(frozen=True)
class ControlDecision:
    condition: NetworkCondition
    settings: EncoderSettings
    chosen_interface: int
    predicted_latency: float
    predicted_net_bitrate: float
    l_combined: float
    correction_mode: CorrectionMode
    connectivity: float


def classify_condition(
    link: LinkMetrics, thresholds: ControllerThresholds
) -> NetworkCondition:
    if (
        link.loss <= thresholds.max_loss_optimal
        and link.rtt <= thresholds.max_rtt_optimal
    ):
        return NetworkCondition.OPTIMAL
    return NetworkCondition.CONGESTED


def settings_for(
    condition: NetworkCondition,
    gop: GopParams,
    thresholds: ControllerThresholds,
) -> EncoderSettings:
    """
    Encoder settings for a condition. Congested links get the low-latency
    tier and a GOP recomputed against a tightened latency budget.
    """
    if condition is NetworkCondition.OPTIMAL:
        return EncoderSettings(
            quality_tier=QualityTier.HIGH_QUALITY,
            target_bitrate=thresholds.high_quality_bitrate,
            gop_size=optimal_gop(gop),
        )

    tightened = replace(gop, t_max=gop.t_max * thresholds.congestion_factor)
    return EncoderSettings(
        quality_tier=QualityTier.LOW_LATENCY,
        target_bitrate=thresholds.low_latency_bitrate,
        gop_size=optimal_gop(tightened),
    )


def encoder_bitrate(
    settings: EncoderSettings,
    video: VideoProfile,
    compression: CompressionParams,
) -> float:
    """
    Encoder output rate: the tier target, capped by what the compressed
    source can actually produce.
    """
    source = effective_bitrate(raw_bitrate(video), compression)
    return min(settings.target_bitrate, source)


def residual_loss(
    loss: float,
    correction: CorrectionParams,
    thresholds: ControllerThresholds,
) -> tuple[CorrectionMode, float]:
    """
    Chooses between NACK-only and hybrid recovery for a link and returns the
    loss left after it.
    """
    if (
        thresholds.fec_switch_loss is not None
        and loss < thresholds.fec_switch_loss
    ):
        return CorrectionMode.NACK, combined_loss(loss, correction)
    return CorrectionMode.HYBRID, corrected_loss(loss, correction)


def _decide(
    ctx: SelectionContext,
    chosen: int,
    condition: NetworkCondition,
    settings: EncoderSettings,
    video: VideoProfile,
    compression: CompressionParams,
    correction: CorrectionParams,
    gop: GopParams,
    thresholds: ControllerThresholds,
    reliability: ReliabilityParams,
) -> ControlDecision:
    link = ctx.candidates[chosen]
    mode, l_combined = residual_loss(link.loss, correction, thresholds)

    latency = buffering_latency(settings.gop_size, gop) + effective_latency(
        link, ctx.processing_delay
    )
    chain = net_bitrate(
        encoder_bitrate(settings, video, compression), compression
    )
    throughput = min(chain, link.capacity * (1 - l_combined))

    return ControlDecision(
        condition=condition,
        settings=settings,
        chosen_interface=chosen,
        predicted_latency=latency,
        predicted_net_bitrate=throughput,
        l_combined=l_combined,
        correction_mode=mode,
        connectivity=connectivity_probability(link.loss, reliability),
    )


def control_step(
    candidates: SelectionContext,
    video: VideoProfile,
    compression: CompressionParams,
    correction: CorrectionParams,
    gop: GopParams,
    thresholds: ControllerThresholds,
    reliability: ReliabilityParams = ReliabilityParams(),
    mode: SelectionMode = SelectionMode.DETERMINISTIC,
    randomness: Optional[np.random.Generator] = None,
) -> ControlDecision:
    """
    One pass of the adaptive pipeline: select an interface, measure it,
    adjust the GOP, set buffering and emit the decision. Per-candidate loss
    is read from each candidate's LinkMetrics.
    """
    chosen = select_interface(candidates, mode, randomness)
    condition = classify_condition(candidates.candidates[chosen], thresholds)
    settings = settings_for(condition, gop, thresholds)

    return _decide(
        candidates,
        chosen,
        condition,
        settings,
        video,
        compression,
        correction,
        gop,
        thresholds,
        reliability,
    )


def static_decision(
    candidates: SelectionContext,
    video: VideoProfile,
    compression: CompressionParams,
    correction: CorrectionParams,
    gop: GopParams,
    thresholds: ControllerThresholds,
    reliability: ReliabilityParams = ReliabilityParams(),
) -> ControlDecision:
    """
    Non-adaptive comparator: always interface 0, high-quality tier and the
    largest GOP. The condition is still classified for the journal.
    """
    condition = classify_condition(candidates.candidates[0], thresholds)
    settings = EncoderSettings(
        quality_tier=QualityTier.HIGH_QUALITY,
        target_bitrate=thresholds.high_quality_bitrate,
        gop_size=gop.g_max,
    )
    return _decide(
        candidates,
        0,
        condition,
        settings,
        video,
        compression,
        correction,
        gop,
        thresholds,
        reliability,
    )

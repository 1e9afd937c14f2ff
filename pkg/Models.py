import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

DEFAULT_ALPHA = 10.0


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be within [0, 1], got {value}")


@dataclass(frozen=True)
class VideoProfile:
    """
    Raw frame geometry, rate and colour depth of a source stream.
    """

    width: int
    height: int
    frame_rate: float
    color_depth: int

    def __post_init__(self):
        for name in ("width", "height", "frame_rate", "color_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class CompressionParams:
    """
    Compression factor (eta), network overhead (omega) and retransmission
    loss (lambda) applied along the bitrate chain.
    """

    eta: float
    overhead: float = 0.0
    retransmission_loss: float = 0.0

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")
        _check_fraction("overhead", self.overhead)
        _check_fraction("retransmission_loss", self.retransmission_loss)


@dataclass(frozen=True)
class LinkMetrics:
    """
    Measured state of one interface: RTT in ms, loss fraction and capacity
    in bits/second.
    """

    rtt: float
    loss: float
    capacity: float

    def __post_init__(self):
        if self.rtt < 0:
            raise ValueError(f"rtt must be >= 0, got {self.rtt}")
        _check_fraction("loss", self.loss)
        if self.capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {self.capacity}")


@dataclass(frozen=True)
class ReliabilityParams:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class SelectionContext:
    """
    Candidate interfaces competing for the stream plus the processing delay
    added to every RTT.
    """

    candidates: tuple[LinkMetrics, ...]
    processing_delay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("at least one candidate interface is required")
        if self.processing_delay < 0:
            raise ValueError("processing_delay must be >= 0")


@dataclass(frozen=True)
class CorrectionParams:
    """
    FEC redundancy (gamma), NACK efficiency (beta) and NACK requests per
    transmitted packet.
    """

    gamma: float
    beta: float
    nack_rate: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        _check_fraction("nack_rate", self.nack_rate)


@dataclass(frozen=True)
class GopParams:
    """
    Latency budget and GOP bounds. Times are in milliseconds, GOP sizes in
    frames.
    """

    t_max: float
    t_buffer: float
    frame_rate: float
    g_min: int
    g_max: int
    frame_interval: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.g_min <= self.g_max:
            raise ValueError(
                f"GOP bounds must satisfy 0 < g_min <= g_max, "
                f"got [{self.g_min}, {self.g_max}]"
            )
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be strictly positive")
        if self.t_buffer < 0:
            raise ValueError("t_buffer must be >= 0")
        if self.t_max < 0:
            raise ValueError("t_max must be >= 0")
        object.__setattr__(self, "frame_interval", 1000.0 / self.frame_rate)


class SelectionMode(Enum):
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"


# Bitrate chain


def raw_bitrate(profile: VideoProfile) -> float:
    """Uncompressed bitrate in bits/second."""
    return (
        profile.width
        * profile.height
        * profile.frame_rate
        * profile.color_depth
    )


def effective_bitrate(raw: float, params: CompressionParams) -> float:
    """Bitrate after compression by a factor of eta."""
    if raw < 0:
        raise ValueError("raw bitrate must be >= 0")
    if params.eta < 1:
        raise ValueError(f"eta must be >= 1, got {params.eta}")
    return raw / params.eta


def net_bitrate(effective: float, params: CompressionParams) -> float:
    """
    Useful bitrate left after network overhead and retransmission losses.
    """
    if effective < 0:
        raise ValueError("effective bitrate must be >= 0")
    _check_fraction("overhead", params.overhead)
    _check_fraction("retransmission_loss", params.retransmission_loss)
    return (
        effective
        * (1 - params.overhead)
        * (1 - params.retransmission_loss)
    )


# Reliability and interface selection


def connectivity_probability(
    loss: float, params: ReliabilityParams = ReliabilityParams()
) -> float:
    _check_fraction("loss", loss)
    return math.exp(-params.alpha * loss)


def effective_latency(link: LinkMetrics, processing_delay: float) -> float:
    return link.rtt + processing_delay


def selection_distribution(ctx: SelectionContext) -> list[float]:
    """
    Weights every candidate by the inverse of its effective latency and
    normalizes the weights into a probability vector. A lone candidate
    always gets probability 1, whatever its latency.
    """
    if not ctx.candidates:
        raise ValueError("at least one candidate interface is required")
    if len(ctx.candidates) == 1:
        return [1.0]

    latencies = np.array(
        [
            effective_latency(link, ctx.processing_delay)
            for link in ctx.candidates
        ],
        dtype=float,
    )
    if np.any(latencies <= 0):
        raise ValueError("effective latency must be strictly positive")

    weights = 1.0 / latencies
    return (weights / weights.sum()).tolist()


def select_interface(
    ctx: SelectionContext,
    mode: SelectionMode = SelectionMode.DETERMINISTIC,
    randomness: Optional[np.random.Generator] = None,
) -> int:
    """
    Picks a candidate index.

    Args:
        ctx: Candidate interfaces and processing delay
        mode: DETERMINISTIC returns the highest-probability candidate (lowest
            index on ties), STOCHASTIC samples from the distribution
        randomness: Seeded generator, required in STOCHASTIC mode
    """
    distribution = selection_distribution(ctx)

    if mode is SelectionMode.STOCHASTIC:
        if randomness is None:
            raise ValueError("stochastic selection needs a randomness source")
        return int(randomness.choice(len(distribution), p=distribution))

    # np.argmax returns the first maximum
    return int(np.argmax(distribution))


# Error correction


def fec_effective_loss(loss: float, params: CorrectionParams) -> float:
    """Loss rate after forward error correction with redundancy gamma."""
    _check_fraction("loss", loss)
    if params.gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {params.gamma}")
    return loss * (1 - 1 / (1 + params.gamma))


def combined_loss(l_eff: float, params: CorrectionParams) -> float:
    """
    Residual loss once NACK retransmissions recover beta * nack_rate of the
    packets. Clamped to [0, 1] since it is a probability.
    """
    _check_fraction("l_eff", l_eff)
    _check_fraction("nack_rate", params.nack_rate)
    return min(1.0, max(0.0, l_eff - params.beta * params.nack_rate))


def corrected_loss(loss: float, params: CorrectionParams) -> float:
    """FEC followed by NACK recovery in a single step."""
    return combined_loss(fec_effective_loss(loss, params), params)


# Buffering and GOP


def buffering_latency(gop_size: float, params: GopParams) -> float:
    """Fixed buffering delay plus the time to fill one GOP, in ms."""
    if gop_size < 0:
        raise ValueError("gop_size must be >= 0")
    return params.t_buffer + 1000.0 * gop_size / params.frame_rate


def optimal_gop(params: GopParams) -> int:
    """
    Largest whole GOP that fits the latency budget, clamped to
    [g_min, g_max].
    """
    interior = math.floor(
        (params.t_max - params.t_buffer) * params.frame_rate / 1000.0
    )
    return max(min(interior, params.g_max), params.g_min)

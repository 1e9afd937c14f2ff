import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import yaml

from Controller import ControllerThresholds
from Models import (
    CompressionParams,
    CorrectionParams,
    GopParams,
    LinkMetrics,
    ReliabilityParams,
    SelectionMode,
    VideoProfile,
)
from Scenario import CostModel, District, OffloadConfig, SocialProfile

log = logging.getLogger(__name__)

DEFAULT_SCENARIO_PATH = Path(__file__).with_name("dhaka_2025_scenario.yaml")


class Config:
    """
    Runtime defaults for the command line. Flags override them; only
    log_level can also come from STREAMSIM_LOG_LEVEL.
    """

    scenario_path = DEFAULT_SCENARIO_PATH
    log_level = "INFO"
    output_format = "table"
    jobs = 1


class ConfigError(Exception):
    """Base class for every problem with a scenario file."""


class ScenarioFileNotFoundError(ConfigError):
    pass


class ScenarioSyntaxError(ConfigError):
    pass


class ScenarioValidationError(ConfigError):
    """
    Carries every invariant violation found in a scenario, each prefixed by
    the dotted path of the offending field.
    """

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__(
            "invalid scenario:\n" + "\n".join(f"  {e}" for e in errors)
        )


@dataclass(frozen=True)
class InterfaceSpec:
    name: str
    base: LinkMetrics
    towers: int = 0


@dataclass(frozen=True)
class TrafficMix:
    video: float
    audio: float
    text: float

    def __post_init__(self):
        for name in ("video", "audio", "text"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {value}")
        total = self.video + self.audio + self.text
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {total}")


@dataclass(frozen=True)
class CongestionWindow:
    """
    Slots [start_slot, end_slot) during which the listed interfaces (all of
    them when interfaces is None) lose capacity and gain RTT and loss.
    """

    start_slot: int
    end_slot: int
    speed_drop: float
    rtt_spike_ms: float = 0.0
    loss_add: float = 0.0
    interfaces: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.start_slot < 0 or self.end_slot <= self.start_slot:
            raise ValueError(
                f"window [{self.start_slot}, {self.end_slot}) is empty or "
                f"negative"
            )
        if not 0.0 <= self.speed_drop <= 1.0:
            raise ValueError("speed_drop must be within [0, 1]")
        if self.rtt_spike_ms < 0:
            raise ValueError("rtt_spike_ms must be >= 0")
        if not 0.0 <= self.loss_add <= 1.0:
            raise ValueError("loss_add must be within [0, 1]")
        if self.interfaces is not None:
            indices = tuple(self.interfaces)
            if not all(
                isinstance(i, int) and not isinstance(i, bool) for i in indices
            ):
                raise ValueError(
                    f"interfaces must list interface indices, got {indices!r}"
                )
            object.__setattr__(self, "interfaces", indices)

    def covers(self, slot_index: int, interface_index: int) -> bool:
        return self.start_slot <= slot_index < self.end_slot and (
            self.interfaces is None or interface_index in self.interfaces
        )


@dataclass(frozen=True)
class NoiseParams:
    """
    jitter: half-width of the multiplicative RTT/capacity noise
    loss_jitter: half-width of the additive loss noise
    """

    jitter: float = 0.05
    loss_jitter: float = 0.002

    def __post_init__(self):
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must be within [0, 1)")
        if not 0.0 <= self.loss_jitter <= 1.0:
            raise ValueError("loss_jitter must be within [0, 1]")


@dataclass(frozen=True)
class RecordingConfig:
    enabled: bool = False
    path: Optional[str] = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    slots: int
    seed: int
    districts: tuple[District, ...]
    social: SocialProfile
    interfaces: tuple[InterfaceSpec, ...]
    traffic_mix: TrafficMix
    congestion_windows: tuple[CongestionWindow, ...]
    offload: OffloadConfig
    cost: CostModel
    video: VideoProfile
    compression: CompressionParams
    correction: CorrectionParams
    gop: GopParams
    thresholds: ControllerThresholds
    reliability: ReliabilityParams = ReliabilityParams()
    processing_delay: float = 5.0
    selection_mode: SelectionMode = SelectionMode.DETERMINISTIC
    noise: NoiseParams = NoiseParams()
    recording: RecordingConfig = RecordingConfig()
    metadata: dict = field(default_factory=dict)

    @property
    def frames_per_slot(self) -> int:
        return int(self.video.frame_rate)

    @property
    def base_links(self) -> list[LinkMetrics]:
        return [interface.base for interface in self.interfaces]


def _mapping(data: Any, path: str) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path} must be a mapping")
    return data


class _Builder:
    """
    Builds scenario sections while collecting every error with its field
    path instead of stopping at the first one.
    """

    def __init__(self):
        self.errors: list[str] = []

    def build(self, path: str, factory: Callable, data: Any):
        try:
            return factory(**_mapping(data, path))
        except (TypeError, ValueError) as e:
            self.errors.append(f"{path}: {e}")
            return None

    def check(self, condition: bool, path: str, message: str) -> None:
        if not condition:
            self.errors.append(f"{path}: {message}")

    def items(self, data: dict, path: str) -> list:
        """Entries of a list section; anything else is reported."""
        value = data.get(path) or []
        if not isinstance(value, list):
            self.check(False, path, f"must be a list, got {value!r}")
            return []
        return value


def _interface(name: str, base: dict, towers: int = 0) -> InterfaceSpec:
    return InterfaceSpec(
        name=name, base=LinkMetrics(**_mapping(base, "base")), towers=towers
    )


def _gop(video: Optional[VideoProfile]) -> Callable[..., GopParams]:
    def factory(**kwargs) -> GopParams:
        if "frame_rate" not in kwargs and video is not None:
            kwargs["frame_rate"] = video.frame_rate
        return GopParams(**kwargs)

    return factory


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """
    Validates a raw scenario mapping and builds the ScenarioConfig.
    """
    if not isinstance(data, dict):
        raise ScenarioValidationError(["<root>: scenario must be a mapping"])

    b = _Builder()
    slots = data.get("slots")
    seed = data.get("seed", 0)
    b.check(
        isinstance(slots, int) and not isinstance(slots, bool) and slots >= 1,
        "slots",
        f"must be an integer >= 1, got {slots!r}",
    )
    b.check(
        isinstance(seed, int) and 0 <= seed < 2**64,
        "seed",
        f"must be an unsigned 64-bit integer, got {seed!r}",
    )

    districts = tuple(
        b.build(f"districts[{i}]", District, d)
        for i, d in enumerate(b.items(data, "districts"))
    )
    interfaces = tuple(
        b.build(f"interfaces[{i}]", _interface, d)
        for i, d in enumerate(b.items(data, "interfaces"))
    )
    b.check(bool(interfaces), "interfaces", "at least one is required")

    windows = tuple(
        b.build(f"congestion_windows[{i}]", CongestionWindow, w)
        for i, w in enumerate(b.items(data, "congestion_windows"))
    )

    video = b.build("video", VideoProfile, data.get("video"))
    if video is not None:
        b.check(
            float(video.frame_rate).is_integer(),
            "video.frame_rate",
            "must be a whole number of frames per one-second slot",
        )

    sections = {
        "social": b.build("social", SocialProfile, data.get("social")),
        "traffic_mix": b.build(
            "traffic_mix", TrafficMix, data.get("traffic_mix")
        ),
        "offload": b.build("offload", OffloadConfig, data.get("offload")),
        "cost": b.build("cost", CostModel, data.get("cost")),
        "compression": b.build(
            "compression", CompressionParams, data.get("compression")
        ),
        "correction": b.build(
            "correction", CorrectionParams, data.get("correction")
        ),
        "gop": b.build("gop", _gop(video), data.get("gop")),
        "thresholds": b.build(
            "thresholds", ControllerThresholds, data.get("thresholds")
        ),
        "reliability": b.build(
            "reliability", ReliabilityParams, data.get("reliability")
        ),
        "noise": b.build("noise", NoiseParams, data.get("noise")),
        "recording": b.build(
            "recording", RecordingConfig, data.get("recording")
        ),
    }

    gop = sections["gop"]
    if gop is not None and video is not None:
        b.check(
            gop.frame_rate == video.frame_rate,
            "gop.frame_rate",
            "must match video.frame_rate",
        )

    processing_delay = data.get("processing_delay", 5.0)
    b.check(
        isinstance(processing_delay, (int, float)) and processing_delay >= 0,
        "processing_delay",
        "must be a number >= 0",
    )

    try:
        selection_mode = SelectionMode(
            data.get("selection_mode", "deterministic")
        )
    except ValueError:
        selection_mode = None
        b.check(
            False,
            "selection_mode",
            "must be 'deterministic' or 'stochastic'",
        )

    for i, window in enumerate(windows):
        if window is None:
            continue
        if isinstance(slots, int):
            b.check(
                window.end_slot <= slots,
                f"congestion_windows[{i}].end_slot",
                f"must lie within [0, {slots}]",
            )
        for index in window.interfaces or ():
            b.check(
                0 <= index < len(interfaces),
                f"congestion_windows[{i}].interfaces",
                f"unknown interface index {index}",
            )

    if b.errors:
        raise ScenarioValidationError(b.errors)

    return ScenarioConfig(
        name=str(data.get("name", "scenario")),
        slots=slots,
        seed=seed,
        districts=districts,
        interfaces=interfaces,
        congestion_windows=windows,
        video=video,
        processing_delay=float(processing_delay),
        selection_mode=selection_mode,
        metadata=dict(data.get("metadata") or {}),
        **sections,
    )


def apply_overrides(
    data: dict, seed: Optional[int] = None, slots: Optional[int] = None
) -> dict:
    """
    Returns a copy of a raw scenario with seed and slot overrides applied.
    Congestion windows are cut to a shortened horizon.
    """
    data = copy.deepcopy(data)
    if not isinstance(data, dict):
        return data
    if seed is not None:
        data["seed"] = seed
    if slots is not None:
        data["slots"] = slots
        windows = data.get("congestion_windows")
        if not isinstance(windows, list):
            return data
        kept = []
        for window in windows:
            if not isinstance(window, dict):
                kept.append(window)
                continue
            start = window.get("start_slot", 0)
            end = window.get("end_slot", 0)
            if isinstance(start, int) and start >= slots:
                log.warning(
                    f"Dropping congestion window [{start}, {end}) beyond "
                    f"{slots} slots"
                )
                continue
            if isinstance(end, int) and end > slots:
                log.warning(
                    f"Truncating congestion window [{start}, {end}) to "
                    f"{slots} slots"
                )
                window = {**window, "end_slot": slots}
            kept.append(window)
        data["congestion_windows"] = kept
    return data


def read_scenario_file(path) -> dict:
    path = Path(path)
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ScenarioFileNotFoundError(
            f"scenario file not found: {path}"
        ) from e
    except yaml.YAMLError as e:
        raise ScenarioSyntaxError(f"malformed scenario {path}: {e}") from e
    return data


def load_scenario(
    path=DEFAULT_SCENARIO_PATH,
    seed: Optional[int] = None,
    slots: Optional[int] = None,
) -> ScenarioConfig:
    """
    Reads, overrides and validates a scenario file.

    Args:
        path: YAML scenario file
        seed: Replaces the file's seed before validation
        slots: Replaces the file's slot count before validation
    """
    data = apply_overrides(read_scenario_file(path), seed=seed, slots=slots)
    config = scenario_from_dict(data)
    log.debug(f"Loaded scenario {config.name} from {path}")
    return config


def default_scenario(**overrides) -> ScenarioConfig:
    return load_scenario(DEFAULT_SCENARIO_PATH, **overrides)

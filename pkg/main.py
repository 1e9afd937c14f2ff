import argparse
import logging
import os
import shutil
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from dotenv import load_dotenv

from Config import Config, ConfigError, ScenarioConfig, load_scenario
from FrameRecorder import JournalIOError
from Models import (
    DEFAULT_ALPHA,
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
    fec_effective_loss,
    net_bitrate,
    optimal_gop,
    raw_bitrate,
    select_interface,
    selection_distribution,
)
from Report import (
    OutputFormat,
    OutputSpec,
    emit_report,
    format_cost,
    format_fraction,
    format_mbps,
)
from Scenario import (
    CostModel,
    District,
    OffloadConfig,
    SocialProfile,
    active_connections,
    baseline_cost,
    district_population,
    offload_ratio,
    offloaded_volume,
    persons_per_tower,
    reduced_cost,
)
from Simulator import SimulationError, run_batch

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOG_LEVEL_ENV = "STREAMSIM_LOG_LEVEL"


def setup_logging(level: str = Config.log_level) -> None:
    """
    Sends log records to stderr so reports written to stdout stay clean.
    """
    numeric_level = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    root = logging.getLogger()
    root.setLevel(numeric_level)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        logging.Formatter("[%(asctime)s][%(levelname)s] %(message)s")
    )
    root.handlers.clear()
    root.addHandler(handler)


@dataclass(frozen=True)
class CommandRequest:
    command: str
    scenario_paths: tuple[Path, ...] = (Config.scenario_path,)
    seed: Optional[int] = None
    slots: Optional[int] = None
    output: OutputSpec = OutputSpec()
    compare: bool = False
    jobs: int = Config.jobs
    formula: Optional[str] = None
    arguments: dict = field(default_factory=dict)
    target: Optional[Path] = None
    force: bool = False


# Single-formula evaluation


@dataclass(frozen=True)
class Argument:
    name: str
    type: Callable = float
    help: str = ""
    required: bool = True
    default: Any = None


@dataclass(frozen=True)
class Formula:
    help: str
    arguments: tuple[Argument, ...]
    compute: Callable[..., Any]
    render: Callable[[Any], str]


def _float_list(text: str) -> list[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {text!r}"
        )


def _candidates(rtts: list[float]) -> tuple[LinkMetrics, ...]:
    return tuple(LinkMetrics(rtt=rtt, loss=0.0, capacity=0.0) for rtt in rtts)


def _net_bitrate(raw_mbps, eta, overhead, retransmission_loss) -> float:
    params = CompressionParams(eta, overhead, retransmission_loss)
    return net_bitrate(effective_bitrate(raw_mbps * 1e6, params), params)


def _select_interface(rtts, processing_delay, seed) -> int:
    ctx = SelectionContext(_candidates(rtts), processing_delay)
    if seed is None:
        return select_interface(ctx)
    return select_interface(
        ctx, SelectionMode.STOCHASTIC, np.random.default_rng(seed)
    )


def _buffering_latency(gop_size, t_buffer, frame_rate) -> float:
    # Only t_buffer and frame_rate take part in the buffering delay.
    params = GopParams(t_buffer, t_buffer, frame_rate, g_min=1, g_max=1)
    return buffering_latency(gop_size, params)


def _ms(value: float) -> str:
    return f"{value:.2f} ms"


FORMULAS: dict[str, Formula] = {
    "raw-bitrate": Formula(
        "uncompressed bitrate of a video profile",
        (
            Argument("width", int),
            Argument("height", int),
            Argument("frame-rate"),
            Argument("color-depth", int, "bits per pixel"),
        ),
        lambda width, height, frame_rate, color_depth: raw_bitrate(
            VideoProfile(width, height, frame_rate, color_depth)
        ),
        format_mbps,
    ),
    "effective-bitrate": Formula(
        "bitrate after compression",
        (Argument("raw-mbps"), Argument("eta")),
        lambda raw_mbps, eta: effective_bitrate(
            raw_mbps * 1e6, CompressionParams(eta)
        ),
        format_mbps,
    ),
    "net-bitrate": Formula(
        "bitrate left after compression, overhead and retransmissions",
        (
            Argument("raw-mbps"),
            Argument("eta"),
            Argument("overhead", required=False, default=0.0),
            Argument("retransmission-loss", required=False, default=0.0),
        ),
        _net_bitrate,
        format_mbps,
    ),
    "connectivity": Formula(
        "probability of keeping the connection at a loss rate",
        (
            Argument("loss"),
            Argument("alpha", required=False, default=DEFAULT_ALPHA),
        ),
        lambda loss, alpha: connectivity_probability(
            loss, ReliabilityParams(alpha)
        ),
        format_fraction,
    ),
    "effective-latency": Formula(
        "RTT plus processing delay",
        (
            Argument("rtt", help="ms"),
            Argument("processing-delay", required=False, default=0.0),
        ),
        lambda rtt, processing_delay: effective_latency(
            LinkMetrics(rtt=rtt, loss=0.0, capacity=0.0), processing_delay
        ),
        _ms,
    ),
    "selection": Formula(
        "interface selection probabilities",
        (
            Argument("rtts", _float_list, "comma-separated RTTs in ms"),
            Argument("processing-delay", required=False, default=0.0),
        ),
        lambda rtts, processing_delay: selection_distribution(
            SelectionContext(_candidates(rtts), processing_delay)
        ),
        lambda ps: ", ".join(format_fraction(p) for p in ps),
    ),
    "select-interface": Formula(
        "index of the chosen interface, sampled when a seed is given",
        (
            Argument("rtts", _float_list, "comma-separated RTTs in ms"),
            Argument("processing-delay", required=False, default=0.0),
            Argument("seed", int, required=False),
        ),
        _select_interface,
        lambda index: f"interface {index}",
    ),
    "fec-loss": Formula(
        "loss left after forward error correction",
        (Argument("loss"), Argument("gamma")),
        lambda loss, gamma: fec_effective_loss(
            loss, CorrectionParams(gamma, 0.0, 0.0)
        ),
        format_fraction,
    ),
    "combined-loss": Formula(
        "loss left after NACK recovery of an FEC-corrected stream",
        (Argument("l-eff"), Argument("beta"), Argument("nack-rate")),
        lambda l_eff, beta, nack_rate: combined_loss(
            l_eff, CorrectionParams(0.0, beta, nack_rate)
        ),
        format_fraction,
    ),
    "corrected-loss": Formula(
        "FEC and NACK recovery in one step",
        (
            Argument("loss"),
            Argument("gamma"),
            Argument("beta"),
            Argument("nack-rate"),
        ),
        lambda loss, gamma, beta, nack_rate: corrected_loss(
            loss, CorrectionParams(gamma, beta, nack_rate)
        ),
        format_fraction,
    ),
    "buffering-latency": Formula(
        "buffering delay of a GOP",
        (
            Argument("gop-size"),
            Argument("t-buffer", help="ms"),
            Argument("frame-rate"),
        ),
        _buffering_latency,
        _ms,
    ),
    "optimal-gop": Formula(
        "largest GOP within the latency budget",
        (
            Argument("t-max", help="ms"),
            Argument("t-buffer", help="ms"),
            Argument("frame-rate"),
            Argument("g-min", int),
            Argument("g-max", int),
        ),
        lambda t_max, t_buffer, frame_rate, g_min, g_max: optimal_gop(
            GopParams(t_max, t_buffer, frame_rate, g_min, g_max)
        ),
        lambda gop: f"{gop} frames",
    ),
    "district-population": Formula(
        "population of a district",
        (Argument("density", help="persons/km2"), Argument("area")),
        lambda density, area: district_population(
            District("district", density, area)
        ),
        lambda population: f"{population:,.0f} persons",
    ),
    "persons-per-tower": Formula(
        "persons served by each tower",
        (Argument("population"), Argument("towers", int)),
        persons_per_tower,
        lambda persons: f"{persons:,.2f} persons/tower",
    ),
    "active-connections": Formula(
        "simultaneous social media connections",
        (
            Argument("population", int),
            Argument("penetration"),
            Argument("platforms", int),
        ),
        lambda population, penetration, platforms: active_connections(
            SocialProfile(population, penetration, platforms)
        ),
        lambda connections: f"{connections:,.0f} connections",
    ),
    "baseline-cost": Formula(
        "cost of the handled share of a volume",
        (
            Argument("volume-mb"),
            Argument("unit-cost"),
            Argument("handled-fraction"),
        ),
        lambda volume_mb, unit_cost, handled_fraction: baseline_cost(
            volume_mb, CostModel(unit_cost, handled_fraction, 0.0)
        ),
        format_cost,
    ),
    "reduced-cost": Formula(
        "cost after the offload reduction",
        (Argument("baseline"), Argument("reduction")),
        lambda baseline, reduction: reduced_cost(
            baseline, CostModel(0.0, 0.0, reduction)
        ),
        format_cost,
    ),
    "offloaded-volume": Formula(
        "MB drained by the access points in one slot",
        (
            Argument("ap-count", int),
            Argument("avg-offload-mb"),
            Argument("generated-mb"),
        ),
        lambda ap_count, avg_offload_mb, generated_mb: offloaded_volume(
            OffloadConfig(ap_count, avg_offload_mb, generated_mb)
        ),
        lambda mb: f"{mb:.2f} MB",
    ),
    "offload-ratio": Formula(
        "share of the generated volume that was offloaded",
        (Argument("offloaded-mb"), Argument("generated-mb")),
        lambda offloaded_mb, generated_mb: offload_ratio(
            offloaded_mb, generated_mb
        ),
        format_fraction,
    ),
}


def format_exact(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(repr(v) for v in value)
    return repr(value)


def evaluate(formula: str, arguments: dict) -> tuple[Any, str]:
    """
    Runs one named formula and returns its value and its rendering.
    """
    f = FORMULAS[formula]
    value = f.compute(**arguments)
    return value, f.render(value)


# Argument parsing


class CliArgumentParser(argparse.ArgumentParser):
    """Reports usage errors with EXIT_USAGE instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit int")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(
        prog="streamsim",
        description="Adaptive streaming and traffic offload simulator",
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help=f"defaults to ${LOG_LEVEL_ENV} or {Config.log_level}",
    )

    scenario_options = CliArgumentParser(add_help=False)
    scenario_options.add_argument(
        "--scenario",
        action="append",
        type=Path,
        help="scenario file, repeat to run a batch",
    )
    scenario_options.add_argument("--seed", type=_u64)
    scenario_options.add_argument("--slots", type=_positive_int)

    output_options = CliArgumentParser(add_help=False)
    output_options.add_argument(
        "--format",
        choices=[f.value for f in OutputFormat],
        default=Config.output_format,
    )
    output_options.add_argument("--output", type=Path, help="report file")
    output_options.add_argument(
        "--chart", type=Path, help="directory for chart images"
    )
    output_options.add_argument(
        "--jobs", type=_positive_int, default=Config.jobs
    )

    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser(
        "run",
        parents=[scenario_options, output_options],
        help="simulate a scenario with the adaptive controller",
    )
    run_parser.add_argument(
        "--compare",
        action="store_true",
        help="also run the static comparator",
    )
    commands.add_parser(
        "compare",
        parents=[scenario_options, output_options],
        help="adaptive controller against the static comparator",
    )
    commands.add_parser(
        "validate",
        parents=[scenario_options],
        help="parse and validate scenario files",
    )

    init_parser = commands.add_parser(
        "init-scenario", help="write the bundled default scenario"
    )
    init_parser.add_argument("target", type=Path)
    init_parser.add_argument(
        "--force", action="store_true", help="overwrite an existing file"
    )

    eval_parser = commands.add_parser("eval", help="evaluate one formula")
    formulas = eval_parser.add_subparsers(dest="formula", required=True)
    for name, formula in FORMULAS.items():
        formula_parser = formulas.add_parser(name, help=formula.help)
        for argument in formula.arguments:
            formula_parser.add_argument(
                f"--{argument.name}",
                type=argument.type,
                required=argument.required,
                default=argument.default,
                help=argument.help or None,
            )

    return parser


def request_from_args(args: argparse.Namespace) -> CommandRequest:
    if args.command == "eval":
        names = [a.name for a in FORMULAS[args.formula].arguments]
        arguments = {
            name.replace("-", "_"): getattr(args, name.replace("-", "_"))
            for name in names
        }
        return CommandRequest(
            command="eval", formula=args.formula, arguments=arguments
        )
    if args.command == "init-scenario":
        return CommandRequest(
            command="init-scenario", target=args.target, force=args.force
        )

    output = OutputSpec()
    if args.command != "validate":
        output = OutputSpec(
            format=OutputFormat(args.format),
            chart=args.chart,
            destination=args.output,
        )
    return CommandRequest(
        command=args.command,
        scenario_paths=tuple(args.scenario or [Config.scenario_path]),
        seed=args.seed,
        slots=args.slots,
        output=output,
        compare=getattr(args, "compare", False),
        jobs=getattr(args, "jobs", Config.jobs),
    )


# Command execution


def parse_config(
    path, seed: Optional[int] = None, slots: Optional[int] = None
) -> ScenarioConfig:
    return load_scenario(path, seed=seed, slots=slots)


def _output_for(
    spec: OutputSpec, config: ScenarioConfig, batch: bool
) -> OutputSpec:
    """
    Gives every scenario of a batch its own report file and chart folder.
    """
    if not batch:
        return spec
    destination = spec.destination
    if destination is not None:
        destination = destination.with_name(
            f"{destination.stem}_{config.name}{destination.suffix}"
        )
    chart = spec.chart / config.name if spec.chart is not None else None
    return replace(spec, destination=destination, chart=chart)


def _init_scenario(target: Path, force: bool) -> None:
    if target.exists() and not force:
        raise FileExistsError(
            f"{target} already exists, use --force to overwrite"
        )
    shutil.copyfile(Config.scenario_path, target)
    log.info(f"Wrote default scenario to {target}")


def _execute(req: CommandRequest) -> None:
    if req.command == "eval":
        value, rendered = evaluate(req.formula, req.arguments)
        print(format_exact(value))
        print(rendered)
        return

    if req.command == "init-scenario":
        _init_scenario(req.target, req.force)
        return

    configs = [
        parse_config(path, seed=req.seed, slots=req.slots)
        for path in req.scenario_paths
    ]

    if req.command == "validate":
        for path, config in zip(req.scenario_paths, configs):
            print(
                f"{path}: valid ({config.name}, {config.slots} slots, "
                f"seed {config.seed})"
            )
        return

    compare = req.compare or req.command == "compare"
    results = run_batch(configs, jobs=req.jobs, compare=compare)
    batch = len(configs) > 1
    for config, (journal, report) in zip(configs, results):
        written = emit_report(
            report, journal, _output_for(req.output, config, batch)
        )
        for path in written:
            log.info(f"Wrote {path}")


def run_command(req: CommandRequest) -> int:
    """
    Executes a request and maps failures onto the exit codes: 2 for
    scenario problems, 3 for errors while running or writing output.
    """
    try:
        _execute(req)
    except ConfigError as e:
        log.error(str(e))
        return EXIT_CONFIG
    except SimulationError as e:
        log.error(f"Simulation failed at slot {e.slot_index}: {e.cause}")
        return EXIT_RUNTIME
    except JournalIOError as e:
        log.error(str(e))
        return EXIT_RUNTIME
    except (OSError, ValueError) as e:
        log.error(str(e))
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(
        args.log_level or os.getenv(LOG_LEVEL_ENV) or Config.log_level
    )
    return run_command(request_from_args(args))


if __name__ == "__main__":
    sys.exit(main())

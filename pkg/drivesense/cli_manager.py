import dataclasses
import json
import logging
import types
import typing
from argparse import ArgumentParser, ArgumentTypeError, Namespace
from dataclasses import dataclass
from enum import Enum
from importlib.metadata import version
from pathlib import Path
from typing import Any

from drivesense.evaluation.config import EvalConfig
from drivesense.exceptions import (ValidationException,
                                   ValidationExceptionCode)
from drivesense.imbalance.smote import SmoteConfig
from drivesense.labelling.config import LabellerConfig
from drivesense.network.config import NetworkConfig
from drivesense.telemetry.synthetic import SimulationConfig
from drivesense.training.config import (LossSettings, OptimizerConfig,
                                        ScheduleConfig)
from drivesense.windowing.config import WindowConfig

DRIVESENSE_HEADER = "\n".join(
    (
        r"     _      _                             ",
        r"  __| |_ __(_)_   _____  ___ ___ _ __  ___  ___ ",
        r" / _` | '__| \ \ / / _ \/ __/ _ \ '_ \/ __|/ _ \ ",
        r"| (_| | |  | |\ V /  __/\__ \  __/ | | \__ \  __/",
        r" \__,_|_|  |_| \_/ \___||___/\___|_| |_|___/\___|",
    )
)
__version__ = version("drivesense")

MAX_SEED = 2**64 - 1
RESOLVED_CONFIG_FILE = "resolved.conf"
RUN_INFO_FILE = "run_info.json"


class Subcommand(Enum):
    simulate = "simulate"
    label = "label"
    featurize = "featurize"
    windows = "windows"
    train = "train"
    evaluate = "evaluate"
    sweep = "sweep"
    bench = "bench"


class SweepGrid(Enum):
    window_horizon = "window-horizon"
    gamma = "gamma"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    simulate: SimulationConfig = SimulationConfig()
    labeller: LabellerConfig = LabellerConfig()
    window: WindowConfig = WindowConfig()
    smote: SmoteConfig = SmoteConfig()
    model: NetworkConfig = NetworkConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    loss: LossSettings = LossSettings()
    evaluation: EvalConfig = EvalConfig()


# config file section -> (PipelineConfig attribute, keys not settable)
# seeds come from the master seed; shapes and alpha from the data
CONFIG_SECTIONS: dict[str, tuple[tuple[str, frozenset[str]], ...]] = {
    "simulate": (("simulate", frozenset()),),
    "labeller": (("labeller", frozenset()),),
    "window": (("window", frozenset()),),
    "smote": (("smote", frozenset({"seed"})),),
    "model": (
        ("model", frozenset({"input_rows", "input_channels", "classes"})),
    ),
    "train": (
        ("optimizer", frozenset({"shuffle_seed"})),
        ("schedule", frozenset()),
        ("loss", frozenset({"alpha"})),
    ),
    "eval": (("evaluation", frozenset()),),
}


@dataclass()
class InitData:
    subcommand: Subcommand
    config: PipelineConfig
    out: Path
    inputs: list[Path]
    ground_truth: Path | None
    checkpoint: Path | None
    grid: SweepGrid
    is_verbose: bool
    is_metrics: bool


def unsigned_int(value: str) -> int:
    ivalue = int(value)
    if ivalue < 0 or ivalue > MAX_SEED:
        raise ArgumentTypeError(
            "%s is an invalid unsigned 64 bit value" % value)
    return ivalue


def _config_error(message: str) -> ValidationException:
    return ValidationException(ValidationExceptionCode.ConfigError, message)


def _settable_fields(
    section: str,
) -> dict[str, tuple[str, dataclasses.Field[Any]]]:
    fields = {}
    defaults = PipelineConfig()
    for attribute, excluded in CONFIG_SECTIONS[section]:
        for field in dataclasses.fields(getattr(defaults, attribute)):
            if field.name not in excluded:
                fields[field.name] = (attribute, field)
    return fields


def _parse_scalar(raw: str, kind: Any, key: str) -> Any:
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered not in ("true", "false"):
                raise ValueError(raw)
            return lowered == "true"
        if kind in (int, float, str):
            return kind(raw)
    except ValueError:
        raise _config_error(
            f"{key}: cannot parse {raw!r} as {kind.__name__}")
    raise _config_error(f"{key}: unsupported value type {kind}")


def parse_value(raw: str, kind: Any, key: str) -> Any:
    """Converts one config value to the dataclass field's type."""
    if typing.get_origin(kind) is tuple:
        args = typing.get_args(kind)
        items = [item.strip() for item in raw.split(",") if item.strip()]
        if args[-1] is Ellipsis:
            return tuple(_parse_scalar(item, args[0], key) for item in items)
        if len(items) != len(args):
            raise _config_error(
                f"{key}: expected {len(args)} comma-separated values")
        return tuple(
            _parse_scalar(item, arg, key) for item, arg in zip(items, args))
    if isinstance(kind, types.UnionType):
        kind = typing.get_args(kind)[0]
    return _parse_scalar(raw.strip(), kind, key)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """``section.key = value`` lines; ``#`` starts a comment."""
    entries: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition("=")
        key = key.strip()
        if not separator or not key:
            raise _config_error(
                f"{source}:{number}: expected 'section.key = value'")
        if key in entries:
            raise _config_error(f"{source}:{number}: duplicate key {key}")
        entries[key] = value.strip()
    return entries


def build_config(
    entries: dict[str, str], seed: int | None = None
) -> PipelineConfig:
    overrides: dict[str, dict[str, Any]] = {
        attribute: {}
        for targets in CONFIG_SECTIONS.values()
        for attribute, _ in targets
    }
    master_seed = 0
    for key, raw in entries.items():
        if key == "seed":
            master_seed = parse_value(raw, int, key)
            continue
        section, _, name = key.partition(".")
        if section not in CONFIG_SECTIONS:
            raise _config_error(f"Unknown config key {key}")
        fields = _settable_fields(section)
        if name not in fields:
            raise _config_error(f"Unknown config key {key}")
        attribute, field = fields[name]
        overrides[attribute][name] = parse_value(raw, field.type, key)
    if seed is not None:
        master_seed = seed
    if not 0 <= master_seed <= MAX_SEED:
        raise _config_error(f"seed: {master_seed} is not an unsigned 64 bit")
    defaults = PipelineConfig()
    return PipelineConfig(
        seed=master_seed,
        **{
            attribute: dataclasses.replace(
                getattr(defaults, attribute), **values)
            for attribute, values in overrides.items()
        },
    )


def load_config(path: str | Path | None, seed: int | None) -> PipelineConfig:
    if path is None:
        return build_config({}, seed)
    if not Path(path).is_file():
        raise ValidationException(
            ValidationExceptionCode.MissingInput, f"No config file at {path}")
    return build_config(
        parse_config_text(Path(path).read_text(), str(path)), seed)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(item) for item in value)
    return repr(value) if isinstance(value, float) else str(value)


def render_config(cfg: PipelineConfig) -> str:
    """Every settable key with its resolved value, in section order."""
    lines = [f"seed = {cfg.seed}"]
    for section in CONFIG_SECTIONS:
        for name, (attribute, _) in _settable_fields(section).items():
            value = getattr(getattr(cfg, attribute), name)
            lines.append(f"{section}.{name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def write_run_artifacts(init_data: InitData) -> None:
    init_data.out.mkdir(parents=True, exist_ok=True)
    (init_data.out / RESOLVED_CONFIG_FILE).write_text(
        render_config(init_data.config))
    run_info = {
        "tool": "drivesense",
        "version": __version__,
        "subcommand": init_data.subcommand.value,
        "seed": init_data.config.seed,
        "inputs": [str(path) for path in init_data.inputs],
    }
    (init_data.out / RUN_INFO_FILE).write_text(
        json.dumps(run_info, indent=2))


def initialize_argument_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="drivesense",
        description="Aggressive driving event labelling and detection"
        " from vehicle telemetry",
    )
    parser.add_argument(
        "subcommand",
        type=str,
        help="One of: " + ", ".join(s.value for s in Subcommand),
    )

    parser.add_argument(
        "--config",
        type=str,
        help="Flat 'section.key = value' configuration file.",
        nargs="?",
    )

    parser.add_argument(
        "--seed",
        type=unsigned_int,
        help="Master seed, overrides the config file's seed.",
        nargs="?",
    )

    parser.add_argument(
        "--out",
        type=str,
        help="Output directory.",
        nargs="?",
        default="out",
    )

    parser.add_argument(
        "--input",
        type=str,
        help="Input files or directories.",
        nargs="+",
        default=[],
    )

    parser.add_argument(
        "--ground_truth",
        type=str,
        help="Directory of '<session_id>.csv' planted event files.",
        nargs="?",
    )

    parser.add_argument(
        "--checkpoint",
        type=str,
        help="Network checkpoint for evaluate and bench.",
        nargs="?",
    )

    parser.add_argument(
        "--grid",
        type=SweepGrid,
        help="Sweep grid: window-horizon or gamma.",
        nargs="?",
        default=SweepGrid.window_horizon,
    )

    parser.add_argument(
        "--verbose",
        help="show debug log",
        action="store_true",
    )

    parser.add_argument(
        "--metrics",
        help="write Prometheus metrics to metrics.prom in the output dir",
        action="store_true",
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )

    return parser


def init_logging(args: Namespace) -> None:
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        datefmt="%b %d %H:%M:%S",
    )


def get_init_data(args: Namespace) -> InitData:
    init_logging(args)

    try:
        subcommand = Subcommand(args.subcommand)
    except ValueError:
        raise ValidationException(
            ValidationExceptionCode.UnknownSubcommand,
            f"Unknown subcommand {args.subcommand}, expected one of"
            f" {', '.join(s.value for s in Subcommand)}",
        )

    init_data = InitData(
        subcommand=subcommand,
        config=load_config(args.config, args.seed),
        out=Path(args.out),
        inputs=[Path(path) for path in args.input],
        ground_truth=(
            Path(args.ground_truth) if args.ground_truth else None),
        checkpoint=Path(args.checkpoint) if args.checkpoint else None,
        grid=args.grid,
        is_verbose=args.verbose,
        is_metrics=args.metrics,
    )

    if args.verbose:
        print(DRIVESENSE_HEADER)
        print("version : " + __version__)

    logging.info(
        f"Starting drivesense {subcommand.value} with seed"
        f" {init_data.config.seed}")

    return init_data

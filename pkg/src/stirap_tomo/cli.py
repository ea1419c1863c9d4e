"""Command-line front end.

Subcommands:
- simulate: trajectory of one propagation as CSV
- measure: run the tomography protocol and write the report as JSON
- sweep: scan one parameter over a grid and tabulate numeric vs closed-form transfer

Exit codes are 0 on success, 2 for configuration errors and 3 for numerical
failures.
"""

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, TextIO

import numpy as np
from pydantic import ValidationError
from rich.logging import RichHandler

from stirap_tomo.adiabatic import cd_basis, pa_with_decay, predicted_pa
from stirap_tomo.config import RunConfig, load_config, log_level_from_env
from stirap_tomo.dynamics import propagate
from stirap_tomo.errors import ConfigError, StirapTomoError
from stirap_tomo.protocol import measure_block
from stirap_tomo.quantum_core import A, E, DensityMatrix
from stirap_tomo.state import DecayConfig, PulseConfig, SignalMode
from stirap_tomo.utils import console, default_config_path, get_timestamp_str, show_report

logger = logging.getLogger("stirap_tomo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SIGNAL_MODES: dict[str, SignalMode] = {
    "final": "final_population",
    "fluorescence": "integrated_fluorescence",
}
PULSE_PARAMETERS = ("omega_max", "delay_tau", "delta", "alpha", "beta", "half_width_T")
DECAY_PARAMETERS = ("gamma_a", "gamma_e")
SWEEP_PARAMETERS = PULSE_PARAMETERS + DECAY_PARAMETERS

SWEEP_COLUMNS = ["value", "final_pa", "predicted_pa", "ratio", "max_rho_ee", "final_c_population"]


def fmt(value: float) -> str:
    """Format a float with 17 significant digits."""
    return f"{value:.17g}"


def parse_grid(text: str) -> list[float]:
    """Parse ``a,b,c`` or the inclusive linspace ``start:stop:num``."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            count = int(num)
            if count < 1:
                raise ValueError("num must be at least 1")
            return [float(v) for v in np.linspace(float(start), float(stop), count)]
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid grid '{text}': {e}") from e
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


@contextmanager
def open_output(path: Optional[str]) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="") as handle:
        yield handle
    logger.info("wrote %s", target)


def write_table(handle: TextIO, command: str, header: list[str], rows: list[list[float]]) -> None:
    handle.write(f"# stirap-tomo {command} {get_timestamp_str()}\n")
    handle.write(",".join(header) + "\n")
    for row in rows:
        handle.write(",".join(fmt(v) for v in row) + "\n")

# ===== COMMANDS =====

def _run_config(args: argparse.Namespace) -> RunConfig:
    path = args.config or str(default_config_path())
    config = load_config(path)
    updates = {}
    if args.tol is not None:
        updates["integrator_tol"] = args.tol
    if args.signal_mode is not None:
        updates["signal_mode"] = SIGNAL_MODES[args.signal_mode]
    if args.calibration is not None:
        updates["calibration"] = args.calibration
    if updates:
        try:
            config = RunConfig.model_validate({**config.model_dump(), **updates})
        except ValidationError as e:
            first = e.errors()[0]
            raise ConfigError(first["msg"], field=".".join(map(str, first["loc"]))) from e
    return config


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _run_config(args)
    rho0 = config.initial_state()
    trajectory = propagate(rho0, config.pulse, config.decay, tol=config.integrator_tol)
    basis = cd_basis(config.pulse.alpha, config.pulse.beta)

    header = trajectory.csv_header()
    header = header[:-1] + ["rho_ee", "c_population", "d_population", header[-1]]
    extra = np.column_stack([
        trajectory.population(E),
        trajectory.projection(basis.c),
        trajectory.projection(basis.d),
    ])
    rows = [row[:-1] + list(map(float, more)) + [row[-1]] for row, more in zip(trajectory.to_csv_rows(), extra)]

    with open_output(args.out or config.output_path) as handle:
        write_table(handle, "simulate", header, rows)
    logger.info(
        "simulated %d steps: final rho_aa %.6g, final <C|rho|C> %.3e",
        len(trajectory), trajectory.population(A)[-1], trajectory.projection(basis.c)[-1],
    )
    return EXIT_OK


def cmd_measure(args: argparse.Namespace) -> int:
    config = _run_config(args)
    settings = config.settings()
    if args.signal_mode is not None:
        settings = [s.model_copy(update={"signal_mode": config.signal_mode}) for s in settings]
    report = measure_block(
        config.initial_state(),
        config.pulse,
        config.decay,
        settings,
        calibration=config.calibration,
        tol=config.integrator_tol,
        jobs=args.jobs,
        include_truth=True,
    )
    with open_output(args.out or config.output_path) as handle:
        handle.write(report.model_dump_json(indent=2) + "\n")
    show_report(report)
    return EXIT_OK


def sweep_point(
    rho0: DensityMatrix, pulse: PulseConfig, decay: DecayConfig, tol: float, value: float
) -> list[float]:
    """Return one sweep row for a single grid point."""
    trajectory = propagate(rho0, pulse, decay, tol=tol)
    final_pa = float(trajectory.population(A)[-1])
    prediction = pa_with_decay(predicted_pa(rho0, pulse.alpha, pulse.beta), pulse, decay.gamma_a)
    ratio = final_pa / prediction if prediction > 0.0 else math.nan
    c_state = cd_basis(pulse.alpha, pulse.beta).c
    return [
        value,
        final_pa,
        prediction,
        ratio,
        float(trajectory.population(E).max()),
        float(trajectory.projection(c_state)[-1]),
    ]


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _run_config(args)
    rho0 = config.initial_state()
    points = []
    try:
        for value in args.grid:
            if args.parameter in DECAY_PARAMETERS:
                points.append((config.pulse, config.decay.with_updates(**{args.parameter: value})))
            else:
                points.append((config.pulse.with_updates(**{args.parameter: value}), config.decay))
    except ValidationError as e:
        raise ConfigError(e.errors()[0]["msg"], field=args.parameter) from e

    tasks = [(rho0, pulse, decay, config.integrator_tol, value) for (pulse, decay), value in zip(points, args.grid)]
    logger.info("sweeping %s over %d points with %d jobs", args.parameter, len(tasks), args.jobs)
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as executor:
            rows = list(executor.map(sweep_point, *zip(*tasks)))
    else:
        rows = [sweep_point(*task) for task in tasks]

    header = [args.parameter] + SWEEP_COLUMNS[1:]
    with open_output(args.out or config.output_path) as handle:
        write_table(handle, f"sweep {args.parameter}", header, rows)
    return EXIT_OK

# ===== ENTRY POINT =====

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat .cfg or .json config (default: configs/reference.cfg)")
    common.add_argument("--out", metavar="PATH", help="output file ('-' for stdout)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel workers")
    common.add_argument("--tol", type=float, metavar="FLOAT", help="integrator tolerance")
    common.add_argument("--signal-mode", choices=sorted(SIGNAL_MODES), help="readout of the |a> signal")
    common.add_argument("--calibration", choices=["analytic", "simulated"], help="signal calibration")

    parser = argparse.ArgumentParser(
        prog="stirap-tomo",
        description="Simulate STIRAP-based measurement of a density-matrix block and reconstruct it.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    simulate = subparsers.add_parser("simulate", parents=[common], help="write a trajectory CSV")
    simulate.set_defaults(func=cmd_simulate)
    measure = subparsers.add_parser("measure", parents=[common], help="run the protocol and write a JSON report")
    measure.set_defaults(func=cmd_measure)
    sweep = subparsers.add_parser("sweep", parents=[common], help="scan one parameter")
    sweep.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    sweep.add_argument("--grid", required=True, type=parse_grid, help="a,b,c or start:stop:num")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def configure_logging() -> None:
    handler = RichHandler(console=console, show_path=False)
    logging.basicConfig(level=logging.WARNING, format="%(message)s", datefmt="[%X]", handlers=[handler])
    logging.getLogger().setLevel(log_level_from_env())


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error("config error: %s", e)
        return EXIT_CONFIG
    except StirapTomoError as e:
        logger.error("numerical failure: %s", e)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

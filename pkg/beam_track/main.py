import argparse
import logging
from pathlib import Path
import sys

from beam_track.checks import CheckContext, registry
from beam_track.config import CONFIG
from beam_track.errors import EXIT_OK, handle_fatal
from beam_track.harness import cmd_bound, cmd_run, cmd_verify
from beam_track.model import ScenarioConfig, load_scenario_file, with_overrides

LOGGER = logging.getLogger(__name__)


def _scenario_path(value: str) -> Path:
    """A file path, or the stem of a bundled scenario."""
    path = Path(value)
    if path.suffix or path.exists():
        return path
    return CONFIG.scenario_path(value)


def _controllers(value: str) -> list[str]:
    return [item.strip() for item in value.split(',') if item.strip()]


def _load(args: argparse.Namespace) -> ScenarioConfig:
    config = load_scenario_file(args.scenario)
    return with_overrides(
        config,
        seed=args.seed,
        runs=args.runs,
        dt=args.dt,
        controllers=args.controllers,
    )


def run_command(args: argparse.Namespace) -> None:
    cmd_run(
        _load(args), args.out, sigma_points=args.grid_sigma, time_steps=args.grid_time
    )


def bound_command(args: argparse.Namespace) -> None:
    cmd_bound(
        _load(args), args.out, sigma_points=args.grid_sigma, time_steps=args.grid_time
    )


def verify_command(args: argparse.Namespace) -> None:
    context = CheckContext(
        seed=CONFIG.verify_seed if args.seed is None else args.seed,
        trials=CONFIG.verify_trials,
        runs=CONFIG.verify_runs if args.runs is None else args.runs,
        steps=CONFIG.verify_steps,
        workers=CONFIG.workers,
    )
    cmd_verify(context, args.suite, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='beam-track',
        description='Cooperative beam tracking simulator and optimality checks.',
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument(
        '--scenario',
        type=_scenario_path,
        required=True,
        help='Scenario JSON file, or the name of a bundled scenario.',
    )
    scenario.add_argument('--dt', type=float, help='Override the time step.')
    scenario.add_argument(
        '--controllers', type=_controllers, help='Comma-separated controller kinds.'
    )

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument('--grid-sigma', type=int, help='σ points per grid axis.')
    grid.add_argument('--grid-time', type=int, help='Backward recursion steps.')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='Override the master seed.')
    common.add_argument('--runs', type=int, help='Override the number of runs.')
    common.add_argument(
        '--out', type=Path, default=CONFIG.output_dir, help='Output directory.'
    )

    run = subparsers.add_parser(
        'run',
        parents=[scenario, grid, common],
        help='Compare controllers against the bound.',
    )
    run.set_defaults(handler=run_command)

    bound = subparsers.add_parser(
        'bound', parents=[scenario, grid, common], help='Compute the bound only.'
    )
    bound.set_defaults(handler=bound_command)

    verify = subparsers.add_parser(
        'verify', parents=[common], help='Run the property suites.'
    )
    verify.add_argument(
        '--suite',
        action='append',
        choices=registry.suites(),
        help='Suite to run (repeatable; all suites by default).',
    )
    verify.set_defaults(handler=verify_command)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=getattr(logging, CONFIG.logging_level), stream=sys.stdout)

    args = build_parser().parse_args(argv)
    LOGGER.debug('Arguments: %s', vars(args))
    try:
        args.handler(args)
    except Exception as e:
        return handle_fatal(e)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())

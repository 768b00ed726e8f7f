# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Command line entry point of the meso-macro control experiments"""

import argparse
import logging
import sys

from mesomacro.demonstrators import grid_search_tune
from mesomacro.drl import CE_DIRECTIONS, STUDENT_WEIGHTED
from mesomacro.errors import MesomacroError
from mesomacro.experiment import (
    CONTROLLERS,
    SWEEP_SCALES,
    ExperimentSpec,
    ablation_suite,
    run_experiment,
    sensitivity_sweep,
)
from mesomacro.experiment_handlers import JobRunner
from mesomacro.export import export_tuning
from mesomacro.scenario import BUILTIN_SMALL, CONTROL_BOTH, CONTROL_MODES, DESK_VOLUME_DIVISOR

logging.basicConfig(format="%(asctime)s %(name)s %(levelname)-8s %(message)s")
root_logger = logging.getLogger()  # pylint: disable=invalid-name
logger = logging.getLogger("py-mesomacro")  # pylint: disable=invalid-name

DEFAULT_OUT = "results"


def _seeds(text):
    try:
        seeds = tuple(int(value) for value in text.split(",") if value.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated integers, got {!r}".format(text))
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _scales(text):
    try:
        return tuple(float(value) for value in text.split(",") if value.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated numbers, got {!r}".format(text))


def parse_args(argv=None):
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(description="Ramp metering and perimeter control on a meso-macro network")
    parser.add_argument("command", choices=["run", "tune", "ablate", "sweep"], help="what to run")
    parser.add_argument("--scenario", default=BUILTIN_SMALL, help="builtin-small or a scenario YAML file")
    parser.add_argument("--mode", default=CONTROL_BOTH, choices=CONTROL_MODES, help="which agents are controlled")
    parser.add_argument("--controller", default="proposed", choices=CONTROLLERS, help="control method")
    parser.add_argument("--seeds", type=_seeds, default=(0, 1, 2), help="comma separated seeds. default: 0,1,2")
    parser.add_argument("--epochs", type=int, default=None, help="training epochs, 30 at desk scale, 100 otherwise")
    parser.add_argument("--demand-scale", dest="demand_scale", type=float, default=1.0, help="demand volume factor")
    parser.add_argument(
        "--desk-scale",
        dest="desk_scale",
        type=float,
        default=DESK_VOLUME_DIVISOR,
        help=f"compress demand to one hour and divide its volume by this factor. default: {DESK_VOLUME_DIVISOR}",
    )
    parser.add_argument(
        "--full-scale",
        dest="full_scale",
        action="store_true",
        help="keep the full demand profile and the full-scale learner settings",
    )
    parser.add_argument("--horizon", type=float, default=None, help="demand horizon in seconds")
    parser.add_argument("--out", default=DEFAULT_OUT, help=f"output directory. default: {DEFAULT_OUT}")
    parser.add_argument(
        "--dump-dynamics", dest="dump_dynamics", action="store_true", help="write densities and accumulations"
    )
    parser.add_argument(
        "--paper-literal-nstep",
        "--flat-nstep",
        dest="flat_nstep",
        action="store_true",
        help="weight every reward of the n-step window by discount^n and bootstrap one decision ahead",
    )
    parser.add_argument(
        "--ce-direction",
        dest="ce_direction",
        default=STUDENT_WEIGHTED,
        choices=CE_DIRECTIONS,
        help="policy weighting the demonstration cross-entropy",
    )
    parser.add_argument("--demonstrators", default=None, help="demonstrators.json written by the tune command")
    parser.add_argument("--checkpoints", default=None, help="directory of seed_<n> checkpoint folders for sweep")
    parser.add_argument(
        "--scales", type=_scales, default=SWEEP_SCALES, help="comma separated demand scales for sweep"
    )
    parser.add_argument("--workers", type=int, default=None, help="worker processes, MESOMACRO_WORKERS by default")
    parser.add_argument("--verbose", action="store_true", help="log per-decision details")
    return parser.parse_args(argv)


def build_spec(options):
    return ExperimentSpec(
        scenario=options.scenario,
        control=options.mode,
        controller=options.controller,
        seeds=options.seeds,
        epochs=options.epochs,
        demand_scale=options.demand_scale,
        desk_scale=None if options.full_scale else options.desk_scale,
        horizon=options.horizon,
        out=options.out,
        dump_dynamics=options.dump_dynamics,
        flat_nstep=options.flat_nstep,
        ce_direction=options.ce_direction,
        full_scale=options.full_scale,
        demonstrators=options.demonstrators,
        checkpoints=options.checkpoints,
    )


def tune(spec, runner):
    spec.check_inputs()
    result = grid_search_tune(spec.load(), seed=spec.seeds[0], runner=runner)
    export_tuning(result, spec.out)
    return result


def run_command(options):
    """Dispatch one subcommand"""
    spec = build_spec(options)
    runner = JobRunner(options.workers)
    if options.command == "run":
        rows = run_experiment(spec, runner)
        logger.info("Finished %d runs", len(rows))
    elif options.command == "tune":
        tune(spec, runner)
    elif options.command == "ablate":
        rows = ablation_suite(spec, runner)
        logger.info("Finished %d ablation runs", len(rows))
    else:
        _, gaps = sensitivity_sweep(spec, options.scales, runner)
        for gap in gaps:
            logger.info("Demand scale %.2f: TTT gap %s", gap["scale"], gap["gap"])


def main(argv=None):
    """Main function"""
    options = parse_args(argv)
    root_logger.setLevel(level=logging.DEBUG if options.verbose else logging.INFO)
    logger.info("Parsed arguments: %s", options)

    try:
        run_command(options)
    except (MesomacroError, IOError) as err:
        logger.error("%s", err)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Experiment harness: method comparison, ablations and demand sensitivity sweeps"""

from dataclasses import dataclass, replace
import logging
import os
from typing import Optional, Tuple

from mesomacro.demand import sample_demand
from mesomacro.demonstrators import DemonstratorController, default_demonstrators, grid_search_tune
from mesomacro.drl import STUDENT_WEIGHTED, Hyperparams
from mesomacro.drl_trainer import (
    DQN,
    NO_DEMONSTRATOR,
    NO_DEMONSTRATOR_NO_NSTEPS,
    NO_NSTEPS,
    PROPOSED,
    DrlController,
    train,
)
from mesomacro.engine import NoControl, Simulator, baseline_constant, run_episode
from mesomacro.errors import ConfigurationError
from mesomacro.experiment_handlers import JobRunner
from mesomacro.export import (
    export_dynamics,
    export_episode,
    export_results,
    export_table,
    export_training_log,
    export_tuning,
    load_demonstrators,
)
from mesomacro.metrics import DynamicsRecorder, finalize_metrics
from mesomacro.scenario import (
    BUILTIN_FILES,
    BUILTIN_SMALL,
    CONTROL_BOTH,
    CONTROL_MODES,
    CONTROL_NONE,
    DEMAND_SCALE_BOUNDS,
    load_scenario,
)

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

DEMONSTRATOR = "demonstrator"
NO_CONTROL_MODEL = "no-control"
CONTROLLER_MODES = {
    PROPOSED: PROPOSED,
    NO_NSTEPS: NO_NSTEPS,
    NO_DEMONSTRATOR: NO_DEMONSTRATOR,
    NO_DEMONSTRATOR_NO_NSTEPS: NO_DEMONSTRATOR_NO_NSTEPS,
    "drqn": NO_DEMONSTRATOR_NO_NSTEPS,
    DQN: DQN,
}
CONTROLLERS = (DEMONSTRATOR,) + tuple(CONTROLLER_MODES)
ABLATION_MODES = (PROPOSED, NO_NSTEPS, NO_DEMONSTRATOR, NO_DEMONSTRATOR_NO_NSTEPS)
SWEEP_SCALES = (0.6, 0.8, 1.0, 1.1, 1.2, 1.5)
SWEEP_COLUMNS = ["scale", "control", "model", "reward", "TTT", "delay", "speed", "seed"]
GAP_COLUMNS = ["scale", "TTT_no_control", "TTT_control", "gap"]


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: scenario, controlled agents, controller and seeds

    ``demonstrators`` points to a demonstrators.json written by tuning; without
    it the demonstrator controller is grid-searched per seed and the learners
    are guided by demonstrators at critical thresholds. ``checkpoints`` is the
    directory holding ``seed_<n>`` checkpoint folders, ``<out>/checkpoints/<model>``
    when None.
    """

    scenario: str = BUILTIN_SMALL
    control: str = CONTROL_BOTH
    controller: str = PROPOSED
    seeds: Tuple[int, ...] = (0, 1, 2)
    epochs: Optional[int] = None
    demand_scale: float = 1.0
    desk_scale: Optional[float] = None
    horizon: Optional[float] = None
    out: Optional[str] = None
    dump_dynamics: bool = False
    flat_nstep: bool = False
    ce_direction: str = STUDENT_WEIGHTED
    full_scale: bool = False
    demonstrators: Optional[str] = None
    checkpoints: Optional[str] = None

    def __post_init__(self):
        low, high = DEMAND_SCALE_BOUNDS
        if not low <= self.demand_scale <= high:
            raise ConfigurationError("demand_scale", "must lie in [{}, {}]".format(low, high))
        if not self.seeds:
            raise ConfigurationError("seeds", "at least one seed is required")
        if self.control not in CONTROL_MODES:
            raise ConfigurationError("control", "expected one of {}".format(", ".join(CONTROL_MODES)))
        if self.controller not in CONTROLLERS:
            raise ConfigurationError("controller", "expected one of {}".format(", ".join(CONTROLLERS)))
        if self.epochs is not None and self.epochs < 0:
            raise ConfigurationError("epochs", "must not be negative")

    @property
    def model(self):
        return NO_CONTROL_MODEL if self.control == CONTROL_NONE else self.controller

    def hyperparams(self):
        hyperparams = Hyperparams() if self.full_scale else Hyperparams.desk()
        overrides = {"flat_nstep": self.flat_nstep, "ce_direction": self.ce_direction}
        if self.epochs is not None:
            overrides["epochs"] = self.epochs
        return replace(hyperparams, **overrides)

    def load(self, demand_scale=None):
        """The scenario with its agents restricted to the controlled ones"""
        scenario = load_scenario(
            self.scenario,
            demand_scale=self.demand_scale if demand_scale is None else demand_scale,
            desk_scale=self.desk_scale,
            horizon=self.horizon,
        )
        return scenario.with_control(self.control)

    def checkpoint_dir(self, seed):
        root = self.checkpoints
        if root is None:
            root = os.path.join(self.out or ".", "checkpoints", self.model)
        return os.path.join(root, "seed_{}".format(seed))

    def check_inputs(self):
        """Fail before any long computation on missing input files"""
        if self.scenario not in BUILTIN_FILES and not os.path.isfile(self.scenario):
            raise IOError("Scenario file {} does not exist".format(self.scenario))
        if self.demonstrators is not None and not os.path.isfile(self.demonstrators):
            raise IOError("Demonstrator file {} does not exist".format(self.demonstrators))


def result_row(control, model, metrics, seed):
    row = {"control": control, "model": model, "seed": seed}
    row.update(metrics.as_row())
    return row


def evaluate(scenario, controller, seed, baseline, recorder=None):
    """One drained evaluation episode on the demand of ``seed``

    :returns: metrics and the episode log
    :rtype: tuple
    """
    simulator = Simulator(scenario, sample_demand(scenario.demand, seed), baseline)
    log = run_episode(simulator, controller, recorder=recorder)
    return finalize_metrics(log), log


def _demonstrators(spec, scenario, seed):
    if spec.demonstrators is not None:
        params = default_demonstrators(scenario.network)
        loaded = load_demonstrators(spec.demonstrators)
        params.update((agent, loaded[agent]) for agent in params if agent in loaded)
        return params
    if spec.controller == DEMONSTRATOR:
        tuning = grid_search_tune(scenario, seed=seed, runner=JobRunner(workers=1))
        if spec.out:
            export_tuning(tuning, os.path.join(spec.out, "tuning", "seed_{}".format(seed)))
        return tuning.best
    return default_demonstrators(scenario.network)


def run_seed(spec, seed):
    """Tune or train for one seed, then evaluate greedily

    :returns: the result row of the seed
    :rtype: dict
    """
    scenario = spec.load()
    baseline = baseline_constant(scenario, seed)
    if spec.control == CONTROL_NONE:
        controller = NoControl()
    else:
        demonstrators = _demonstrators(spec, scenario, seed)
        if spec.controller == DEMONSTRATOR:
            controller = DemonstratorController(demonstrators)
        else:
            result = train(
                scenario,
                spec.hyperparams(),
                CONTROLLER_MODES[spec.controller],
                seed,
                demonstrators=demonstrators,
                baseline=baseline,
            )
            controller = result.controller()
            if spec.out:
                result.save(spec.checkpoint_dir(seed))
                path = os.path.join(spec.out, "training_{}_seed_{}.csv".format(spec.model, seed))
                export_training_log(result.records, path)

    recorder = DynamicsRecorder() if spec.dump_dynamics else None
    metrics, log = evaluate(scenario, controller, seed, baseline, recorder)
    if spec.out and spec.dump_dynamics:
        prefix = "{}_seed_{}_".format(spec.model, seed)
        directory = os.path.join(spec.out, "dynamics")
        export_episode(log, directory, prefix)
        export_dynamics(recorder, directory, prefix)
    logger.info("Seed %d %s/%s: %s", seed, spec.control, spec.model, metrics)
    return result_row(spec.control, spec.model, metrics, seed)


def run_experiment(spec, runner=None):
    """Run every seed of an experiment as an independent job

    :param ExperimentSpec spec: the experiment
    :param JobRunner runner: the job runner, worker count from MESOMACRO_WORKERS when None
    :returns: one result row per seed, in seed order
    :rtype: list
    :raises IOError: if an input file is missing
    """
    spec.check_inputs()
    spec.load()
    results = (runner or JobRunner()).run([(seed, run_seed, (spec, seed)) for seed in spec.seeds])
    rows = [row for _, row in results]
    if spec.out:
        export_results(rows, spec.out)
    return rows


def ablation_suite(spec, runner=None):
    """Train and evaluate the four ablation configurations on shared seeds

    :rtype: list
    :raises ConfigurationError: unless ramps and perimeters are both controlled
    """
    if spec.control != CONTROL_BOTH:
        raise ConfigurationError("control", "the ablation needs coordinated control of ramps and perimeters")
    spec.check_inputs()
    spec.load()
    jobs = [
        ((index, seed), run_seed, (replace(spec, controller=mode), seed))
        for index, mode in enumerate(ABLATION_MODES)
        for seed in spec.seeds
    ]
    rows = [row for _, row in (runner or JobRunner()).run(jobs)]
    if spec.out:
        export_results(rows, os.path.join(spec.out, "ablation"))
    return rows


def _sweep_controller(spec, scenario, seed):
    if spec.controller == DEMONSTRATOR:
        return DemonstratorController(_demonstrators(spec, scenario, seed))
    return DrlController.from_checkpoints(spec.checkpoint_dir(seed), Simulator(scenario))


def sweep_point(spec, scale, seed):
    """Controlled and uncontrolled rows of one demand scale and seed"""
    scenario = spec.load(demand_scale=scale)
    baseline = baseline_constant(scenario, seed)
    controlled, _ = evaluate(scenario, _sweep_controller(spec, scenario, seed), seed, baseline)
    uncontrolled, _ = evaluate(scenario, NoControl(), seed, baseline)
    rows = []
    for model, metrics in ((spec.controller, controlled), (NO_CONTROL_MODEL, uncontrolled)):
        row = result_row(spec.control, model, metrics, seed)
        row["scale"] = scale
        rows.append(row)
    return rows


def _mean(values):
    values = [value for value in values if value is not None]
    return sum(values) / len(values) if values else None


def sweep_gaps(rows):
    """Mean TTT of uncontrolled minus controlled episodes per demand scale"""
    gaps = []
    for scale in sorted({row["scale"] for row in rows}):
        uncontrolled = _mean(row["TTT"] for row in rows if row["scale"] == scale and row["model"] == NO_CONTROL_MODEL)
        controlled = _mean(row["TTT"] for row in rows if row["scale"] == scale and row["model"] != NO_CONTROL_MODEL)
        gap = None if uncontrolled is None or controlled is None else uncontrolled - controlled
        gaps.append({"scale": scale, "TTT_no_control": uncontrolled, "TTT_control": controlled, "gap": gap})
    return gaps


def sensitivity_sweep(spec, scales=SWEEP_SCALES, runner=None):
    """Evaluate trained controllers against no control at several demand scales, without retraining

    DRL controllers are read from the checkpoints of each seed; the demonstrator
    controller needs a demonstrators.json.

    :returns: per-point rows and per-scale TTT gaps
    :rtype: tuple
    :raises IOError: if a checkpoint or the demonstrator file is missing
    """
    if spec.control == CONTROL_NONE:
        raise ConfigurationError("control", "a sweep compares a controller against no control")
    spec.check_inputs()
    if spec.controller == DEMONSTRATOR:
        if spec.demonstrators is None:
            raise IOError("A demonstrator sweep needs the demonstrators.json written by tuning")
    else:
        for seed in spec.seeds:
            if not os.path.isdir(spec.checkpoint_dir(seed)):
                raise IOError("Missing checkpoint directory {}".format(spec.checkpoint_dir(seed)))
    for scale in scales:
        low, high = DEMAND_SCALE_BOUNDS
        if not low <= scale <= high:
            raise ConfigurationError("scales", "{} is outside [{}, {}]".format(scale, low, high))

    jobs = [((scale, seed), sweep_point, (spec, scale, seed)) for scale in scales for seed in spec.seeds]
    rows = [row for _, point in (runner or JobRunner()).run(jobs) for row in point]
    gaps = sweep_gaps(rows)
    if spec.out:
        export_table(rows, SWEEP_COLUMNS, os.path.join(spec.out, "sweep.csv"))
        export_table(gaps, GAP_COLUMNS, os.path.join(spec.out, "sweep_gaps.csv"))
    return rows, gaps

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""ALINEA and Gating demonstrators and their grid search"""

from dataclasses import asdict, dataclass
import logging

import numpy as np

from mesomacro.demand import sample_demand
from mesomacro.engine import DECREASE, HOLD, INCREASE, NUM_ACTIONS, Controller, Simulator, run_episode
from mesomacro.experiment_handlers import JobRunner
from mesomacro.metrics import finalize_metrics

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

DEFAULT_SMOOTHING = 0.05
ALINEA_THRESHOLD_FACTORS = (0.6, 0.8, 1.0)
ALINEA_GAINS = (0.01,)
GATING_THRESHOLD_FACTORS = (0.6, 0.8, 1.0)
GATING_PROPORTIONAL_GAINS = (0.0, 0.1)
GATING_INTEGRAL_GAINS = (0.05,)
TUNING_COLUMNS = ["agent", "kind", "kp", "ki", "threshold", "TTT"]


@dataclass(frozen=True)
class AlineaParams:
    """ALINEA gain KI (per vehicle) and merge cell threshold (vehicles)"""

    ki: float
    threshold: float
    kind = "alinea"

    def __post_init__(self):
        if self.ki <= 0 or self.threshold <= 0:
            raise ValueError("ALINEA needs ki > 0 and threshold > 0")


@dataclass(frozen=True)
class GatingParams:
    """Gating gains KP, KI (per vehicle) and accumulation threshold (vehicles)"""

    kp: float
    ki: float
    threshold: float
    kind = "gating"

    def __post_init__(self):
        if self.kp < 0 or self.ki <= 0 or self.threshold <= 0:
            raise ValueError("Gating needs kp >= 0, ki > 0 and threshold > 0")


def params_to_dict(params):
    return dict(asdict(params), kind=params.kind)


def params_from_dict(data):
    values = dict(data)
    kind = values.pop("kind")
    if kind == AlineaParams.kind:
        return AlineaParams(**values)
    if kind == GatingParams.kind:
        return GatingParams(**values)
    raise ValueError("Unknown demonstrator kind {!r}".format(kind))


def alinea_step(params, count):
    """Continuous ALINEA update ki * (threshold - count) of a ramp meter rate"""
    return params.ki * (params.threshold - count)


def gating_step(params, accumulation, next_accumulation):
    """Continuous Gating update -kp * (next - current) + ki * (threshold - current) of a perimeter rate"""
    return -params.kp * (next_accumulation - accumulation) + params.ki * (params.threshold - accumulation)


def quantize_control(update):
    """Map a continuous rate update to increase, hold or decrease by its sign"""
    if update > 0:
        return INCREASE
    if update < 0:
        return DECREASE
    return HOLD


def teacher_policy(action, smoothing=DEFAULT_SMOOTHING):
    """Smoothed demonstrator distribution over the actions

    :param int action: the demonstrator's action index
    :param float smoothing: the probability left on every other action
    :returns: 1 - 2 * smoothing on ``action`` and ``smoothing`` elsewhere
    :rtype: numpy.ndarray
    :raises ValueError: unless 0 < smoothing < 1/3
    """
    if not 0 < smoothing < 1.0 / NUM_ACTIONS:
        raise ValueError("Smoothing must lie in (0, 1/3), got {}".format(smoothing))
    policy = np.full(NUM_ACTIONS, smoothing)
    policy[action] = 1.0 - (NUM_ACTIONS - 1) * smoothing
    return policy


class DemonstratorController(Controller):
    """Drives agents with ALINEA (ramps) and Gating (perimeters)

    Every agent in ``params`` gets a demonstrator action on each decision, which
    ``last_actions`` keeps; only the ``controlled`` agents are actually actuated.
    """

    def __init__(self, params, controlled=None):
        self.params = dict(params)
        self.controlled = set(self.params) if controlled is None else set(controlled)
        unknown = sorted(self.controlled - set(self.params))
        if unknown:
            raise ValueError("No demonstrator parameters for {}".format(", ".join(unknown)))
        self.last_actions = {}
        self._previous = {}

    def reset(self, simulator):
        self.last_actions = {}
        self._previous = {}

    def decide(self, simulator):
        """Demonstrator actions of all agents for the current state"""
        actions = {}
        for agent, params in sorted(self.params.items()):
            if isinstance(params, AlineaParams):
                ramp = simulator.roads[agent].road
                count = simulator.roads[ramp.attach_road].counts[ramp.attach_cell]
                update = alinea_step(params, count)
            else:
                current = simulator.regions[agent].accumulation
                update = gating_step(params, self._previous.get(agent, current), current)
                self._previous[agent] = current
            actions[agent] = quantize_control(update)
        self.last_actions = actions
        return actions

    def act(self, simulator):
        return {agent: action for agent, action in self.decide(simulator).items() if agent in self.controlled}


def critical_cell_count(network, ramp_id):
    """Vehicles in a mainline cell at capacity: one interval of q_max at free flow"""
    mainline = network.road(network.road(ramp_id).attach_road)
    return mainline.q_max


def default_demonstrators(network):
    """Demonstrators at critical thresholds for every declared agent"""
    params = {}
    for ramp_id in network.ramp_agents:
        params[ramp_id] = AlineaParams(ki=ALINEA_GAINS[0], threshold=critical_cell_count(network, ramp_id))
    for region_id in network.perimeter_agents:
        region = network.region(region_id)
        params[region_id] = GatingParams(
            kp=GATING_PROPORTIONAL_GAINS[-1],
            ki=GATING_INTEGRAL_GAINS[0],
            threshold=region.mfd.critical(region.total_length),
        )
    return params


def default_grids(network):
    """Parameter grids around the critical thresholds, per agent"""
    grids = {}
    for ramp_id in network.ramp_agents:
        critical = critical_cell_count(network, ramp_id)
        grids[ramp_id] = [
            AlineaParams(ki=gain, threshold=factor * critical)
            for factor in ALINEA_THRESHOLD_FACTORS
            for gain in ALINEA_GAINS
        ]
    for region_id in network.perimeter_agents:
        region = network.region(region_id)
        critical = region.mfd.critical(region.total_length)
        grids[region_id] = [
            GatingParams(kp=kp, ki=ki, threshold=factor * critical)
            for factor in GATING_THRESHOLD_FACTORS
            for kp in GATING_PROPORTIONAL_GAINS
            for ki in GATING_INTEGRAL_GAINS
        ]
    return grids


def evaluate_demonstrator(scenario, agent, params, seed):
    """TTT of an evaluation episode with only ``agent`` controlled, inf when undefined"""
    simulator = Simulator(scenario, sample_demand(scenario.demand, seed))
    metrics = finalize_metrics(run_episode(simulator, DemonstratorController({agent: params})))
    ttt = metrics.ttt if metrics.defined else float("inf")
    logger.info("Grid point %s %s: TTT %.2f s", agent, params, ttt)
    return ttt


@dataclass
class TuningResult:
    """Best parameters per agent and the full grid table"""

    best: dict
    table: list


def grid_search_tune(scenario, grids=None, seed=0, runner=None):
    """Tune every agent's demonstrator independently, the others uncontrolled

    :param Scenario scenario: the scenario
    :param dict grids: agent id -> list of parameter sets, the default grids when None
    :param int seed: demand seed of the evaluation episodes
    :param JobRunner runner: job runner for the grid points
    :returns: argmin-TTT parameters per agent (first found on ties) and the table
    :rtype: TuningResult
    :raises ValueError: on an empty grid
    """
    grids = default_grids(scenario.network) if grids is None else grids
    if not grids:
        raise ValueError("No agent to tune")
    for agent, grid in grids.items():
        if not grid:
            raise ValueError("Empty parameter grid for agent '{}'".format(agent))

    jobs = [
        ((agent, index), evaluate_demonstrator, (scenario, agent, params, seed))
        for agent in sorted(grids)
        for index, params in enumerate(grids[agent])
    ]
    results = (runner or JobRunner()).run(jobs)

    best, best_ttt, table = {}, {}, []
    for (agent, index), ttt in results:
        params = grids[agent][index]
        row = {"agent": agent, "kind": params.kind, "kp": getattr(params, "kp", None), "ki": params.ki}
        row.update(threshold=params.threshold, TTT=ttt)
        table.append(row)
        if agent not in best or ttt < best_ttt[agent]:
            best[agent], best_ttt[agent] = params, ttt

    for agent in sorted(best):
        logger.info("Best demonstrator for %s: %s (TTT %.2f s)", agent, best[agent], best_ttt[agent])
    return TuningResult(best=best, table=table)

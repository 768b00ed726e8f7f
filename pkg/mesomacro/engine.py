# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Simulation loop coupling freeway cells and bathtub regions"""

from abc import ABC, abstractmethod
from collections import namedtuple
import logging

import numpy as np

from mesomacro.actm import RoadDynamics, RoadRoute, allocate_road_boundary_flows, check_merge_parameters
from mesomacro.bathtub import RegionDynamics, allocate_region_boundary_flows
from mesomacro.core.network import MAINLINE, OFF_RAMP, ON_RAMP
from mesomacro.demand import sample_demand
from mesomacro.errors import ConfigurationError
from mesomacro.helpers import ConservationChecker, DrainCondition, env_flag
from mesomacro.metrics import EpisodeLog
from mesomacro.planning import TripCohort

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

AUDIT_ENV = "MESOMACRO_AUDIT"

# action indices
INCREASE = 0
HOLD = 1
DECREASE = 2
NUM_ACTIONS = 3

RAMP_OBSERVATION_DIM = 15

StepResult = namedtuple("StepResult", ["t", "completions", "reward"])


def step_reward(completions, baseline):
    """Shared reward of one interval: completions minus the baseline constant"""
    return completions - baseline


def action_delta(action, rate_step):
    if action == INCREASE:
        return rate_step
    if action == HOLD:
        return 0.0
    if action == DECREASE:
        return -rate_step
    raise ValueError("Unknown action {!r}".format(action))


def _road_routes(road_id, routes):
    road_routes = []
    for route in routes:
        for index, leg in enumerate(route.legs):
            if leg.vertex == road_id:
                road_routes.append(
                    RoadRoute(
                        route=route.index,
                        entry_cell=leg.entry_cell,
                        exit_cell=leg.exit_cell,
                        exits_at_sink=leg.exits_at_sink,
                        next_vertex=route.next_vertex(index),
                    )
                )
    return road_routes


class Simulator(object):
    """Meso-macro simulator of one scenario under one realized demand table

    :param Scenario scenario: network, demand profile and settings
    :param numpy.ndarray demand: realized demand (intervals, OD pairs), profile means when None
    :param float baseline: reward baseline
    :param bool audit: run the flow and conservation audits every interval, from MESOMACRO_AUDIT when None
    """

    def __init__(self, scenario, demand=None, baseline=0.0, audit=None):
        self.scenario = scenario
        self.network = scenario.network
        self.adjacency = scenario.adjacency
        self.settings = scenario.settings
        self.routes = scenario.routes
        self.baseline = baseline
        self.audit = env_flag(AUDIT_ENV) if audit is None else audit
        self.time_step = self.network.time_step
        self.horizon = scenario.horizon
        self.agent_ids = self.network.agent_ids
        self.num_routes = len(self.routes)

        if demand is None:
            demand = scenario.demand.mean_rates()
        demand = np.asarray(demand, dtype=float)
        variants = self.settings.route_variants
        od_of_route = np.array([route.od_index for route in self.routes], dtype=int)
        self._route_demand = demand[:, od_of_route] / variants if self.num_routes else np.zeros((len(demand), 0))

        self.roads = {}
        for road in self.network.cell_roads:
            self.roads[road.road_id] = RoadDynamics(
                road, _road_routes(road.road_id, self.routes), self.num_routes, self.settings.gamma, self.settings.zeta
            )
        for road in self.network.cell_roads:
            if road.kind == ON_RAMP:
                check_merge_parameters(self.network.road(road.attach_road), self.settings.gamma, self.settings.zeta)
                self.roads[road.attach_road].attach_onramp(road.attach_cell, road.road_id)
            elif road.kind == OFF_RAMP:
                self.roads[road.attach_road].attach_offramp(road.attach_cell, road.road_id)

        self.regions = {}
        for region in self.network.bathtub_regions:
            self.regions[region.region_id] = self._build_region(region)

        self._origin_masks = {}
        for route in self.routes:
            mask = self._origin_masks.setdefault(route.origin, np.zeros(self.num_routes))
            mask[route.index] = 1.0
        self.free_flow_times = np.array([route.free_flow_time(self.network) for route in self.routes])
        self.reset()

    def _build_region(self, region):
        leg_distance = np.full(self.num_routes, np.nan)
        next_vertex = [None] * self.num_routes
        for route in self.routes:
            for index, leg in enumerate(route.legs):
                if leg.vertex == region.region_id:
                    leg_distance[route.index] = leg.distance
                    next_vertex[route.index] = route.next_vertex(index)

        capacity = {
            target: data["capacity"] for _, target, data in self.adjacency.out_edges(region.region_id, data=True)
        }
        return RegionDynamics(
            region,
            self.time_step,
            leg_distance,
            next_vertex,
            capacity,
            self.network.inflow_margin(region.region_id),
        )

    def reset(self):
        """Empty the network and rewind to t = 0; rates go back to 1"""
        for dynamics in self.roads.values():
            dynamics.reset()
        for dynamics in self.regions.values():
            dynamics.reset()
        self.t = 0
        self.injected = 0.0
        self.completed = 0.0
        self.cohorts = [TripCohort(path=route.legs, route_index=route.index) for route in self.routes]
        self.completion_series = []
        self.boundary_flows = {}
        self._checker = ConservationChecker()

    def _vertex(self, vertex):
        if vertex in self.roads:
            return self.roads[vertex]
        return self.regions[vertex]

    @property
    def running(self):
        """Vehicles in the network, origin queues included"""
        total = 0.0
        for dynamics in self.roads.values():
            total += dynamics.total + dynamics.queued
        for dynamics in self.regions.values():
            total += dynamics.accumulation + dynamics.queued
        return total

    @property
    def route_injected(self):
        """Injected volume per route"""
        return np.array([cohort.size for cohort in self.cohorts])

    @property
    def vehicle_km(self):
        """Distance travelled by all vehicles during the last interval"""
        return sum(dynamics.vehicle_km for dynamics in self.roads.values()) + sum(
            dynamics.vehicle_km for dynamics in self.regions.values()
        )

    @property
    def rates(self):
        rates = {}
        for agent in self.network.ramp_agents:
            rates[agent] = self.roads[agent].state.meter_rate
        for agent in self.network.perimeter_agents:
            rates[agent] = self.regions[agent].rate
        return rates

    def rate(self, agent_id):
        if agent_id in self.network.ramp_agents:
            return self.roads[agent_id].state.meter_rate
        if agent_id in self.network.perimeter_agents:
            return self.regions[agent_id].rate
        raise KeyError("Unknown agent '{}'".format(agent_id))

    def is_decision_step(self, t=None):
        return (self.t if t is None else t) % self.scenario.decision_steps == 0

    def apply_actions(self, actions):
        """Change control rates by one step per action, clamped to the rate bounds

        :param dict actions: agent id -> action index (0 increase, 1 hold, 2 decrease)
        :raises ConfigurationError: if an action targets something that is not an agent
        """
        low, high = self.settings.rate_bounds
        for agent, action in actions.items():
            if agent not in self.agent_ids:
                raise ConfigurationError("actions.{}".format(agent), "not a declared agent")
            rate = float(np.clip(self.rate(agent) + action_delta(action, self.settings.rate_step), low, high))
            if agent in self.network.ramp_agents:
                self.roads[agent].state.meter_rate = rate
            else:
                self.regions[agent].rate = rate

    def simulate_step(self, actions=None):
        """Run one interval

        Actions apply only on decision intervals and are ignored otherwise.

        :param dict actions: agent id -> action index
        :returns: interval index, completions and reward
        :rtype: StepResult
        """
        t = self.t
        if actions and self.is_decision_step(t):
            self.apply_actions(actions)

        for dynamics in self.roads.values():
            dynamics.begin_interval()
        for dynamics in self.regions.values():
            dynamics.begin_interval()

        if t < len(self._route_demand):
            new_trips = self._route_demand[t]
            self.injected += float(new_trips.sum())
            for cohort, amount in zip(self.cohorts, new_trips):
                cohort.inject(float(amount), t * self.time_step)
            for origin, mask in self._origin_masks.items():
                self._vertex(origin).enqueue(new_trips * mask)

        for dynamics in self.roads.values():
            dynamics.release()
        for dynamics in self.regions.values():
            dynamics.release()
            dynamics.prepare()

        completed = np.zeros(self.num_routes)
        for dynamics in self.roads.values():
            completed += dynamics.complete()

        self._exchange_boundary_flows()

        for dynamics in self.roads.values():
            if dynamics.road.kind != MAINLINE:
                dynamics.compute_flows()
        for dynamics in self.roads.values():
            if dynamics.road.kind == MAINLINE:
                dynamics.compute_mainline(self.roads)

        for dynamics in self.roads.values():
            dynamics.advance(audit=self.audit)
        for dynamics in self.regions.values():
            completed += dynamics.advance(audit=self.audit)

        end_time = (t + 1) * self.time_step
        for index in np.flatnonzero(completed > 0):
            self.cohorts[index].complete(float(completed[index]), end_time)
        completions = float(completed.sum())
        self.completed += completions
        self.completion_series.append(completions)
        self.t += 1
        if self.audit:
            self._checker(self.injected, self.running, self.completed)
        return StepResult(t, completions, step_reward(completions, self.baseline))

    def _exchange_boundary_flows(self):
        """Allocate boundary flows between vertices and move the vehicles"""
        road_demands, region_demands = {}, {}
        for road_id, dynamics in self.roads.items():
            for target, demand in dynamics.sink_demands().items():
                (road_demands if target in self.roads else region_demands)[(road_id, target)] = demand
        for region_id, dynamics in self.regions.items():
            for target, demand in dynamics.demands().items():
                (road_demands if target in self.roads else region_demands)[(region_id, target)] = demand

        road_supplies = {
            road_id: dynamics.source_supply()
            for road_id, dynamics in self.roads.items()
            if dynamics.road.kind != OFF_RAMP
        }
        region_supplies = {region_id: dynamics.supply() for region_id, dynamics in self.regions.items()}

        flows = allocate_road_boundary_flows(road_demands, road_supplies)
        flows.update(allocate_region_boundary_flows(region_demands, region_supplies, self.adjacency))

        self.boundary_flows = {}
        for (sender, receiver), amount in sorted(flows.items()):
            if amount <= 0:
                continue
            source = self._vertex(sender)
            if sender in self.roads:
                composition = source.take_sink(receiver, amount)
            else:
                composition = source.take(receiver, amount)
            self._vertex(receiver).receive(composition)
            self.boundary_flows[(sender, receiver)] = float(composition.sum())

    def step_completions(self, t=None):
        """Completions N_com of interval ``t``, the last interval when None"""
        if not self.completion_series:
            return 0.0
        return self.completion_series[-1 if t is None else t]

    def observation_dim(self, agent_id):
        if agent_id in self.network.ramp_agents:
            return RAMP_OBSERVATION_DIM
        if agent_id in self.network.perimeter_agents:
            return 4 * len(self._neighbors(agent_id)) + 3
        raise KeyError("Unknown agent '{}'".format(agent_id))

    def observe(self, agent_id):
        """Local observation of an agent

        A ramp agent sees the mainline cells before, at and after its merge cell
        and the ramp's last cell, each as (trip starts, trip ends, vehicles) over
        the jam count, then the two mainline flows around the merge cell over
        mainline capacity and the ramp inflow over ramp capacity.

        A perimeter agent sees (starts, ends, vehicles) of every neighbor in the
        region adjacency (the facing cell for roads), then the boundary flow
        in both directions over the boundary capacity per neighbor, then its
        own starts, ends and accumulation over the jam accumulation.

        :raises KeyError: for an unknown agent
        """
        if agent_id in self.network.ramp_agents:
            return self._observe_ramp(agent_id)
        if agent_id in self.network.perimeter_agents:
            return self._observe_perimeter(agent_id)
        raise KeyError("Unknown agent '{}'".format(agent_id))

    @staticmethod
    def _cell_values(dynamics, cell):
        n_hat = dynamics.road.n_hat
        return [dynamics.starts[cell] / n_hat, dynamics.ends[cell] / n_hat, dynamics.counts[cell] / n_hat]

    def _observe_ramp(self, ramp_id):
        ramp = self.roads[ramp_id]
        mainline = self.roads[ramp.road.attach_road]
        cell = ramp.road.attach_cell
        values = []
        for index in (cell - 1, cell, cell + 1):
            values.extend(self._cell_values(mainline, index))
        values.extend(self._cell_values(ramp, ramp.state.num_cells - 1))

        q_main = mainline.road.q_max
        internal = mainline.flows.internal
        values.append(internal[cell - 1] / q_main)
        values.append(internal[cell] / q_main)
        values.append(mainline.flows.ramp_inflow[cell] / ramp.road.q_max)
        return np.array(values, dtype=float)

    def _neighbors(self, region_id):
        return sorted(set(self.adjacency.predecessors(region_id)) | set(self.adjacency.successors(region_id)))

    def _observe_perimeter(self, region_id):
        region = self.regions[region_id]
        nodes, flows = [], []
        for neighbor in self._neighbors(region_id):
            if neighbor in self.regions:
                other = self.regions[neighbor]
                jam = other.spec.jam_accumulation
                nodes.extend([other.starts / jam, other.ends / jam, other.accumulation / jam])
            else:
                road = self.roads[neighbor]
                upstream = self.adjacency.has_edge(neighbor, region_id)
                nodes.extend(self._cell_values(road, road.state.num_cells - 1 if upstream else 0))

            capacity, volume = 0.0, 0.0
            for pair in ((neighbor, region_id), (region_id, neighbor)):
                if self.adjacency.has_edge(*pair):
                    capacity += self.adjacency.edges[pair]["capacity"]
                    volume += self.boundary_flows.get(pair, 0.0)
            flows.append(volume / capacity if capacity > 0 else 0.0)

        jam = region.spec.jam_accumulation
        own = [region.starts / jam, region.ends / jam, region.accumulation / jam]
        return np.array(nodes + flows + own, dtype=float)


class Controller(ABC):
    """Decides control actions on decision intervals"""

    def reset(self, simulator):
        """Called once before an episode"""

    @abstractmethod
    def act(self, simulator):
        """Return agent id -> action index for the coming decision interval"""

    def reward(self, value):
        """Reward collected over the previous decision interval"""

    def finish(self, simulator, value):
        """Called once after an episode with the reward of the last decision interval"""


class NoControl(Controller):
    """Leaves every rate at its current value"""

    def act(self, simulator):
        return {}


def run_episode(simulator, controller=None, condition=None, recorder=None):
    """Run one episode from an empty network

    :param Simulator simulator: the simulator, reset before running
    :param Controller controller: decision maker, no control when None
    :param callable condition: ``(t, running) -> bool``, horizon plus drain when None
    :param callable recorder: ``(t, simulator)`` called after every interval
    :returns: the episode log
    :rtype: EpisodeLog
    """
    controller = controller or NoControl()
    if condition is None:
        condition = DrainCondition(simulator.horizon, simulator.scenario.drain_cap)

    simulator.reset()
    controller.reset(simulator)
    log = EpisodeLog(simulator.agent_ids, simulator.time_step, simulator.horizon)
    logger.debug("Episode start: %d agents, horizon %d", len(simulator.agent_ids), simulator.horizon)

    window = 0.0
    t = 0
    while condition(t, simulator.running):
        actions = None
        if simulator.is_decision_step(t):
            if t > 0:
                controller.reward(window)
            window = 0.0
            actions = controller.act(simulator)
        result = simulator.simulate_step(actions)
        window += result.reward
        log.record(
            t,
            simulator.injected,
            simulator.running,
            result.completions,
            result.reward,
            simulator.vehicle_km,
            simulator.rates,
        )
        if recorder is not None:
            recorder(t, simulator)
        t += 1

    controller.finish(simulator, window)
    log.route_injected = simulator.route_injected
    log.route_free_flow = simulator.free_flow_times.copy()
    logger.debug("Episode stop after %d intervals, %.1f veh still running", t, simulator.running)
    return log


def baseline_constant(scenario, seed=0):
    """Mean completions per interval of an uncontrolled episode over the demand horizon, rounded

    :rtype: float
    """
    simulator = Simulator(scenario, sample_demand(scenario.demand, seed))
    log = run_episode(simulator, condition=DrainCondition(scenario.horizon, drain=False))
    value = round(log.total_completions / max(1, len(log)), 2)
    logger.info("Reward baseline %.2f", value)
    return value

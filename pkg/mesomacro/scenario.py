# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Scenario loading: network, demand profile and simulation settings"""

from dataclasses import dataclass, replace
from functools import cached_property
from importlib import resources
import logging
from typing import Tuple

from mesomacro.core.config import check_fields, number, parse_network_config, read_yaml, require
from mesomacro.core.network import Network, partition_network
from mesomacro.demand import DemandProfile, parse_demand_profile
from mesomacro.errors import ConfigurationError, PlanningError
from mesomacro.planning import plan_routes

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

BUILTIN_SMALL = "builtin-small"
BUILTIN_FILES = {BUILTIN_SMALL: "small_network.yaml"}
SIMULATION_FIELDS = frozenset(
    ["decision_interval", "gamma", "zeta", "rate_step", "rate_bounds", "route_variants", "drain_factor", "route_seed"]
)
DESK_DURATION = 3600.0
DESK_VOLUME_DIVISOR = 4.0
DEMAND_SCALE_BOUNDS = (0.1, 3.0)
CONTROL_NONE = "none"
CONTROL_RAMP = "ramp"
CONTROL_PERIMETER = "perimeter"
CONTROL_BOTH = "both"
CONTROL_MODES = (CONTROL_NONE, CONTROL_RAMP, CONTROL_PERIMETER, CONTROL_BOTH)


@dataclass(frozen=True)
class SimulationSettings:
    """Runtime parameters of a scenario

    ``decision_interval`` is in seconds; ``drain_factor`` bounds evaluation
    episodes at that multiple of the demand horizon.
    """

    decision_interval: float = 30.0
    gamma: float = 1.0
    zeta: float = 1.0
    rate_step: float = 0.05
    rate_bounds: Tuple[float, float] = (0.1, 1.0)
    route_variants: int = 4
    drain_factor: float = 2.0
    route_seed: int = 0

    def __post_init__(self):
        low, high = self.rate_bounds
        if not 0 < low <= high <= 1:
            raise ConfigurationError("simulation.rate_bounds", "expected 0 < low <= high <= 1")
        if self.route_variants < 1:
            raise ConfigurationError("simulation.route_variants", "at least one variant is required")
        if self.drain_factor < 1:
            raise ConfigurationError("simulation.drain_factor", "must be at least 1")


def parse_simulation_settings(data):
    check_fields(data, SIMULATION_FIELDS, "simulation")
    defaults = SimulationSettings()
    bounds = data.get("rate_bounds", list(defaults.rate_bounds))
    if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
        raise ConfigurationError("simulation.rate_bounds", "expected [low, high]")
    return SimulationSettings(
        decision_interval=number(data, "decision_interval", "simulation", defaults.decision_interval, minimum=0.0),
        gamma=number(data, "gamma", "simulation", defaults.gamma, minimum=0.0, strict=False),
        zeta=number(data, "zeta", "simulation", defaults.zeta, minimum=0.0),
        rate_step=number(data, "rate_step", "simulation", defaults.rate_step, minimum=0.0),
        rate_bounds=(float(bounds[0]), float(bounds[1])),
        route_variants=int(number(data, "route_variants", "simulation", float(defaults.route_variants), minimum=0.0)),
        drain_factor=number(data, "drain_factor", "simulation", defaults.drain_factor, minimum=0.0),
        route_seed=int(
            number(data, "route_seed", "simulation", float(defaults.route_seed), minimum=0.0, strict=False)
        ),
    )


@dataclass(frozen=True)
class Scenario:
    """A network with its demand profile and runtime settings"""

    name: str
    network: Network
    demand: DemandProfile
    settings: SimulationSettings = SimulationSettings()

    @property
    def time_step(self):
        return self.network.time_step

    @property
    def horizon(self):
        """Demand horizon in intervals"""
        return self.demand.num_intervals

    @property
    def drain_cap(self):
        return int(round(self.settings.drain_factor * self.horizon))

    @property
    def decision_steps(self):
        return max(1, int(round(self.settings.decision_interval / self.time_step)))

    @cached_property
    def adjacency(self):
        return partition_network(self.network)

    @cached_property
    def routes(self):
        """Planned routes, ``route_variants`` per OD pair"""
        return plan_routes(
            self.network,
            self.adjacency,
            self.demand.od_pairs,
            variants=self.settings.route_variants,
            seed=self.settings.route_seed,
        )

    def with_demand(self, volume_factor=1.0, duration=None):
        """Copy with a rescaled demand profile"""
        return replace(self, demand=self.demand.scaled(volume_factor, duration))

    def desk_scale(self, divisor=DESK_VOLUME_DIVISOR, duration=DESK_DURATION):
        """Copy compressed to a one hour horizon with the volume divided by ``divisor``"""
        if divisor <= 0:
            raise ConfigurationError("desk_scale", "must be positive")
        return self.with_demand(1.0 / divisor, duration)

    def with_control(self, control):
        """Copy whose declared agents are restricted to the ramps, the perimeters, both or none"""
        if control not in CONTROL_MODES:
            raise ConfigurationError("control", "expected one of {}".format(", ".join(CONTROL_MODES)))
        ramps = self.network.ramp_agents if control in (CONTROL_RAMP, CONTROL_BOTH) else ()
        perimeters = self.network.perimeter_agents if control in (CONTROL_PERIMETER, CONTROL_BOTH) else ()
        return replace(self, network=replace(self.network, ramp_agents=ramps, perimeter_agents=perimeters))


def parse_scenario(data, source="<scenario>"):
    """Build a Scenario from a parsed YAML document"""
    if not isinstance(data, dict):
        raise ConfigurationError("", "expected a mapping")
    network = parse_network_config(data, source=source)
    vertices = {region.region_id for region in network.bathtub_regions}
    vertices |= {road.road_id for road in network.cell_roads}
    demand = parse_demand_profile(require(data, "demand", ""), time_step=network.time_step, vertices=vertices)
    settings = parse_simulation_settings(data.get("simulation") or {})
    return Scenario(name=str(data.get("name", source)), network=network, demand=demand, settings=settings)


def builtin_path(name):
    """Path of a scenario shipped with the package"""
    return resources.files("mesomacro").joinpath("data").joinpath(BUILTIN_FILES[name])


def load_scenario(scenario=BUILTIN_SMALL, demand_scale=1.0, desk_scale=None, horizon=None):
    """Load a built-in scenario or a scenario file

    :param str scenario: ``builtin-small`` or a YAML path
    :param float demand_scale: volume factor, within [0.1, 3]
    :param float desk_scale: when set, compress to one hour and divide the volume by it
    :param float horizon: demand horizon in seconds, overrides the profile's duration
    :returns: the scenario with its routes planned
    :rtype: Scenario
    :raises IOError: if the file does not exist
    :raises ConfigurationError: on malformed content
    :raises PlanningError: if an OD pair is not connected
    """
    low, high = DEMAND_SCALE_BOUNDS
    if not low <= demand_scale <= high:
        raise ConfigurationError("demand_scale", "must lie in [{}, {}]".format(low, high))

    if scenario in BUILTIN_FILES:
        with resources.as_file(builtin_path(scenario)) as path:
            loaded = parse_scenario(read_yaml(path), source=scenario)
    else:
        loaded = parse_scenario(read_yaml(scenario), source=str(scenario))

    if desk_scale is not None:
        loaded = loaded.desk_scale(desk_scale)
    if demand_scale != 1.0 or horizon is not None:
        loaded = loaded.with_demand(demand_scale, horizon)

    try:
        routes = loaded.routes
    except PlanningError:
        logger.error("Scenario %s has an unconnected OD pair", loaded.name)
        raise
    logger.info(
        "Scenario %s: %d intervals of %.1f s, %.0f veh, %d routes",
        loaded.name,
        loaded.horizon,
        loaded.time_step,
        loaded.demand.total,
        len(routes),
    )
    return loaded

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Trip path planning over the region/freeway abstract graph"""

from dataclasses import dataclass, field
import logging
from typing import Optional, Tuple

import networkx as nx
import numpy as np

from mesomacro.core.cells import SECONDS_PER_HOUR
from mesomacro.core.network import BOUNDARY, DIVERGE, JUNCTION, MERGE
from mesomacro.errors import PlanningError

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

REGION_LEG = "region"
ROAD_LEG = "road"
DISTANCE_SPREAD = (0.5, 1.5)


@dataclass(frozen=True)
class Leg:
    """One leg of a path

    Road legs enter at ``entry_cell`` (0 or a merge cell) and leave either at the
    sink cell or through the off-ramp attached at ``exit_cell``.
    """

    vertex: str
    kind: str
    distance: float
    entry_cell: int = 0
    exit_cell: int = 0
    exits_at_sink: bool = True

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError("Leg distance must be positive, got {} on '{}'".format(self.distance, self.vertex))


@dataclass(frozen=True)
class Route:
    """A planned path variant of an OD pair"""

    index: int
    origin: str
    destination: str
    od_index: int
    variant: int
    legs: Tuple[Leg, ...]

    def next_vertex(self, leg_index):
        if leg_index + 1 < len(self.legs):
            return self.legs[leg_index + 1].vertex
        return None

    def free_flow_time(self, network):
        """Travel time in seconds at free-flow speed"""
        seconds = 0.0
        for leg in self.legs:
            if leg.kind == REGION_LEG:
                speed = network.region(leg.vertex).mfd.free_speed
            else:
                speed = network.road(leg.vertex).v_max
            seconds += leg.distance / speed * SECONDS_PER_HOUR
        return seconds


@dataclass
class TripCohort:
    """Fluid trip packet following one route

    ``size`` grows as demand is injected. ``injection_time`` and
    ``completion_time`` accumulate volume times time, so the mean travel time
    of a drained cohort is ``(completion_time - injection_time) / size``.
    """

    path: Tuple[Leg, ...]
    route_index: int = field(default=-1)
    start_time: Optional[float] = None
    size: float = 0.0
    injection_time: float = 0.0
    completed: float = 0.0
    completion_time: float = 0.0

    def inject(self, amount, t):
        if amount <= 0:
            return
        if self.start_time is None:
            self.start_time = t
        self.size += amount
        self.injection_time += amount * t

    def complete(self, amount, t):
        amount = min(amount, self.size - self.completed)
        if amount <= 0:
            return
        self.completed += amount
        self.completion_time += amount * t

    @property
    def drained(self):
        return self.size > 0 and self.completed >= self.size * (1.0 - 1e-9)

    @property
    def mean_travel_time(self):
        """Mean seconds from injection to completion, None until the cohort drained"""
        if not self.drained:
            return None
        return (self.completion_time - self.injection_time) / self.completed


def _region_node(region_id):
    return ("region", region_id)


def _port_node(road_id, cell):
    return ("port", road_id, cell)


def build_planning_graph(network, adjacency):
    """Expand the region adjacency into a weighted graph of region vertices and road ports

    Ports sit at the source, the sink end and every merge/diverge cell of a
    road, so partial traversals of a mainline carry their true distance.
    """
    ports = {road.road_id: {0, road.num_cells} for road in network.cell_roads}
    for head, tail, data in adjacency.edges(data=True):
        if data["kind"] == MERGE:
            ports[tail].add(data["cell"])
        elif data["kind"] == DIVERGE:
            ports[head].add(data["cell"])

    graph = nx.DiGraph()
    for region in network.bathtub_regions:
        graph.add_node(_region_node(region.region_id))
    for road_id, cells in ports.items():
        road = network.road(road_id)
        ordered = sorted(cells)
        for cell in ordered:
            graph.add_node(_port_node(road_id, cell))
        for start, end in zip(ordered, ordered[1:]):
            weight = (end - start) * road.cell_length
            graph.add_edge(_port_node(road_id, start), _port_node(road_id, end), weight=weight)

    for head, tail, data in adjacency.edges(data=True):
        kind = data["kind"]
        head_is_region = adjacency.nodes[head]["kind"] == "region"
        tail_is_region = adjacency.nodes[tail]["kind"] == "region"
        if kind == BOUNDARY and head_is_region and tail_is_region:
            weight = data["length"] + network.region(tail).characteristic_distance
            graph.add_edge(_region_node(head), _region_node(tail), weight=weight)
        elif kind == BOUNDARY and head_is_region:
            graph.add_edge(_region_node(head), _port_node(tail, 0), weight=0.0)
        elif kind == BOUNDARY:
            weight = network.region(tail).characteristic_distance
            graph.add_edge(_port_node(head, network.road(head).num_cells), _region_node(tail), weight=weight)
        elif kind in (JUNCTION, MERGE):
            cell = data["cell"] if kind == MERGE else 0
            graph.add_edge(_port_node(head, network.road(head).num_cells), _port_node(tail, cell), weight=0.0)
        elif kind == DIVERGE:
            graph.add_edge(_port_node(head, data["cell"]), _port_node(tail, 0), weight=0.0)
    return graph


def _endpoint(network, vertex, is_origin):
    if network.has_road(vertex) and network.road(vertex).is_cell_modeled:
        road = network.road(vertex)
        return _port_node(vertex, 0 if is_origin else road.num_cells)
    if network.has_region(vertex) and network.is_bathtub(vertex):
        return _region_node(vertex)
    raise PlanningError(vertex, "?") if is_origin else PlanningError("?", vertex)


def _sample_distance(region, rng):
    mean = region.characteristic_distance
    if rng is None:
        distance = mean
    else:
        distance = rng.uniform(DISTANCE_SPREAD[0], DISTANCE_SPREAD[1]) * mean
    return min(distance, region.longest_route)


def _collapse(network, nodes, rng):
    legs = []
    index = 0
    while index < len(nodes):
        node = nodes[index]
        if node[0] == "region":
            region = network.region(node[1])
            legs.append(Leg(vertex=node[1], kind=REGION_LEG, distance=_sample_distance(region, rng)))
            index += 1
            continue

        road = network.road(node[1])
        entry = node[2]
        exit_port = entry
        while index < len(nodes) and nodes[index][0] == "port" and nodes[index][1] == road.road_id:
            exit_port = nodes[index][2]
            index += 1
        at_sink = exit_port == road.num_cells
        legs.append(
            Leg(
                vertex=road.road_id,
                kind=ROAD_LEG,
                distance=(exit_port - entry) * road.cell_length,
                entry_cell=entry,
                exit_cell=road.num_cells - 1 if at_sink else exit_port,
                exits_at_sink=at_sink,
            )
        )
    return tuple(legs)


def plan_trip(origin, destination, network, adjacency, rng=None, graph=None):
    """Shortest-distance path between two regions or cell-modeled roads

    :param str origin: origin region or road id
    :param str destination: destination region or road id
    :param Network network: the network
    :param networkx.DiGraph adjacency: output of partition_network
    :param numpy.random.Generator rng: distance sampler for region legs, mean distances when None
    :param networkx.DiGraph graph: a prebuilt planning graph
    :returns: legs of the path
    :rtype: tuple
    :raises PlanningError: if the pair is not connected
    """
    if graph is None:
        graph = build_planning_graph(network, adjacency)
    try:
        source = _endpoint(network, origin, True)
        target = _endpoint(network, destination, False)
        nodes = nx.shortest_path(graph, source, target, weight="weight")
    except (nx.NetworkXNoPath, nx.NodeNotFound, PlanningError):
        raise PlanningError(origin, destination)

    legs = _collapse(network, nodes, rng)
    if len({leg.vertex for leg in legs}) != len(legs):
        # the simulation keeps one leg per vertex and route
        raise PlanningError(origin, destination)
    return legs


def plan_routes(network, adjacency, od_pairs, variants=1, seed=0):
    """Plan ``variants`` routes per OD pair, each with its own sampled region distances

    :returns: routes indexed by ``od_index * variants + variant``
    :rtype: list
    """
    graph = build_planning_graph(network, adjacency)
    rng = np.random.default_rng(seed)
    routes = []
    for od_index, (origin, destination) in enumerate(od_pairs):
        for variant in range(variants):
            legs = plan_trip(origin, destination, network, adjacency, rng=rng, graph=graph)
            routes.append(
                Route(
                    index=len(routes),
                    origin=origin,
                    destination=destination,
                    od_index=od_index,
                    variant=variant,
                    legs=legs,
                )
            )
        logger.debug("Planned %s -> %s via %s", origin, destination, [leg.vertex for leg in routes[-1].legs])
    return routes

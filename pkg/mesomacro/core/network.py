# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Network representation and region partition"""

from dataclasses import dataclass
from functools import cached_property
import logging
from typing import Optional, Tuple

import networkx as nx

from mesomacro.core.cells import cell_count
from mesomacro.core.mfd import MfdParams

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

MAINLINE = "mainline"
ON_RAMP = "on_ramp"
OFF_RAMP = "off_ramp"
URBAN = "urban"
ROAD_KINDS = (MAINLINE, ON_RAMP, OFF_RAMP, URBAN)
CELL_ROAD_KINDS = (MAINLINE, ON_RAMP, OFF_RAMP)

# region adjacency edge kinds
BOUNDARY = "boundary"
JUNCTION = "junction"
MERGE = "merge"
DIVERGE = "diverge"


@dataclass(frozen=True)
class Road:
    """Directed road from ``head`` to ``tail``

    ``q_max`` is in veh per interval, ``n_hat`` in veh per cell. Urban roads are
    a single cell spanning the whole road.
    """

    road_id: str
    head: str
    tail: str
    kind: str
    length: float
    v_max: float
    w: float
    q_max: float
    n_hat: float
    lanes: int
    cell_length: float
    attach_road: Optional[str] = None
    attach_cell: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ROAD_KINDS:
            raise ValueError("Unknown road kind '{}'".format(self.kind))
        if self.length <= 0:
            raise ValueError("Road length must be positive")
        if not 0 < self.w <= self.v_max:
            raise ValueError("Spillback speed must satisfy 0 < w <= v_max")
        if self.q_max <= 0 or self.n_hat <= 0:
            raise ValueError("q_max and n_hat must be positive")

    @property
    def is_cell_modeled(self):
        return self.kind in CELL_ROAD_KINDS

    @property
    def num_cells(self):
        if not self.is_cell_modeled:
            return 1
        return cell_count(self.length, self.cell_length)

    @property
    def wave_ratio(self):
        """w / v_max, the fraction of free space a congested cell can fill per interval"""
        return self.w / self.v_max

    @property
    def jam_vehicles(self):
        return self.n_hat * self.num_cells


@dataclass(frozen=True)
class RegionSpec:
    region_id: str
    nodes: frozenset
    total_length: float = 0.0
    longest_route: float = 0.0
    jam_accumulation: float = 0.0
    mfd: Optional[MfdParams] = None

    def __post_init__(self):
        if self.longest_route > self.total_length:
            raise ValueError(
                "Region '{}': longest route {} exceeds total length {}".format(
                    self.region_id, self.longest_route, self.total_length
                )
            )

    @property
    def characteristic_distance(self):
        """Mean leg distance used for planning and distance sampling"""
        return self.total_length / 4.0

    def speed(self, accumulation):
        return self.mfd.speed(accumulation, self.total_length)


@dataclass(frozen=True)
class Network:
    """Directed road graph partitioned into regions"""

    time_step: float
    nodes: frozenset
    roads: Tuple[Road, ...]
    regions: Tuple[RegionSpec, ...]
    freeway_region_index: Optional[int] = None
    ramp_agents: Tuple[str, ...] = ()
    perimeter_agents: Tuple[str, ...] = ()

    @cached_property
    def _road_map(self):
        return {road.road_id: road for road in self.roads}

    @cached_property
    def _region_map(self):
        return {region.region_id: region for region in self.regions}

    @cached_property
    def _node_region(self):
        return {node: region.region_id for region in self.regions for node in region.nodes}

    def road(self, road_id):
        return self._road_map[road_id]

    def region(self, region_id):
        return self._region_map[region_id]

    def has_road(self, road_id):
        return road_id in self._road_map

    def has_region(self, region_id):
        return region_id in self._region_map

    def region_of(self, node):
        """Region id owning a node"""
        return self._node_region[node]

    @property
    def freeway_region(self):
        if self.freeway_region_index is None:
            return None
        return self.regions[self.freeway_region_index]

    @property
    def bathtub_regions(self):
        return tuple(region for index, region in enumerate(self.regions) if index != self.freeway_region_index)

    @property
    def cell_roads(self):
        return tuple(road for road in self.roads if road.is_cell_modeled)

    @property
    def agent_ids(self):
        return self.ramp_agents + self.perimeter_agents

    def is_bathtub(self, region_id):
        return region_id in self._region_map and (
            self.freeway_region is None or self.freeway_region.region_id != region_id
        )

    def inbound_roads(self, region_id):
        return tuple(
            road
            for road in self.roads
            if self.region_of(road.tail) == region_id and self.region_of(road.head) != region_id
        )

    def outbound_roads(self, region_id):
        return tuple(
            road
            for road in self.roads
            if self.region_of(road.head) == region_id and self.region_of(road.tail) != region_id
        )

    def inflow_margin(self, region_id):
        """Boundary inflow capacity of a region in veh per interval"""
        return sum(road.q_max for road in self.inbound_roads(region_id))

    def outflow_margin(self, region_id):
        """Boundary outflow capacity of a region in veh per interval"""
        return sum(road.q_max for road in self.outbound_roads(region_id))


def longest_road_chain(roads):
    """Length of the longest chain of roads that never revisits a node

    Parallel roads between the same nodes count with their longest member.

    :param roads: roads inside one region
    :returns: summed length in km, 0.0 without roads
    :rtype: float
    """
    graph = nx.DiGraph()
    for road in roads:
        if road.head == road.tail:
            continue
        if not graph.has_edge(road.head, road.tail) or graph.edges[road.head, road.tail]["length"] < road.length:
            graph.add_edge(road.head, road.tail, length=road.length)

    if nx.is_directed_acyclic_graph(graph):
        return float(nx.dag_longest_path_length(graph, weight="length", default_weight=0.0))

    longest = max([road.length for road in roads] or [0.0])
    for source in graph.nodes:
        for target in graph.nodes:
            if source == target:
                continue
            for path in nx.all_simple_paths(graph, source, target):
                longest = max(longest, nx.path_weight(graph, path, weight="length"))
    return float(longest)


def _road_upstream(network, road):
    """Vertices feeding a cell road, with the connecting edge attributes"""
    if road.kind == OFF_RAMP:
        return [(road.attach_road, {"kind": DIVERGE, "cell": road.attach_cell, "capacity": road.q_max})]

    head_region = network.region_of(road.head)
    if network.is_bathtub(head_region):
        return [(head_region, {"kind": BOUNDARY, "capacity": road.q_max, "length": 0.0})]

    return [
        (other.road_id, {"kind": JUNCTION, "capacity": min(other.q_max, road.q_max)})
        for other in network.cell_roads
        if other.tail == road.head and other.kind != ON_RAMP
    ]


def partition_network(network):
    """Build the region adjacency graph used for planning and observations

    Vertices are bathtub regions and cell-modeled roads. Edges are boundary
    connections (with summed capacity), road junctions, on-ramp merges and
    off-ramp diverges.

    :param Network network: a validated network
    :returns: region adjacency
    :rtype: networkx.DiGraph
    """
    graph = nx.DiGraph()
    for region in network.bathtub_regions:
        graph.add_node(region.region_id, kind="region")
    for road in network.cell_roads:
        graph.add_node(road.road_id, kind="road", road_kind=road.kind)

    for road in network.roads:
        if not road.is_cell_modeled:
            head_region, tail_region = network.region_of(road.head), network.region_of(road.tail)
            if head_region == tail_region:
                continue
            if graph.has_edge(head_region, tail_region):
                edge = graph.edges[head_region, tail_region]
                edge["capacity"] += road.q_max
                edge["length"] = min(edge["length"], road.length)
            else:
                graph.add_edge(head_region, tail_region, kind=BOUNDARY, capacity=road.q_max, length=road.length)
            continue

        for upstream, attrs in _road_upstream(network, road):
            graph.add_edge(upstream, road.road_id, **attrs)

        if road.kind == ON_RAMP:
            graph.add_edge(road.road_id, road.attach_road, kind=MERGE, cell=road.attach_cell, capacity=road.q_max)
            continue

        tail_region = network.region_of(road.tail)
        if network.is_bathtub(tail_region):
            graph.add_edge(road.road_id, tail_region, kind=BOUNDARY, capacity=road.q_max, length=0.0)

    logger.debug(
        "Region adjacency with %d vertices and %d edges", graph.number_of_nodes(), graph.number_of_edges()
    )
    return graph

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Generalized bathtub dynamics of urban regions

Vehicles of a region share one MFD speed and are tracked as cohorts of
remaining trip distance. A cohort reaching zero distance either completes its
trip or waits at the boundary until the next region or road accepts it.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from mesomacro.core.cells import SECONDS_PER_HOUR
from mesomacro.errors import InvariantError
from mesomacro.helpers import allocate_proportional

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

DISTANCE_TOLERANCE = 1e-9
SIZE_TOLERANCE = 1e-12
COMPLETING = -1
NOT_THROUGH = -2


@dataclass
class RegionState:
    """Remaining-distance cohorts of a region

    ``tail`` maps a route to the index of its most recently inserted cohort.
    """

    xi: np.ndarray
    size: np.ndarray
    route: np.ndarray
    rate: float = 1.0
    speed: float = 0.0
    tail: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, rate=1.0):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0, dtype=int), rate=rate)

    @classmethod
    def from_cohorts(cls, cohorts, rate=1.0):
        """Build a state from (xi, size, route) tuples"""
        if not cohorts:
            return cls.empty(rate)
        xi, size, route = zip(*cohorts)
        return cls(np.array(xi, dtype=float), np.array(size, dtype=float), np.array(route, dtype=int), rate=rate)

    @property
    def accumulation(self):
        return float(self.size.sum())

    @property
    def num_cohorts(self):
        return self.size.size

    def check(self, jam_accumulation, tolerance=DISTANCE_TOLERANCE):
        if self.size.size and self.size.min() < -tolerance:
            raise InvariantError("Negative cohort size {}".format(self.size.min()))
        if self.xi.size and self.xi.min() < -tolerance:
            raise InvariantError("Negative remaining distance {}".format(self.xi.min()))
        if self.accumulation > jam_accumulation * (1.0 + tolerance) + tolerance:
            raise InvariantError("Accumulation {} above jam {}".format(self.accumulation, jam_accumulation))


def region_speed(state, spec):
    """MFD speed of a region at its current accumulation in km/h"""
    return spec.speed(state.accumulation)


def region_demand_supply(state, spec, inflow_margin, outflow_margin, distance, exiting=None, starts=0.0):
    """Boundary demand and supply of a region

    Demand is the volume reaching the boundary this interval on its way to another
    vertex, capped by the outflow margin. Supply is the room left below the jam
    accumulation after this interval's trip starts, capped by the perimeter rate
    times the inflow margin. Both are clamped at 0; an uncontrolled region has rate 1.

    :param RegionState state: the region state
    :param RegionSpec spec: the region
    :param float inflow_margin: boundary inflow capacity in veh per interval
    :param float outflow_margin: boundary outflow capacity in veh per interval
    :param float distance: distance travelled this interval at the MFD speed
    :param numpy.ndarray exiting: per-cohort mask of vehicles bound for another vertex, all when None
    :param float starts: trips released into the region this interval
    :returns: (demand, supply) in veh per interval
    :rtype: tuple
    """
    reaching = state.xi <= distance + DISTANCE_TOLERANCE
    if exiting is not None:
        reaching &= exiting
    demand = min(float(state.size[reaching].sum()), outflow_margin)
    supply = min(spec.jam_accumulation - state.accumulation - starts, state.rate * inflow_margin)
    return max(0.0, demand), max(0.0, supply)


def allocate_region_boundary_flows(demands, supplies, adjacency=None):
    """Proportional allocation of region boundary demands to receiver supplies

    :param dict demands: (sender, receiver) -> demand towards the receiver
    :param dict supplies: receiver -> supply
    :param networkx.DiGraph adjacency: when given, pairs without an edge get no flow
    :returns: (sender, receiver) -> boundary flow
    :rtype: dict
    """
    if adjacency is not None:
        blocked = [pair for pair in demands if not adjacency.has_edge(*pair)]
        for pair in blocked:
            logger.warning("No boundary between '%s' and '%s', dropping demand %.3f", pair[0], pair[1], demands[pair])
        demands = {pair: value for pair, value in demands.items() if pair not in blocked}
    return allocate_proportional(demands, supplies)


def fifo_take(xi, size, candidates, amount):
    """Volume taken from each candidate cohort, smallest remaining distance first

    Cohorts sharing the same distance are drained in proportion to their size.

    :returns: per-cohort taken volume
    :rtype: numpy.ndarray
    """
    taken = np.zeros_like(size)
    index = np.flatnonzero(candidates)
    if amount <= 0 or index.size == 0:
        return taken

    index = index[np.argsort(xi[index], kind="stable")]
    keys, sizes = xi[index], size[index]
    _, starts = np.unique(keys, return_index=True)
    group_sizes = np.add.reduceat(sizes, starts)
    before = np.concatenate(([0.0], np.cumsum(group_sizes)[:-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        fraction = np.where(group_sizes > 0, (amount - before) / group_sizes, 0.0)
    fraction = np.clip(fraction, 0.0, 1.0)
    groups = np.repeat(np.arange(starts.size), np.diff(np.append(starts, index.size)))
    taken[index] = sizes * fraction[groups]
    return taken


def advance_region(
    state, distance, completing=None, transfers=None, entering=None, merge_tolerance=DISTANCE_TOLERANCE
):
    """Advance cohorts by one interval

    Cohorts reaching the boundary whose trip ends here leave entirely; ``transfers``
    (per cohort) leave towards the next vertex. The rest moves ``distance``
    closer to the boundary, floored at 0. ``entering`` cohorts (xi, size, route)
    are inserted afterwards and merge into the last cohort of their route when
    their distances agree within ``merge_tolerance``.

    :param RegionState state: state at the start of the interval
    :param float distance: distance travelled this interval in km
    :param numpy.ndarray completing: per-cohort mask of trips ending here, all when None
    :param numpy.ndarray transfers: per-cohort volume leaving the region
    :param tuple entering: arrays (xi, size, route) of new cohorts
    :returns: (new state, exits) with exits a per-cohort volume of the old state
    :rtype: tuple
    :raises InvariantError: if a cohort would turn negative
    """
    xi, size, route = state.xi, state.size, state.route
    reaching = xi <= distance + DISTANCE_TOLERANCE
    if completing is None:
        completing = np.ones(size.size, dtype=bool)
    exits = np.where(reaching & completing, size, 0.0)
    if transfers is not None:
        exits = exits + transfers

    remaining = size - exits
    if remaining.size and remaining.min() < -DISTANCE_TOLERANCE:
        raise InvariantError("Cohort size turned negative: {}".format(remaining.min()))

    keep = remaining > SIZE_TOLERANCE
    position = np.cumsum(keep) - 1
    tail = {key: int(position[index]) for key, index in state.tail.items() if index < keep.size and keep[index]}
    new_xi = np.maximum(xi[keep] - distance, 0.0)
    new_size = remaining[keep]
    new_route = route[keep]

    if entering is not None:
        new_xi, new_size, new_route = _insert(new_xi, new_size, new_route, tail, entering, merge_tolerance)

    updated = RegionState(new_xi, new_size, new_route, rate=state.rate, speed=state.speed, tail=tail)
    return updated, exits


def _insert(xi, size, route, tail, entering, merge_tolerance):
    add_xi, add_size, add_route = (np.asarray(values) for values in entering)
    fresh_xi, fresh_size, fresh_route = [], [], []
    for distance, volume, path in zip(add_xi, add_size, add_route):
        if volume <= SIZE_TOLERANCE:
            continue
        last = tail.get(int(path))
        if last is not None and abs(xi[last] - distance) <= merge_tolerance:
            size[last] += volume
            continue
        fresh_xi.append(distance)
        fresh_size.append(volume)
        fresh_route.append(int(path))
        tail[int(path)] = xi.size + len(fresh_xi) - 1

    if fresh_xi:
        xi = np.concatenate((xi, fresh_xi))
        size = np.concatenate((size, fresh_size))
        route = np.concatenate((route, np.array(fresh_route, dtype=int)))
    return xi, size, route


class RegionDynamics(object):
    """State and per-interval flows of one bathtub region

    ``leg_distance`` and ``next_vertex`` are indexed by route over all routes of
    the simulation; routes not crossing the region have a NaN distance.
    ``target_capacity`` maps each downstream vertex to the boundary capacity
    towards it in veh per interval.
    """

    def __init__(self, spec, time_step, leg_distance, next_vertex, target_capacity, inflow_margin):
        self.spec = spec
        self.time_step = time_step
        self.leg_distance = np.asarray(leg_distance, dtype=float)
        self.num_routes = self.leg_distance.size
        self.targets = sorted(target_capacity)
        self.target_capacity = dict(target_capacity)
        self.inflow_margin = inflow_margin

        target_index = {target: index for index, target in enumerate(self.targets)}
        self.route_target = np.full(self.num_routes, NOT_THROUGH, dtype=int)
        for index, vertex in enumerate(next_vertex):
            if np.isnan(self.leg_distance[index]):
                continue
            if vertex is None:
                self.route_target[index] = COMPLETING
            elif vertex in target_index:
                self.route_target[index] = target_index[vertex]
            else:
                raise InvariantError("Region '{}' has no boundary towards '{}'".format(spec.region_id, vertex))

        self.state = RegionState.empty()
        self.queue = np.zeros(self.num_routes)
        self.vehicle_km = 0.0
        self.begin_interval()

    def reset(self):
        self.state = RegionState.empty()
        self.queue[:] = 0.0
        self.vehicle_km = 0.0
        self.begin_interval()

    def begin_interval(self):
        self.starts = 0.0
        self.ends = 0.0
        self.inflow = 0.0
        self.outflow = 0.0
        self._starting = np.zeros(self.num_routes)
        self._entering = np.zeros(self.num_routes)
        self._transfers = np.zeros(self.state.num_cohorts)
        self._distance = 0.0
        self._reaching = np.zeros(self.state.num_cohorts, dtype=bool)
        self._target_of = np.full(self.state.num_cohorts, NOT_THROUGH, dtype=int)

    @property
    def accumulation(self):
        return self.state.accumulation

    @property
    def queued(self):
        return float(self.queue.sum())

    @property
    def rate(self):
        return self.state.rate

    @rate.setter
    def rate(self, value):
        self.state.rate = value

    def enqueue(self, demand):
        """Add new trips (a vector over all routes) to the origin queue"""
        self.queue += demand

    def release(self):
        """Start queued trips as far as the region has room (U)"""
        waiting = self.queue.sum()
        if waiting <= 0:
            return 0.0
        room = max(0.0, self.spec.jam_accumulation - self.state.accumulation)
        amount = min(waiting, room)
        self._starting = self.queue * (amount / waiting)
        self.queue = np.maximum(self.queue - self._starting, 0.0)
        self.starts = amount
        return amount

    def prepare(self):
        """Speed, travelled distance and boundary candidates from the start-of-interval state"""
        self.state.speed = region_speed(self.state, self.spec)
        self._distance = self.state.speed * self.time_step / SECONDS_PER_HOUR
        self._reaching = self.state.xi <= self._distance + DISTANCE_TOLERANCE
        self._target_of = self.route_target[self.state.route]
        self._transfers = np.zeros(self.state.num_cohorts)
        self.vehicle_km = float((np.minimum(self.state.xi, self._distance) * self.state.size).sum())

    def completions(self):
        """Trips ending this interval as a vector over all routes"""
        completing = self._reaching & (self._target_of == COMPLETING)
        return np.bincount(self.state.route[completing], self.state.size[completing], minlength=self.num_routes)

    def demands(self):
        """Boundary demand per downstream vertex, capped by the boundary capacity"""
        demands = {}
        for index, target in enumerate(self.targets):
            mass = float(self.state.size[self._reaching & (self._target_of == index)].sum())
            demands[target] = min(mass, self.target_capacity[target])
        return demands

    def supply(self):
        return region_demand_supply(
            self.state, self.spec, self.inflow_margin, 0.0, self._distance, starts=self.starts
        )[1]

    def take(self, target, amount):
        """Transfer ``amount`` vehicles towards ``target``, first come first served

        :returns: the transferred composition over all routes
        """
        candidates = self._reaching & (self._target_of == self.targets.index(target))
        available = self.state.size - self._transfers
        taken = fifo_take(self.state.xi, available, candidates, amount)
        self._transfers += taken
        self.outflow += float(taken.sum())
        return np.bincount(self.state.route, taken, minlength=self.num_routes)

    def receive(self, composition):
        """Add a boundary inflow (vector over all routes)"""
        self._entering += composition
        self.inflow += float(np.sum(composition))

    def advance(self, audit=False):
        """Remove exits, advect the cohorts and insert the interval's entries

        :returns: completions of the interval as a vector over all routes
        """
        completed = self.completions()
        entering = self._entering + self._starting
        routes = np.flatnonzero(entering > SIZE_TOLERANCE)
        distances = self.leg_distance[routes]
        if np.isnan(distances).any():
            raise InvariantError("Trips entered region '{}' off their route".format(self.spec.region_id))

        before = self.state.accumulation
        completing = self._target_of == COMPLETING
        self.state, _ = advance_region(
            self.state,
            self._distance,
            completing=completing,
            transfers=self._transfers,
            entering=(distances, entering[routes], routes),
        )
        self.ends = float(completed.sum())

        if audit:
            self.state.check(self.spec.jam_accumulation)
            expected = before + self.starts + self.inflow - self.ends - self.outflow
            if abs(self.state.accumulation - expected) > DISTANCE_TOLERANCE * max(1.0, expected):
                raise InvariantError(
                    "Region '{}' lost vehicles: {} != {}".format(
                        self.spec.region_id, self.state.accumulation, expected
                    )
                )
        return completed

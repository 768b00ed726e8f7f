# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Asymmetric cell transmission dynamics of freeway roads and ramps"""

from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np

from mesomacro.core.cells import CellArray
from mesomacro.core.network import MAINLINE, ON_RAMP
from mesomacro.errors import ConfigurationError, InvariantError
from mesomacro.helpers import allocate_proportional

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

FLOW_TOLERANCE = 1e-9


def check_merge_parameters(road, gamma, zeta):
    """Reject blending parameters that could push a merge cell of ``road`` past jam

    :raises ConfigurationError: if γ ∉ [0, 1], ζ ∉ (0, 1] or w/v + ζ(1 − γ·w/v) > 1
    """
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError("simulation.gamma", "must lie in [0, 1]")
    if not 0.0 < zeta <= 1.0:
        raise ConfigurationError("simulation.zeta", "must lie in (0, 1]")

    ratio = road.wave_ratio
    if ratio + zeta * (1.0 - gamma * ratio) > 1.0 + FLOW_TOLERANCE:
        raise ConfigurationError(
            "simulation.zeta",
            "w/v + zeta(1 - gamma w/v) exceeds 1 on '{}', merge cells could overfill".format(road.road_id),
        )


def _safe_ratio(numerator, denominator):
    numerator = np.asarray(numerator, dtype=float)
    denominator = np.asarray(denominator, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denominator > 0, numerator / denominator, 0.0)
    return np.clip(ratio, 0.0, 1.0)


def cell_demand_supply(counts, road, completions=0.0, injections=0.0):
    """Sink-cell demand and source-cell supply of a road

    :param numpy.ndarray counts: vehicles per cell
    :param Road road: the road
    :param float completions: trips ending in the sink cell this interval
    :param float injections: trips entering the source cell from the origin queue
    :returns: (D, S) in veh per interval, both clamped at 0
    :rtype: tuple
    """
    counts = np.asarray(counts, dtype=float)
    demand = min(counts[-1] - completions, road.q_max)
    supply = min(road.wave_ratio * (road.n_hat - counts[0] - injections), road.q_max)
    return max(0.0, demand), max(0.0, supply)


def compute_mainline_flows(counts, road, ramp_inflow=None, split_ratios=None, gamma=1.0, offramp_supply=None):
    """Internal flows f^{k,k+1} between consecutive cells

    f = min{(1 − β)(n^k + γR^k), (w/v)(n̂ − n^{k+1} − γR^{k+1}), q_max} with the
    speed terms normalized by the cell length. Cells feeding an off-ramp are
    also limited to (1 − β)/β times the off-ramp supply.

    :param numpy.ndarray counts: vehicles per cell
    :param Road road: the road
    :param numpy.ndarray ramp_inflow: on-ramp inflow R per cell, zero when None
    :param numpy.ndarray split_ratios: share β of each cell's vehicles leaving by off-ramp
    :param float gamma: share of the ramp inflow competing for the cell's outflow
    :param numpy.ndarray offramp_supply: supply of the off-ramp attached to each cell, unbounded when None
    :returns: K − 1 flows
    :rtype: numpy.ndarray
    """
    counts = np.asarray(counts, dtype=float)
    num_cells = counts.size
    if num_cells < 2:
        return np.zeros(0)

    ramp = np.zeros(num_cells) if ramp_inflow is None else np.asarray(ramp_inflow, dtype=float)
    beta = np.zeros(num_cells) if split_ratios is None else np.asarray(split_ratios, dtype=float)
    supply = np.full(num_cells, np.inf) if offramp_supply is None else np.asarray(offramp_supply, dtype=float)

    sending = (1.0 - beta[:-1]) * (counts[:-1] + gamma * ramp[:-1])
    receiving = np.maximum(road.wave_ratio * (road.n_hat - counts[1:] - gamma * ramp[1:]), 0.0)
    flows = np.minimum(np.minimum(sending, receiving), road.q_max)

    exiting = beta[:-1] > 0
    if exiting.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = np.where(beta[:-1] >= 1.0, 0.0, (1.0 - beta[:-1]) / beta[:-1] * supply[:-1])
            bound = np.where(exiting, bound, np.inf)
        flows = np.where(exiting, np.minimum(flows, bound), flows)
    return np.maximum(flows, 0.0)


def compute_onramp_flows(queue, mainline_count, ramp, mainline, rate=None, zeta=1.0):
    """On-ramp inflow R into a merge cell

    R = min{queue, ζ(n̂ − n^k), c} where c = min{q_ramp, q_main}, scaled by the
    meter rate ρ when metered.

    :param float queue: vehicles able to leave the ramp this interval
    :param float mainline_count: vehicles in the merge cell
    :param Road ramp: the on-ramp
    :param Road mainline: the mainline
    :param float rate: meter rate, unmetered when None
    :param float zeta: allocation coefficient ζ
    :rtype: float
    """
    capacity = min(ramp.q_max, mainline.q_max)
    if rate is not None:
        capacity *= rate
    space = zeta * (mainline.n_hat - mainline_count)
    return max(0.0, min(queue, space, capacity))


def compute_offramp_flows(mainline_flows, split_ratios, demand=None, supply=None):
    """Off-ramp outflow S^k = β/(1 − β)·f^{k,k+1}

    :param numpy.ndarray mainline_flows: flows out of the cells
    :param numpy.ndarray split_ratios: β of the same cells
    :param numpy.ndarray demand: exiting demand, needed where β = 1
    :param numpy.ndarray supply: off-ramp supply, needed where β = 1
    :rtype: numpy.ndarray
    :raises ConfigurationError: if a cell has β = 1 and no demand/supply is given
    """
    flows = np.asarray(mainline_flows, dtype=float)
    beta = np.asarray(split_ratios, dtype=float)
    outflow = np.zeros_like(flows)

    full = beta >= 1.0
    if full.any():
        if demand is None or supply is None:
            raise ConfigurationError("split_ratios", "a cell with split ratio 1 needs its off-ramp demand and supply")
        outflow[full] = np.minimum(np.asarray(demand, dtype=float), np.asarray(supply, dtype=float))[full]

    partial = (beta > 0) & ~full
    outflow[partial] = beta[partial] / (1.0 - beta[partial]) * flows[partial]
    return outflow


def compute_ramp_flows(queue, mainline_count, ramp, mainline, rate=None, zeta=1.0, mainline_flow=0.0, split_ratio=0.0):
    """Inflow R of one on-ramp and outflow S of one off-ramp cell

    :returns: (R, S)
    :rtype: tuple
    """
    inflow = compute_onramp_flows(queue, mainline_count, ramp, mainline, rate=rate, zeta=zeta)
    outflow = compute_offramp_flows(np.array([mainline_flow]), np.array([split_ratio]))[0]
    return inflow, float(outflow)


def advance_cells(values, internal, inflow=None, outflow=None, tolerance=FLOW_TOLERANCE):
    """Apply one interval of cell conservation

    Works on counts of shape (K,) and compositions of shape (K, routes) alike.
    ``internal`` holds the K − 1 flows between consecutive cells. ``inflow`` and
    ``outflow`` are the external terms per cell: injections, boundary and ramp
    inflow in; completions, boundary and off-ramp outflow out.

    :raises InvariantError: if a cell would turn negative beyond ``tolerance``
    """
    updated = np.array(values, dtype=float)
    internal = np.asarray(internal, dtype=float)
    if internal.size:
        updated[:-1] -= internal
        updated[1:] += internal
    if inflow is not None:
        updated += inflow
    if outflow is not None:
        updated -= outflow

    if (updated < -tolerance).any():
        raise InvariantError("Cell conservation produced {} vehicles".format(updated.min()))
    return np.maximum(updated, 0.0)


def allocate_road_boundary_flows(demands, supplies):
    """Proportional allocation of sink demands to downstream supplies

    :param dict demands: (sender, receiver) -> D
    :param dict supplies: receiver -> S
    :returns: (sender, receiver) -> φ
    :rtype: dict
    """
    return allocate_proportional(demands, supplies)


@dataclass
class ActmFlows:
    """Flows of one road over one interval, in veh per interval"""

    internal: np.ndarray
    ramp_inflow: np.ndarray
    ramp_outflow: np.ndarray
    split_ratios: np.ndarray
    boundary_inflow: float = 0.0
    boundary_outflow: float = 0.0
    injections: float = 0.0
    completions: float = 0.0
    ramp_limits: dict = field(default_factory=dict)
    offramp_supply: Optional[np.ndarray] = None

    @classmethod
    def idle(cls, num_cells):
        return cls(
            internal=np.zeros(max(0, num_cells - 1)),
            ramp_inflow=np.zeros(num_cells),
            ramp_outflow=np.zeros(num_cells),
            split_ratios=np.zeros(num_cells),
        )


def audit_flows(road, counts, flows, gamma=1.0, zeta=1.0, tolerance=FLOW_TOLERANCE):
    """Check one interval's flows of a road against the ACTM flow constraints

    ``flows.ramp_limits`` maps merge cells to (queue, metered capacity).

    :param Road road: the road
    :param numpy.ndarray counts: vehicles per cell at the start of the interval
    :param ActmFlows flows: the flows
    :raises InvariantError: on the first violated constraint
    """
    counts = np.asarray(counts, dtype=float)
    internal, ramp, beta = flows.internal, flows.ramp_inflow, flows.split_ratios

    def fail(what, cell):
        raise InvariantError("Road '{}' cell {}: {}".format(road.road_id, cell, what))

    for name, values in (("internal", internal), ("ramp inflow", ramp), ("ramp outflow", flows.ramp_outflow)):
        if values.size and values.min() < -tolerance:
            fail("negative {} flow".format(name), int(np.argmin(values)))

    if internal.size:
        tol = tolerance * max(1.0, road.n_hat)
        checks = (
            ("flow above capacity", internal - road.q_max),
            ("flow above sending capacity", internal - (1.0 - beta[:-1]) * (counts[:-1] + gamma * ramp[:-1])),
            (
                "flow above receiving capacity",
                internal - np.maximum(road.wave_ratio * (road.n_hat - counts[1:] - gamma * ramp[1:]), 0.0),
            ),
        )
        for what, excess in checks:
            if excess.max() > tol:
                fail(what, int(np.argmax(excess)))

    for cell, (queue, capacity) in flows.ramp_limits.items():
        space = max(0.0, zeta * (road.n_hat - counts[cell]))
        if ramp[cell] > min(queue, space, capacity) + tolerance:
            message = "ramp inflow {} exceeds min(queue {}, space {}, capacity {})"
            fail(message.format(ramp[cell], queue, space, capacity), cell)

    if flows.offramp_supply is not None:
        excess = flows.ramp_outflow - flows.offramp_supply
        if excess.max() > tolerance:
            fail("off-ramp outflow above off-ramp supply", int(np.argmax(excess)))


@dataclass(frozen=True)
class RoadRoute:
    """How a route uses a road"""

    route: int
    entry_cell: int
    exit_cell: int
    exits_at_sink: bool
    next_vertex: Optional[str]


class RoadDynamics(object):
    """State and per-interval flows of one cell-modeled road

    Routes are indexed locally on the road. Exchanges with other roads and
    regions use vectors over all routes of the simulation.

    An interval runs as: ``begin_interval``, ``enqueue``/``release``, ``complete``,
    ``sink_demands``/``source_supply``, ``take_sink``/``receive``, ``compute_flows``
    (or ``compute_mainline`` for mainlines) and finally ``advance``.
    """

    def __init__(self, road, routes, num_routes, gamma=1.0, zeta=1.0):
        self.road = road
        self.routes = tuple(routes)
        self.num_routes = num_routes
        self.gamma = gamma
        self.zeta = zeta
        self.route_ids = np.array([route.route for route in self.routes], dtype=int)

        num_cells, width = road.num_cells, len(self.routes)
        self.state = CellArray.empty(num_cells, width, road.cell_length, 1.0 if road.kind == ON_RAMP else None)
        self.completing = np.array([route.exits_at_sink and route.next_vertex is None for route in self.routes], bool)
        self.targets = sorted(
            {route.next_vertex for route in self.routes if route.exits_at_sink and route.next_vertex is not None}
        )
        self._target_masks = {
            target: np.array([route.exits_at_sink and route.next_vertex == target for route in self.routes], bool)
            for target in self.targets
        }
        if road.kind == ON_RAMP:
            self.targets = []

        self.exit_masks = np.zeros((num_cells, width), dtype=bool)
        self.diverges = {}
        for index, route in enumerate(self.routes):
            if not route.exits_at_sink:
                self.exit_masks[route.exit_cell, index] = True
                self.diverges[route.exit_cell] = route.next_vertex
        self.merges = {}

        self.queue = np.zeros(width)
        self.vehicle_km = 0.0
        self.begin_interval()

    def attach_onramp(self, cell, ramp_id):
        if self.road.kind != MAINLINE:
            raise ConfigurationError(ramp_id, "on-ramps attach to mainline roads only")
        self.merges[cell] = ramp_id

    def attach_offramp(self, cell, ramp_id):
        if self.road.kind != MAINLINE:
            raise ConfigurationError(ramp_id, "off-ramps attach to mainline roads only")
        self.diverges[cell] = ramp_id

    def reset(self):
        self.state.composition[:] = 0.0
        if self.state.meter_rate is not None:
            self.state.meter_rate = 1.0
        self.queue[:] = 0.0
        self.vehicle_km = 0.0
        self.begin_interval()

    def begin_interval(self):
        num_cells, width = self.state.composition.shape
        self._injection = np.zeros(width)
        self._completion = np.zeros(width)
        self._inflow = np.zeros(width)
        self._sink_out = np.zeros(width)
        self._merge = np.zeros((num_cells, width))
        self._ramp_out = np.zeros((num_cells, width))
        self._internal = np.zeros((max(0, num_cells - 1), width))
        self._sink_mass = {}
        self.flows = ActmFlows.idle(num_cells)

    def to_global(self, local):
        vector = np.zeros(self.num_routes)
        vector[self.route_ids] = local
        return vector

    def to_local(self, vector):
        return np.asarray(vector, dtype=float)[self.route_ids]

    @property
    def counts(self):
        return self.state.counts

    @property
    def total(self):
        return self.state.total

    @property
    def queued(self):
        return float(self.queue.sum())

    @property
    def starts(self):
        """Trip starts per cell during the last interval"""
        values = np.zeros(self.state.num_cells)
        values[0] = self.flows.injections
        return values

    @property
    def ends(self):
        """Trip ends per cell during the last interval"""
        values = np.zeros(self.state.num_cells)
        values[-1] = self.flows.completions
        return values

    def enqueue(self, demand):
        """Add new trips (a vector over all routes) to the origin queue"""
        self.queue += self.to_local(demand)

    def release(self):
        """Move queued trips into the source cell as far as it has room"""
        waiting = self.queue.sum()
        if waiting <= 0:
            return 0.0
        room = max(0.0, self.road.n_hat - self.state.counts[0])
        amount = min(waiting, room)
        self._injection = self.queue * (amount / waiting)
        self.queue = np.maximum(self.queue - self._injection, 0.0)
        self.flows.injections = amount
        return amount

    def complete(self):
        """Remove trips ending in the sink cell

        :returns: completions as a vector over all routes
        """
        self._completion = self.state.composition[-1] * self.completing
        self.flows.completions = float(self._completion.sum())
        return self.to_global(self._completion)

    def sink_demands(self):
        """Sink demand per downstream vertex, split in proportion to the sink composition"""
        sink = self.state.composition[-1]
        masses = {target: float((sink * mask).sum()) for target, mask in self._target_masks.items()}
        masses = {target: mass for target, mass in masses.items() if target in self.targets}
        total = sum(masses.values())
        self._sink_mass = masses
        if total <= 0:
            return {target: 0.0 for target in masses}

        scale = min(1.0, self.road.q_max / total)
        return {target: mass * scale for target, mass in masses.items()}

    def source_supply(self):
        return cell_demand_supply(self.state.counts, self.road, injections=self.flows.injections)[1]

    def take_sink(self, target, amount):
        """Remove ``amount`` vehicles bound to ``target`` from the sink cell

        :returns: the removed composition over all routes
        """
        mass = self._sink_mass.get(target, 0.0)
        if amount <= 0 or mass <= 0:
            return np.zeros(self.num_routes)
        local = self.state.composition[-1] * self._target_masks[target] * min(1.0, amount / mass)
        self._sink_out += local
        self.flows.boundary_outflow += float(local.sum())
        return self.to_global(local)

    def receive(self, composition):
        """Add a boundary inflow (vector over all routes) to the source cell"""
        local = self.to_local(composition)
        self._inflow += local
        self.flows.boundary_inflow += float(local.sum())

    def compute_flows(self, merge=None, offramp_supply=None):
        """Internal flows and off-ramp outflows from the start-of-interval state

        :param numpy.ndarray merge: on-ramp inflow composition per cell, local routes
        :param numpy.ndarray offramp_supply: off-ramp supply per cell, inf where none
        """
        composition = self.state.composition
        counts = composition.sum(axis=1)
        if merge is None:
            merge = np.zeros_like(composition)
        ramp = merge.sum(axis=1)

        blended = composition + self.gamma * merge
        blended_total = blended.sum(axis=1)
        exit_mass = (blended * self.exit_masks).sum(axis=1)
        beta = _safe_ratio(exit_mass, blended_total)

        internal = compute_mainline_flows(counts, self.road, ramp, beta, self.gamma, offramp_supply)
        outflow = np.zeros(self.state.num_cells)
        if internal.size:
            supply = None if offramp_supply is None else offramp_supply[:-1]
            demand = np.minimum(exit_mass[:-1], self.road.q_max)
            outflow[:-1] = compute_offramp_flows(internal, beta[:-1], demand=demand, supply=supply)

        continuing = blended * ~self.exit_masks
        if internal.size:
            self._internal = continuing[:-1] * _safe_ratio(internal, continuing[:-1].sum(axis=1))[:, None]
        self._ramp_out = blended * self.exit_masks * _safe_ratio(outflow, exit_mass)[:, None]
        self._merge = merge

        self.flows.internal = internal
        self.flows.ramp_inflow = ramp
        self.flows.ramp_outflow = outflow
        self.flows.split_ratios = beta
        self.flows.offramp_supply = offramp_supply

    def ramp_available(self):
        """Vehicles an on-ramp can release into the mainline this interval"""
        return float(self._ramp_source().sum())

    def _ramp_source(self):
        source = self.state.composition[-1].copy()
        if self._internal.shape[0]:
            source += self._internal[-1]
        return source

    def take_ramp(self, amount):
        """Remove the on-ramp inflow R from the ramp's sink

        :returns: the removed composition over all routes
        """
        source = self._ramp_source()
        total = source.sum()
        if amount <= 0 or total <= 0:
            return np.zeros(self.num_routes)
        local = source * min(1.0, amount / total)
        self._sink_out += local
        self.flows.boundary_outflow += float(local.sum())
        return self.to_global(local)

    def compute_mainline(self, dynamics):
        """Ramp inflows, internal flows and off-ramp outflows of a mainline

        :param dict dynamics: road id -> RoadDynamics of the attached ramps
        """
        counts = self.state.counts
        merge = np.zeros_like(self.state.composition)
        limits = {}
        for cell, ramp_id in sorted(self.merges.items()):
            ramp = dynamics[ramp_id]
            queue = ramp.ramp_available()
            rate = ramp.state.meter_rate
            amount = compute_onramp_flows(queue, counts[cell], ramp.road, self.road, rate=rate, zeta=self.zeta)
            merge[cell] = self.to_local(ramp.take_ramp(amount))
            limits[cell] = (queue, min(ramp.road.q_max, self.road.q_max) * (1.0 if rate is None else rate))

        supply = np.full(self.state.num_cells, np.inf)
        for cell, ramp_id in self.diverges.items():
            supply[cell] = dynamics[ramp_id].source_supply()

        self.compute_flows(merge, supply)
        self.flows.ramp_limits = limits
        for cell, ramp_id in sorted(self.diverges.items()):
            dynamics[ramp_id].receive(self.to_global(self._ramp_out[cell]))

    def advance(self, audit=False):
        """Apply the interval's flows to the cell state"""
        composition = self.state.composition
        inflow = self._merge.copy()
        inflow[0] += self._injection + self._inflow
        outflow = self._ramp_out.copy()
        outflow[-1] += self._completion + self._sink_out

        if audit:
            audit_flows(self.road, composition.sum(axis=1), self.flows, self.gamma, self.zeta)
            expected = composition.sum() + inflow.sum() - outflow.sum()

        self.state.composition = advance_cells(composition, self._internal, inflow, outflow)
        self.vehicle_km = self.state.cell_length * (self._internal.sum() + outflow.sum())

        if audit:
            self.state.check(self.road.n_hat)
            if abs(self.state.total - expected) > FLOW_TOLERANCE * max(1.0, expected):
                raise InvariantError(
                    "Road '{}' lost vehicles: {} != {}".format(self.road.road_id, self.state.total, expected)
                )

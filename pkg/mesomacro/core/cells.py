# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Cell discretization and per-road cell state"""

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from mesomacro.errors import InvariantError

SECONDS_PER_HOUR = 3600.0
CELL_TOLERANCE = 1e-9


def cell_length_for(v_max, time_step):
    """Cell length in km so that a free-flowing vehicle crosses one cell per interval

    :param float v_max: free-flow speed in km/h
    :param float time_step: interval length in seconds
    :rtype: float
    """
    return v_max * time_step / SECONDS_PER_HOUR


def cell_count(length, cell_length):
    """Number of cells covering a road: the smallest K with K·δ ≥ length"""
    return max(1, int(math.ceil(length / cell_length - CELL_TOLERANCE)))


def per_interval(rate_per_hour, time_step):
    """Convert a veh/h rate to veh per interval"""
    return rate_per_hour * time_step / SECONDS_PER_HOUR


@dataclass
class CellArray:
    """Vehicle state of a cell-modeled road

    Rows of ``composition`` are cells, columns are route indices; the vehicle
    count of a cell is the row sum.
    """

    composition: np.ndarray
    cell_length: float
    meter_rate: Optional[float] = None
    split_ratios: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.split_ratios is None:
            self.split_ratios = np.zeros(self.composition.shape[0])

    @classmethod
    def empty(cls, num_cells, num_routes, cell_length, meter_rate=None):
        return cls(np.zeros((num_cells, num_routes)), cell_length, meter_rate)

    @property
    def counts(self):
        return self.composition.sum(axis=1)

    @property
    def num_cells(self):
        return self.composition.shape[0]

    @property
    def total(self):
        return float(self.composition.sum())

    def check(self, n_hat, tolerance=CELL_TOLERANCE):
        """Raise InvariantError unless every cell holds between 0 and n_hat vehicles"""
        if (self.composition < -tolerance).any():
            raise InvariantError("Negative cell composition: {}".format(self.composition.min()))
        counts = self.counts
        if (counts > n_hat + tolerance).any():
            cell = int(np.argmax(counts))
            raise InvariantError("Cell {} holds {} vehicles above jam count {}".format(cell, counts[cell], n_hat))

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Macroscopic fundamental diagram speed functions"""

from dataclasses import dataclass
import math
from typing import Optional

TOPOLOGY_SPEED_SCALE = 53.874  # km/h
TOPOLOGY_JUNCTION_DECAY = 0.077  # per junction/km
TOPOLOGY_DENSITY_SCALE = 3.161e6


def underwood_speed(accumulation, mfd):
    """Underwood speed of a region

    :param float accumulation: vehicles in the region
    :param MfdParams mfd: an Underwood-form MFD
    :returns: space-mean speed in km/h
    :rtype: float
    :raises ValueError: if the accumulation is negative
    """
    if accumulation < 0:
        raise ValueError("Negative accumulation: {}".format(accumulation))

    return mfd.v_free * math.exp(-accumulation / mfd.critical_accumulation)


def mfd_from_topology(density, junction_density, degree_density):
    """Speed from a topology-calibrated MFD

    :param float density: vehicle density in veh/km
    :param float junction_density: junctions per km
    :param float degree_density: average node degree per km²
    :returns: space-mean speed in km/h
    :rtype: float
    :raises ValueError: on negative inputs or a zero degree density
    """
    if density < 0 or junction_density < 0 or degree_density < 0:
        raise ValueError(
            "Topology MFD inputs must be non-negative: k={}, gamma={}, deg={}".format(
                density, junction_density, degree_density
            )
        )
    if degree_density == 0:
        raise ValueError("Topology MFD needs a positive degree density")

    return (
        TOPOLOGY_SPEED_SCALE
        * math.exp(-TOPOLOGY_JUNCTION_DECAY * junction_density)
        * math.exp(-density / (TOPOLOGY_DENSITY_SCALE / degree_density))
    )


@dataclass(frozen=True)
class MfdParams:
    """MFD of a bathtub region, either in Underwood or in topology form"""

    v_free: Optional[float] = None
    critical_accumulation: Optional[float] = None
    junction_density: Optional[float] = None
    degree_density: Optional[float] = None

    def __post_init__(self):
        if self.is_topology:
            if self.junction_density < 0 or self.degree_density <= 0:
                raise ValueError("Topology MFD needs junction_density >= 0 and degree_density > 0")
        else:
            if self.v_free is None or self.critical_accumulation is None:
                raise ValueError("Underwood MFD needs v_free and critical_accumulation")
            if self.v_free <= 0 or self.critical_accumulation <= 0:
                raise ValueError("Underwood MFD needs v_free > 0 and critical_accumulation > 0")

    @property
    def is_topology(self):
        return self.junction_density is not None or self.degree_density is not None

    @property
    def free_speed(self):
        """Speed of an empty region in km/h"""
        if self.is_topology:
            return mfd_from_topology(0.0, self.junction_density, self.degree_density)

        return self.v_free

    def speed(self, accumulation, total_length):
        """Speed for an accumulation in a region with ``total_length`` km of road

        The Underwood form works on accumulation directly; the topology form
        converts to density first.
        """
        if self.is_topology:
            if accumulation < 0:
                raise ValueError("Negative accumulation: {}".format(accumulation))
            return mfd_from_topology(accumulation / total_length, self.junction_density, self.degree_density)

        return underwood_speed(accumulation, self)

    def critical(self, total_length):
        """Accumulation of maximum regional flow N·v(N)"""
        if self.is_topology:
            return TOPOLOGY_DENSITY_SCALE / self.degree_density * total_length

        return self.critical_accumulation

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Network, cells and MFD shared by the freeway and urban models"""

from mesomacro.core.cells import CellArray, cell_count, cell_length_for, per_interval
from mesomacro.core.config import load_network_config, parse_network_config
from mesomacro.core.mfd import MfdParams, mfd_from_topology, underwood_speed
from mesomacro.core.network import Network, RegionSpec, Road, partition_network

__all__ = [
    "CellArray",
    "MfdParams",
    "Network",
    "RegionSpec",
    "Road",
    "cell_count",
    "cell_length_for",
    "load_network_config",
    "mfd_from_topology",
    "parse_network_config",
    "partition_network",
    "per_interval",
    "underwood_speed",
]

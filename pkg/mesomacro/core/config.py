# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Network configuration parsing and validation"""

from collections import Counter
import logging
import math

import yaml

from mesomacro.core.cells import cell_length_for, per_interval
from mesomacro.core.mfd import MfdParams
from mesomacro.core.network import (
    CELL_ROAD_KINDS,
    MAINLINE,
    OFF_RAMP,
    ON_RAMP,
    ROAD_KINDS,
    Network,
    RegionSpec,
    Road,
    longest_road_chain,
)
from mesomacro.errors import ConfigurationError, ValidationError

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

TOP_LEVEL_FIELDS = frozenset(
    ["name", "time_step", "nodes", "roads", "regions", "freeway_region", "agents", "demand", "simulation"]
)
ROAD_FIELDS = frozenset(
    ["id", "head", "tail", "kind", "length", "v_max", "w", "q_max", "jam_density", "lanes", "attach"]
)
ATTACH_FIELDS = frozenset(["road", "position"])
REGION_FIELDS = frozenset(["id", "nodes", "mfd", "total_length", "longest_route"])
MFD_FIELDS = frozenset(["v_free", "critical_accumulation", "junction_density", "degree_density"])
FREEWAY_FIELDS = frozenset(["id", "nodes"])
AGENT_FIELDS = frozenset(["ramps", "perimeters"])

ATTACH_TOLERANCE = 1e-9


def read_yaml(path):
    """Read a YAML document

    :raises IOError: if the file cannot be read, with the path in the message
    """
    try:
        with open(path, "r") as config_file:
            return yaml.safe_load(config_file)
    except (IOError, OSError) as err:
        raise IOError("Cannot read configuration '{}': {}".format(path, err))
    except yaml.YAMLError as err:
        raise ConfigurationError(str(path), "invalid YAML: {}".format(err))


def check_fields(data, allowed, path):
    """Reject anything but a mapping restricted to ``allowed`` keys"""
    if not isinstance(data, dict):
        raise ConfigurationError(path, "expected a mapping")
    unknown = sorted(str(key) for key in set(data) - set(allowed))
    if unknown:
        raise ConfigurationError("{}.{}".format(path, unknown[0]) if path else unknown[0], "unknown field")


def require(data, key, path):
    if key not in data or data[key] is None:
        raise ConfigurationError("{}.{}".format(path, key) if path else key, "missing required field")
    return data[key]


def number(data, key, path, default=None, minimum=None, strict=True):
    """Read a numeric field, optionally bounded from below"""
    field = "{}.{}".format(path, key) if path else key
    if key not in data or data[key] is None:
        if default is None:
            raise ConfigurationError(field, "missing required field")
        return default

    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(field, "expected a number, got {!r}".format(value))
    value = float(value)
    if not math.isfinite(value):
        raise ConfigurationError(field, "must be finite")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        raise ConfigurationError(field, "must be {} {}".format(">" if strict else ">=", minimum))
    return value


def id_list(data, key, path):
    field = "{}.{}".format(path, key) if path else key
    values = data.get(key) or []
    if not isinstance(values, list):
        raise ConfigurationError(field, "expected a list")
    return [str(value) for value in values]


def _parse_mfd(data, path):
    check_fields(data, MFD_FIELDS, path)
    if "junction_density" in data or "degree_density" in data:
        return MfdParams(
            junction_density=number(data, "junction_density", path, minimum=0.0, strict=False),
            degree_density=number(data, "degree_density", path, minimum=0.0),
        )

    return MfdParams(
        v_free=number(data, "v_free", path, minimum=0.0),
        critical_accumulation=number(data, "critical_accumulation", path, minimum=0.0),
    )


def _check_partition(nodes, region_nodes):
    counts = Counter(node for members in region_nodes.values() for node in members)
    duplicated = sorted(node for node, count in counts.items() if count > 1)
    if duplicated:
        raise ValidationError("regions", "nodes assigned to more than one region", duplicated)

    undeclared = sorted(set(counts) - set(nodes))
    if undeclared:
        raise ValidationError("regions", "region nodes missing from 'nodes'", undeclared)

    uncovered = sorted(set(nodes) - set(counts))
    if uncovered:
        raise ValidationError("regions", "nodes not covered by any region", uncovered)


def _parse_road(data, index, time_step, nodes):
    path = "roads[{}]".format(index)
    check_fields(data, ROAD_FIELDS, path)

    kind = str(require(data, "kind", path))
    if kind not in ROAD_KINDS:
        raise ConfigurationError(path + ".kind", "expected one of {}".format(", ".join(ROAD_KINDS)))

    for endpoint in ("head", "tail"):
        if str(require(data, endpoint, path)) not in nodes:
            raise ConfigurationError("{}.{}".format(path, endpoint), "unknown node '{}'".format(data[endpoint]))

    length = number(data, "length", path, minimum=0.0)
    v_max = number(data, "v_max", path, minimum=0.0)
    w = number(data, "w", path, minimum=0.0)
    if w > v_max:
        raise ConfigurationError(path + ".w", "spillback speed exceeds v_max")
    lanes = int(number(data, "lanes", path, default=1.0, minimum=0.0))
    q_max = per_interval(number(data, "q_max", path, minimum=0.0) * lanes, time_step)
    jam_density = number(data, "jam_density", path, minimum=0.0)

    if kind in CELL_ROAD_KINDS:
        cell_length = cell_length_for(v_max, time_step)
    else:
        cell_length = length

    if kind in (ON_RAMP, OFF_RAMP):
        attach = require(data, "attach", path)
        check_fields(attach, ATTACH_FIELDS, path + ".attach")
        attach_road = str(require(attach, "road", path + ".attach"))
        attach_position = number(attach, "position", path + ".attach", minimum=0.0, strict=False)
    elif "attach" in data:
        raise ConfigurationError(path + ".attach", "only ramps attach to a mainline")
    else:
        attach_road, attach_position = None, None

    road = dict(
        road_id=str(require(data, "id", path)),
        head=str(data["head"]),
        tail=str(data["tail"]),
        kind=kind,
        length=length,
        v_max=v_max,
        w=w,
        q_max=q_max,
        n_hat=jam_density * lanes * cell_length,
        lanes=lanes,
        cell_length=cell_length,
        attach_road=attach_road,
    )
    return road, attach_position


def _resolve_attachments(raw_roads, positions):
    """Turn ramp attach positions into mainline cell indices"""
    by_id = {road["road_id"]: road for road in raw_roads}
    used = {}
    for index, road in enumerate(raw_roads):
        if road["attach_road"] is None:
            road["attach_cell"] = None
            continue

        path = "roads[{}].attach".format(index)
        mainline = by_id.get(road["attach_road"])
        if mainline is None or mainline["kind"] != MAINLINE:
            raise ConfigurationError(path + ".road", "'{}' is not a mainline road".format(road["attach_road"]))

        num_cells = max(1, int(math.ceil(mainline["length"] / mainline["cell_length"] - ATTACH_TOLERANCE)))
        cell = int(math.floor(positions[index] / mainline["cell_length"] + ATTACH_TOLERANCE))
        if not 0 < cell < num_cells - 1:
            raise ConfigurationError(path + ".position", "ramps cannot attach to a source or sink cell")

        key = (mainline["road_id"], cell)
        if key in used:
            raise ConfigurationError(path + ".position", "cell {} already used by '{}'".format(cell, used[key]))
        used[key] = road["road_id"]
        road["attach_cell"] = cell


def _parse_agents(data, roads, bathtub_ids):
    check_fields(data, AGENT_FIELDS, "agents")
    ramps = id_list(data, "ramps", "agents")
    perimeters = id_list(data, "perimeters", "agents")

    for index, ramp in enumerate(ramps):
        if ramp not in roads or roads[ramp].kind != ON_RAMP:
            raise ConfigurationError("agents.ramps[{}]".format(index), "'{}' is not an on-ramp".format(ramp))
    for index, region in enumerate(perimeters):
        if region not in bathtub_ids:
            field = "agents.perimeters[{}]".format(index)
            raise ConfigurationError(field, "'{}' is not a bathtub region".format(region))

    duplicated = sorted(agent for agent, count in Counter(ramps + perimeters).items() if count > 1)
    if duplicated:
        raise ValidationError("agents", "agents declared twice", duplicated)
    return tuple(ramps), tuple(perimeters)


def parse_network_config(data, source="<config>"):
    """Build a Network from an already parsed configuration mapping

    :param dict data: the configuration document
    :param str source: description used in log messages
    :returns: validated network
    :rtype: Network
    :raises ConfigurationError: on schema violations, naming the offending field
    :raises ValidationError: on partition violations
    """
    check_fields(data, TOP_LEVEL_FIELDS, "")
    time_step = number(data, "time_step", "", default=1.0, minimum=0.0)

    nodes = id_list(data, "nodes", "")
    if not nodes:
        raise ConfigurationError("nodes", "at least one node is required")
    duplicated_nodes = sorted(node for node, count in Counter(nodes).items() if count > 1)
    if duplicated_nodes:
        raise ValidationError("nodes", "duplicated node ids", duplicated_nodes)
    node_set = frozenset(nodes)

    raw_regions = data.get("regions") or []
    if not isinstance(raw_regions, list):
        raise ConfigurationError("regions", "expected a list")
    freeway = data.get("freeway_region")

    region_nodes = {}
    for index, region in enumerate(raw_regions):
        check_fields(region, REGION_FIELDS, "regions[{}]".format(index))
        region_id = str(require(region, "id", "regions[{}]".format(index)))
        if region_id in region_nodes:
            raise ValidationError("regions", "duplicated region ids", [region_id])
        region_nodes[region_id] = id_list(region, "nodes", "regions[{}]".format(index))
    if freeway is not None:
        check_fields(freeway, FREEWAY_FIELDS, "freeway_region")
        freeway_id = str(require(freeway, "id", "freeway_region"))
        if freeway_id in region_nodes:
            raise ValidationError("freeway_region", "duplicated region ids", [freeway_id])
        region_nodes[freeway_id] = id_list(freeway, "nodes", "freeway_region")
    _check_partition(nodes, region_nodes)
    node_region = {node: region_id for region_id, members in region_nodes.items() for node in members}

    raw_road_list = data.get("roads") or []
    if not isinstance(raw_road_list, list):
        raise ConfigurationError("roads", "expected a list")
    raw_roads, positions = [], []
    for index, road in enumerate(raw_road_list):
        parsed, position = _parse_road(road, index, time_step, node_set)
        raw_roads.append(parsed)
        positions.append(position)

    road_ids = [road["road_id"] for road in raw_roads]
    duplicated_roads = sorted(road for road, count in Counter(road_ids).items() if count > 1)
    if duplicated_roads:
        raise ValidationError("roads", "duplicated road ids", duplicated_roads)
    clashes = sorted(set(road_ids) & set(region_nodes))
    if clashes:
        raise ValidationError("roads", "road ids clash with region ids", clashes)

    freeway_id = str(freeway["id"]) if freeway is not None else None
    for index, road in enumerate(raw_roads):
        head_region, tail_region = node_region[road["head"]], node_region[road["tail"]]
        if road["kind"] in CELL_ROAD_KINDS and head_region == tail_region and head_region != freeway_id:
            raise ConfigurationError(
                "roads[{}]".format(index), "cell-modeled road lies inside bathtub region '{}'".format(head_region)
            )
        if road["kind"] not in CELL_ROAD_KINDS and freeway_id in (head_region, tail_region):
            raise ConfigurationError("roads[{}]".format(index), "urban road touches the freeway region")

    _resolve_attachments(raw_roads, positions)
    roads = tuple(Road(**road) for road in raw_roads)
    road_map = {road.road_id: road for road in roads}

    regions = []
    for index, region in enumerate(raw_regions):
        path = "regions[{}]".format(index)
        region_id = str(region["id"])
        internal = [
            road for road in roads if node_region[road.head] == region_id and node_region[road.tail] == region_id
        ]
        jam_accumulation = sum(road.jam_vehicles for road in internal)
        if jam_accumulation <= 0:
            raise ConfigurationError(path + ".nodes", "region '{}' has no internal roads".format(region_id))
        total_length = number(region, "total_length", path, default=sum(road.length for road in internal), minimum=0.0)
        chain = min(longest_road_chain(internal), total_length)
        longest_route = number(region, "longest_route", path, default=chain, minimum=0.0)
        if longest_route > total_length:
            raise ConfigurationError(path + ".longest_route", "exceeds total_length")
        regions.append(
            RegionSpec(
                region_id=region_id,
                nodes=frozenset(region_nodes[region_id]),
                total_length=total_length,
                longest_route=longest_route,
                jam_accumulation=jam_accumulation,
                mfd=_parse_mfd(require(region, "mfd", path), path + ".mfd"),
            )
        )

    freeway_region_index = None
    if freeway is not None:
        freeway_region_index = len(regions)
        regions.append(RegionSpec(region_id=freeway_id, nodes=frozenset(region_nodes[freeway_id])))

    bathtub_ids = set(str(region["id"]) for region in raw_regions)
    ramp_agents, perimeter_agents = _parse_agents(data.get("agents") or {}, road_map, bathtub_ids)

    network = Network(
        time_step=time_step,
        nodes=node_set,
        roads=roads,
        regions=tuple(regions),
        freeway_region_index=freeway_region_index,
        ramp_agents=ramp_agents,
        perimeter_agents=perimeter_agents,
    )
    logger.info(
        "Loaded network %s: %d nodes, %d roads, %d regions, %d agents",
        source,
        len(node_set),
        len(roads),
        len(regions),
        len(network.agent_ids),
    )
    return network


def load_network_config(path):
    """Load and validate a network configuration file

    :param str path: YAML file with nodes, roads, regions, freeway region and agents
    :returns: validated network
    :rtype: Network
    """
    return parse_network_config(read_yaml(path), source=str(path))

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Basic unittests for network configuration parsing"""

import unittest

import pytest

from mesomacro.core.cells import cell_count, cell_length_for
from mesomacro.core.config import load_network_config, parse_network_config
from mesomacro.core.network import BOUNDARY, MERGE, Road, longest_road_chain, partition_network
from mesomacro.errors import ConfigurationError, ValidationError
from mesomacro.scenario import builtin_path
from tests.utils import toy_config


def roads_with(road_id, **changes):
    config = toy_config()
    for road in config["roads"]:
        if road["id"] == road_id:
            road.update(changes)
    return config


class TestNetworkConfig(unittest.TestCase):
    def setUp(self):
        self.network = parse_network_config(toy_config(), source="toy")

    def test_regions(self):
        assert [region.region_id for region in self.network.bathtub_regions] == ["A", "B"]
        assert self.network.freeway_region.region_id == "F"
        assert self.network.region("A").jam_accumulation == pytest.approx(200.0)

    def test_cells(self):
        mainline = self.network.road("FW")
        assert mainline.cell_length == pytest.approx(0.025)
        assert mainline.num_cells == 10
        assert mainline.n_hat == pytest.approx(150.0 * 2 * 0.025)
        assert mainline.q_max == pytest.approx(2000.0 * 2 / 3600.0)

    def test_attachment(self):
        ramp = self.network.road("ON")
        assert ramp.num_cells == 4
        assert ramp.attach_road == "FW"
        assert ramp.attach_cell == 4

    def test_agents(self):
        assert self.network.agent_ids == ("ON", "B")

    def test_margins(self):
        assert self.network.inflow_margin("B") == pytest.approx(0.25 + 4000.0 / 3600.0)

    def test_partition(self):
        graph = partition_network(self.network)
        assert graph.edges["A", "B"]["kind"] == BOUNDARY
        assert graph.edges["A", "B"]["capacity"] == pytest.approx(0.25)
        assert graph.edges["ON", "FW"]["kind"] == MERGE
        assert graph.edges["ON", "FW"]["cell"] == 4
        assert graph.has_edge("FW", "B")


class TestsNetworkConfigErrors(object):
    def test_unknown_field(self):
        with pytest.raises(ConfigurationError) as err:
            parse_network_config(roads_with("FW", speed=3.0))
        assert err.value.field == "roads[0].speed"

    def test_missing_field(self):
        config = toy_config()
        del config["roads"][0]["v_max"]
        with pytest.raises(ConfigurationError) as err:
            parse_network_config(config)
        assert err.value.field == "roads[0].v_max"

    def test_negative_length(self):
        with pytest.raises(ConfigurationError) as err:
            parse_network_config(roads_with("FW", length=-1.0))
        assert err.value.field == "roads[0].length"

    def test_spillback_above_free_flow(self):
        with pytest.raises(ConfigurationError):
            parse_network_config(roads_with("FW", w=100.0))

    def test_duplicated_region_node(self):
        config = toy_config()
        config["regions"][1]["nodes"].append("a1")
        with pytest.raises(ValidationError) as err:
            parse_network_config(config)
        assert err.value.items == ("a1",)

    def test_uncovered_node(self):
        config = toy_config()
        config["nodes"].append("lonely")
        with pytest.raises(ValidationError) as err:
            parse_network_config(config)
        assert err.value.items == ("lonely",)

    def test_ramp_at_source_cell(self):
        with pytest.raises(ConfigurationError) as err:
            parse_network_config(roads_with("ON", attach={"road": "FW", "position": 0.0}))
        assert err.value.field == "roads[1].attach.position"

    def test_ramp_at_sink_cell(self):
        with pytest.raises(ConfigurationError):
            parse_network_config(roads_with("ON", attach={"road": "FW", "position": 0.24}))

    def test_cell_road_inside_region(self):
        with pytest.raises(ConfigurationError):
            parse_network_config(roads_with("FW", tail="a2"))

    def test_perimeter_agent_on_road(self):
        config = toy_config(agents={"ramps": ["ON"], "perimeters": ["FW"]})
        with pytest.raises(ConfigurationError) as err:
            parse_network_config(config)
        assert err.value.field == "agents.perimeters[0]"

    def test_ramp_agent_on_mainline(self):
        with pytest.raises(ConfigurationError):
            parse_network_config(toy_config(agents={"ramps": ["FW"]}))


def urban_road(road_id, head, tail, length):
    return Road(
        road_id=road_id,
        head=head,
        tail=tail,
        kind="urban",
        length=length,
        v_max=50.0,
        w=20.0,
        q_max=0.25,
        n_hat=100.0 * length,
        lanes=1,
        cell_length=length,
    )


class TestsLongestRoute(object):
    def test_chain(self):
        roads = [
            urban_road("ab", "a", "b", 1.0),
            urban_road("bc", "b", "c", 2.0),
            urban_road("ac", "a", "c", 2.5),
            urban_road("ca", "c", "a", 1.5),
        ]
        assert longest_road_chain(roads) == pytest.approx(3.5)
        assert longest_road_chain(roads[:3]) == pytest.approx(3.0)
        assert longest_road_chain([]) == 0.0

    def test_parallel_roads(self):
        assert longest_road_chain([urban_road("x", "a", "b", 1.0), urban_road("y", "a", "b", 1.5)]) == 1.5

    def test_default_from_internal_roads(self):
        config = roads_with("UA", length=1.5)
        del config["regions"][0]["total_length"]
        del config["regions"][0]["longest_route"]
        region = parse_network_config(config).region("A")
        assert region.total_length == pytest.approx(2.5)
        assert region.longest_route == pytest.approx(1.5)

    def test_default_bounded_by_total_length(self):
        config = toy_config()
        config["regions"][0]["total_length"] = 0.75
        del config["regions"][0]["longest_route"]
        assert parse_network_config(config).region("A").longest_route == pytest.approx(0.75)


class TestsCells(object):
    def test_cell_length(self):
        assert cell_length_for(90.0, 1.0) == pytest.approx(0.025)

    def test_cell_count_rounds_up(self):
        assert cell_count(0.26, 0.025) == 11
        assert cell_count(0.01, 0.025) == 1


class TestsBuiltinNetwork(object):
    def test_small_network(self):
        network = load_network_config(builtin_path("builtin-small"))
        assert len(network.roads) == 34
        assert len(network.regions) == 5
        assert len(network.agent_ids) == 8
        assert network.road("FW1").num_cells == 120
        assert network.road("ON1").attach_cell == 40

    def test_missing_file(self):
        with pytest.raises(IOError):
            load_network_config("/nonexistent/network.yaml")

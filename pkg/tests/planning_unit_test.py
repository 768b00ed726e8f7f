# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Basic unittests for trip planning"""

import unittest

import numpy as np
import pytest

from mesomacro.errors import PlanningError
from mesomacro.planning import REGION_LEG, ROAD_LEG, Route, TripCohort, plan_trip
from tests.utils import toy_config, toy_scenario


class TestPlanTrip(unittest.TestCase):
    def setUp(self):
        self.scenario = toy_scenario()
        self.network = self.scenario.network

    def plan(self, origin, destination, rng=None):
        return plan_trip(origin, destination, self.network, self.scenario.adjacency, rng=rng)

    def test_through_the_ramp(self):
        legs = self.plan("A", "B")
        assert [leg.vertex for leg in legs] == ["A", "ON", "FW", "B"]
        assert [leg.kind for leg in legs] == [REGION_LEG, ROAD_LEG, ROAD_LEG, REGION_LEG]

    def test_partial_mainline(self):
        ramp, mainline = self.plan("A", "B")[1:3]
        assert ramp.distance == pytest.approx(0.05)
        assert ramp.exits_at_sink
        assert mainline.entry_cell == 4
        assert mainline.exit_cell == 9
        assert mainline.exits_at_sink
        assert mainline.distance == pytest.approx(0.15)

    def test_mean_region_distance(self):
        legs = self.plan("B", "A")
        assert [leg.vertex for leg in legs] == ["B", "A"]
        assert legs[1].distance == pytest.approx(0.5)

    def test_sampled_region_distance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            distance = self.plan("B", "A", rng)[0].distance
            assert 0.25 <= distance <= 0.75

    def test_free_flow_time(self):
        route = Route(index=0, origin="A", destination="B", od_index=0, variant=0, legs=self.plan("A", "B"))
        assert route.free_flow_time(self.network) == pytest.approx(60.0 + 4.0 + 6.0 + 60.0)
        assert route.next_vertex(1) == "FW"
        assert route.next_vertex(3) is None

    def test_unknown_vertex(self):
        with pytest.raises(PlanningError):
            self.plan("A", "Z")


class TestsRoutes(object):
    def test_variants(self):
        routes = toy_scenario().routes
        assert len(routes) == 4
        assert [(route.od_index, route.variant) for route in routes] == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert [route.index for route in routes] == [0, 1, 2, 3]

    def test_routes_are_seeded(self):
        first = [route.legs for route in toy_scenario().routes]
        second = [route.legs for route in toy_scenario().routes]
        assert first == second

    def test_unconnected_pair(self):
        config = toy_config()
        config["roads"] = [road for road in config["roads"] if road["id"] != "BBA"]
        with pytest.raises(PlanningError):
            toy_scenario(roads=config["roads"]).routes


class TestsTripCohort(object):
    def test_inject_and_complete(self):
        cohort = TripCohort(path=())
        cohort.inject(2.0, 5)
        cohort.inject(1.0, 6)
        cohort.complete(1.5, 20)
        assert cohort.start_time == 5
        assert cohort.size == 3.0
        assert cohort.injection_time == 16.0
        assert cohort.completed == 1.5
        assert cohort.completion_time == 30.0
        assert cohort.mean_travel_time is None

    def test_mean_travel_time(self):
        cohort = TripCohort(path=())
        cohort.inject(2.0, 0)
        cohort.inject(2.0, 10)
        cohort.complete(2.0, 30)
        cohort.complete(2.0, 40)
        assert cohort.drained
        assert cohort.mean_travel_time == pytest.approx(30.0)

    def test_completion_bounded_by_size(self):
        cohort = TripCohort(path=(), size=1.0)
        cohort.complete(2.0, 1)
        assert cohort.completed == 1.0
        assert cohort.completion_time == 1.0
        cohort.complete(1.0, 2)
        assert cohort.completion_time == 1.0

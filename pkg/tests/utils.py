# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Test helpers and data"""

import copy

from mesomacro.core.mfd import MfdParams
from mesomacro.core.network import MAINLINE, RegionSpec, Road
from mesomacro.scenario import parse_scenario


def _urban(road_id, head, tail):
    return {
        "id": road_id,
        "kind": "urban",
        "head": head,
        "tail": tail,
        "length": 1.0,
        "v_max": 50.0,
        "w": 20.0,
        "q_max": 900.0,
        "jam_density": 100.0,
        "lanes": 1,
    }

# Two regions A and B joined by urban boundary roads and a 10-cell freeway
# FW from A to B; the on-ramp ON leaves A and merges into FW at cell 4.
TOY_NETWORK = {
    "name": "toy",
    "time_step": 1.0,
    "nodes": ["a1", "a2", "b1", "b2", "m1"],
    "freeway_region": {"id": "F", "nodes": ["m1"]},
    "regions": [
        {
            "id": "A",
            "nodes": ["a1", "a2"],
            "mfd": {"v_free": 30.0, "critical_accumulation": 50.0},
            "total_length": 2.0,
            "longest_route": 1.0,
        },
        {
            "id": "B",
            "nodes": ["b1", "b2"],
            "mfd": {"v_free": 30.0, "critical_accumulation": 50.0},
            "total_length": 2.0,
            "longest_route": 1.0,
        },
    ],
    "roads": [
        {
            "id": "FW",
            "kind": "mainline",
            "head": "a1",
            "tail": "b2",
            "length": 0.25,
            "v_max": 90.0,
            "w": 30.0,
            "q_max": 2000.0,
            "jam_density": 150.0,
            "lanes": 2,
        },
        {
            "id": "ON",
            "kind": "on_ramp",
            "head": "a2",
            "tail": "m1",
            "length": 0.05,
            "v_max": 45.0,
            "w": 15.0,
            "q_max": 1800.0,
            "jam_density": 150.0,
            "lanes": 1,
            "attach": {"road": "FW", "position": 0.1},
        },
    ]
    + [
        _urban(road_id, head, tail)
        for road_id, head, tail in (
            ("UA", "a1", "a2"),
            ("UA2", "a2", "a1"),
            ("UB", "b1", "b2"),
            ("UB2", "b2", "b1"),
            ("BAB", "a2", "b1"),
            ("BBA", "b1", "a2"),
        )
    ],
    "agents": {"ramps": ["ON"], "perimeters": ["B"]},
    "simulation": {"decision_interval": 10, "route_variants": 2},
    "demand": {
        "total": 200.0,
        "duration": 120.0,
        "noise": 0.1,
        "ratio_curve": [[0.0, 1.0], [1.0, 1.0]],
        "od": [
            {"origin": "A", "destination": "B", "share": 1.0},
            {"origin": "B", "destination": "A", "share": 0.5},
        ],
    },
}


def toy_config(**overrides):
    """A deep copy of the toy network document with top-level overrides"""
    config = copy.deepcopy(TOY_NETWORK)
    config.update(copy.deepcopy(overrides))
    return config


def toy_scenario(**overrides):
    return parse_scenario(toy_config(**overrides), source="toy")


def three_cell_road(q_max=0.5, n_hat=3.0):
    """A 3-cell mainline of 25 m cells at 90 km/h with w/v = 1/3"""
    return Road(
        road_id="M",
        head="a",
        tail="b",
        kind=MAINLINE,
        length=0.075,
        v_max=90.0,
        w=30.0,
        q_max=q_max,
        n_hat=n_hat,
        lanes=1,
        cell_length=0.025,
    )


def single_region(jam_accumulation=200.0):
    return RegionSpec(
        region_id="R",
        nodes=frozenset(["r"]),
        total_length=2.0,
        longest_route=1.0,
        jam_accumulation=jam_accumulation,
        mfd=MfdParams(v_free=30.0, critical_accumulation=50.0),
    )

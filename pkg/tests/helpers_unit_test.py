# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Basic unittests for the simulation helpers"""

import math
from unittest.mock import patch

import pytest

from mesomacro.errors import InvariantError
from mesomacro.helpers import (
    ConservationChecker,
    DrainCondition,
    allocate_proportional,
    env_flag,
    env_int,
    format_mean_std,
    mean_std,
)


class TestsDrainCondition(object):
    __test__ = True

    def test_within_horizon(self):
        cond = DrainCondition(10)
        assert cond(0, 0.0)
        assert cond(9, 0.0)

    def test_drains_while_running(self):
        cond = DrainCondition(10)
        assert cond(10, 5.0)
        assert not cond(10, 0.5)

    def test_cap(self):
        cond = DrainCondition(10)
        assert cond.cap == 20
        assert not cond(20, 100.0)

    def test_no_drain(self):
        cond = DrainCondition(10, drain=False)
        assert cond(9, 100.0)
        assert not cond(10, 100.0)


def run_check(steps):
    checker = ConservationChecker()
    for injected, running, completed in steps:
        checker(injected, running, completed)


class TestsConservation(object):
    def test_simple(self):
        run_check([(1.0, 1.0, 0.0), (3.0, 2.5, 0.5), (3.0, 1.0, 2.0)])

    def test_lost_vehicles(self):
        with pytest.raises(InvariantError):
            run_check([(1.0, 1.0, 0.0), (3.0, 2.0, 0.5)])

    def test_decreasing_completions(self):
        with pytest.raises(InvariantError):
            run_check([(2.0, 1.0, 1.0), (2.0, 1.5, 0.5)])

    def test_within_tolerance(self):
        run_check([(1.0, 1.0 - 1e-9, 0.0)])


class TestsAllocateProportional(object):
    def test_enough_supply(self):
        flows = allocate_proportional({("a", "c"): 1.0, ("b", "c"): 2.0}, {"c": 5.0})
        assert flows == {("a", "c"): 1.0, ("b", "c"): 2.0}

    def test_scaled_by_supply(self):
        flows = allocate_proportional({("a", "c"): 1.0, ("b", "c"): 3.0}, {"c": 2.0})
        assert flows[("a", "c")] == pytest.approx(0.5)
        assert flows[("b", "c")] == pytest.approx(1.5)

    def test_missing_receiver(self):
        assert allocate_proportional({("a", "x"): 1.0}, {}) == {("a", "x"): 0.0}

    def test_negative_demand(self):
        with pytest.raises(ValueError):
            allocate_proportional({("a", "c"): -1.0}, {"c": 1.0})


class TestsStatistics(object):
    def test_mean_std(self):
        assert mean_std([1.0, 3.0]) == (2.0, 1.0)

    def test_empty(self):
        mean, std = mean_std([])
        assert math.isnan(mean) and math.isnan(std)

    def test_format(self):
        assert format_mean_std([1.0, 3.0]) == "2.00±1.00"


class TestsEnvironment(object):
    def test_env_int(self):
        with patch.dict("os.environ", {"MESOMACRO_WORKERS": "3"}):
            assert env_int("MESOMACRO_WORKERS", 1) == 3
        with patch.dict("os.environ", {}, clear=True):
            assert env_int("MESOMACRO_WORKERS", 1) == 1

    def test_env_flag(self):
        with patch.dict("os.environ", {"MESOMACRO_AUDIT": "yes"}):
            assert env_flag("MESOMACRO_AUDIT")
        with patch.dict("os.environ", {"MESOMACRO_AUDIT": "0"}):
            assert not env_flag("MESOMACRO_AUDIT")

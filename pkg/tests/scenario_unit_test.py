# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
import pytest

from mesomacro.errors import ConfigurationError
from mesomacro.scenario import (
    BUILTIN_SMALL,
    CONTROL_NONE,
    CONTROL_PERIMETER,
    CONTROL_RAMP,
    load_scenario,
    parse_simulation_settings,
)
from tests.utils import toy_scenario


class TestsScenario(object):
    def test_toy_settings(self):
        scenario = toy_scenario()
        assert scenario.horizon == 120
        assert scenario.decision_steps == 10
        assert scenario.drain_cap == 240

    def test_desk_scale(self):
        scenario = toy_scenario().desk_scale(4.0, duration=60.0)
        assert scenario.demand.total == pytest.approx(50.0)
        assert scenario.horizon == 60

    def test_invalid_desk_scale(self):
        with pytest.raises(ConfigurationError):
            toy_scenario().desk_scale(0.0)

    @pytest.mark.parametrize(
        "control, agents", [(CONTROL_RAMP, ("ON",)), (CONTROL_PERIMETER, ("B",)), (CONTROL_NONE, ())]
    )
    def test_with_control(self, control, agents):
        assert toy_scenario().with_control(control).network.agent_ids == agents

    def test_unknown_control(self):
        with pytest.raises(ConfigurationError):
            toy_scenario().with_control("everything")

    def test_settings_defaults(self):
        settings = parse_simulation_settings({})
        assert settings.decision_interval == 30.0
        assert settings.rate_bounds == (0.1, 1.0)

    def test_invalid_rate_bounds(self):
        with pytest.raises(ConfigurationError):
            parse_simulation_settings({"rate_bounds": [0.5, 0.2]})


class TestsLoadScenario(object):
    def test_builtin_desk_scale(self):
        full = load_scenario(BUILTIN_SMALL)
        desk = load_scenario(BUILTIN_SMALL, desk_scale=4.0)
        assert desk.horizon == 3600
        assert desk.demand.total == pytest.approx(full.demand.total / 4.0)
        assert len(desk.network.agent_ids) == 8

    def test_demand_scale_bounds(self):
        with pytest.raises(ConfigurationError):
            load_scenario(BUILTIN_SMALL, demand_scale=5.0)

    def test_missing_file(self):
        with pytest.raises(IOError):
            load_scenario("/nonexistent/scenario.yaml")

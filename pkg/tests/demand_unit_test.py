# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
import numpy as np
import pytest

from mesomacro.demand import DemandProfile, od_pair_ids, parse_demand_profile, sample_demand
from mesomacro.errors import ConfigurationError
from tests.utils import TOY_NETWORK, toy_config


def ramp_profile(**changes):
    values = dict(
        od_pairs=(("A", "B"),),
        shares=(1.0,),
        ratio_curve=((0.0, 1.0), (1.0, 3.0)),
        total=8.0,
        duration=4.0,
    )
    values.update(changes)
    return DemandProfile(**values)


class TestsDemandProfile(object):
    def test_toy_mean_rates(self):
        profile = parse_demand_profile(TOY_NETWORK["demand"])
        rates = profile.mean_rates()
        assert rates.shape == (120, 2)
        assert rates[0] == pytest.approx([200.0 / 120 * 2 / 3, 200.0 / 120 / 3])
        assert rates.sum() == pytest.approx(200.0)

    def test_curve_interpolation(self):
        assert ramp_profile().ratios() == pytest.approx([1.25, 1.75, 2.25, 2.75])

    def test_curve_shape_kept_when_compressed(self):
        profile = ramp_profile().scaled(0.5, duration=8.0)
        rates = profile.mean_rates()[:, 0]
        assert profile.total == 4.0
        assert rates.sum() == pytest.approx(4.0)
        assert np.all(np.diff(rates) > 0)

    def test_single_point_curve(self):
        assert ramp_profile(ratio_curve=((0.0, 2.0),)).ratios() == pytest.approx([2.0] * 4)

    def test_invalid_shares(self):
        with pytest.raises(ValueError):
            ramp_profile(shares=(0.0,))

    def test_od_ids(self):
        assert od_pair_ids(parse_demand_profile(TOY_NETWORK["demand"])) == ["A->B", "B->A"]


class TestsSampleDemand(object):
    def test_deterministic(self):
        profile = ramp_profile(noise=0.3)
        assert np.array_equal(sample_demand(profile, 3), sample_demand(profile, 3))
        assert not np.array_equal(sample_demand(profile, 3), sample_demand(profile, 4))

    def test_noise_free(self):
        profile = ramp_profile(noise=0.0)
        assert np.array_equal(sample_demand(profile, 3), profile.mean_rates())

    def test_truncated_at_zero(self):
        profile = ramp_profile(noise=5.0, duration=200.0)
        assert sample_demand(profile, 1).min() >= 0.0


class TestsParseDemand(object):
    def test_unordered_curve(self):
        data = toy_config()["demand"]
        data["ratio_curve"] = [[1.0, 1.0], [0.0, 1.0]]
        with pytest.raises(ConfigurationError) as err:
            parse_demand_profile(data)
        assert err.value.field == "demand.ratio_curve"

    def test_unknown_vertex(self):
        with pytest.raises(ConfigurationError) as err:
            parse_demand_profile(TOY_NETWORK["demand"], vertices={"A"})
        assert err.value.field == "demand.od[0].destination"

    def test_default_noise(self):
        data = toy_config()["demand"]
        del data["noise"]
        assert parse_demand_profile(data).noise == 0.30

    def test_unknown_field(self):
        data = toy_config()["demand"]
        data["start_hour"] = 7.0
        with pytest.raises(ConfigurationError) as err:
            parse_demand_profile(data)
        assert err.value.field == "demand.start_hour"

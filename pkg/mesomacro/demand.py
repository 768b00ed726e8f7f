# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Travel demand profiles and their noisy realizations"""

from dataclasses import dataclass, replace
import logging
from typing import Tuple

import numpy as np

from mesomacro.core.config import check_fields, number, require
from mesomacro.errors import ConfigurationError

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

DEMAND_FIELDS = frozenset(["total", "duration", "noise", "ratio_curve", "od"])
OD_FIELDS = frozenset(["origin", "destination", "share"])
DEFAULT_NOISE = 0.30


@dataclass(frozen=True)
class DemandProfile:
    """OD demand following a ratio curve over the horizon

    ``ratio_curve`` holds (hour, ratio) points. The horizon is mapped linearly
    onto the curve's hour span, so a profile can be compressed in time without
    changing its shape.
    """

    od_pairs: Tuple[Tuple[str, str], ...]
    shares: Tuple[float, ...]
    ratio_curve: Tuple[Tuple[float, float], ...]
    total: float
    duration: float
    time_step: float = 1.0
    noise: float = DEFAULT_NOISE

    def __post_init__(self):
        if len(self.od_pairs) != len(self.shares):
            raise ValueError("Every OD pair needs a share")
        if any(share < 0 for share in self.shares) or sum(self.shares) <= 0:
            raise ValueError("OD shares must be non-negative with a positive sum")
        if any(ratio < 0 for _, ratio in self.ratio_curve):
            raise ValueError("Demand ratios must be non-negative")
        if self.total < 0 or self.noise < 0:
            raise ValueError("Total volume and noise must be non-negative")

    @property
    def num_intervals(self):
        return int(round(self.duration / self.time_step))

    def ratios(self):
        """Demand ratio per interval"""
        hours = np.array([point[0] for point in self.ratio_curve], dtype=float)
        values = np.array([point[1] for point in self.ratio_curve], dtype=float)
        if len(hours) == 1:
            return np.full(self.num_intervals, values[0])

        centers = (np.arange(self.num_intervals) + 0.5) / self.num_intervals
        return np.interp(hours[0] + centers * (hours[-1] - hours[0]), hours, values)

    def mean_rates(self):
        """Mean demand in veh per interval, shape (intervals, OD pairs)"""
        ratios = self.ratios()
        shares = np.asarray(self.shares, dtype=float)
        shares = shares / shares.sum()
        if ratios.sum() <= 0:
            return np.zeros((self.num_intervals, len(shares)))

        return self.total * np.outer(ratios / ratios.sum(), shares)

    def scaled(self, volume_factor=1.0, duration=None):
        """Copy with the volume multiplied and optionally a new horizon"""
        return replace(
            self,
            total=self.total * volume_factor,
            duration=self.duration if duration is None else float(duration),
        )


def sample_demand(profile, seed):
    """Realize a demand table from a profile

    Every OD pair and interval draws from Normal(μ, noise·μ), truncated at 0.

    :param DemandProfile profile: the demand profile
    :param int seed: random seed
    :returns: realized demand in veh per interval, shape (intervals, OD pairs)
    :rtype: numpy.ndarray
    """
    means = profile.mean_rates()
    if profile.noise == 0:
        return means.copy()

    rng = np.random.default_rng(seed)
    return np.maximum(rng.normal(means, profile.noise * means), 0.0)


def parse_demand_profile(data, time_step=1.0, vertices=None):
    """Build a DemandProfile from the ``demand`` section of a scenario

    :param dict data: demand mapping
    :param float time_step: interval length in seconds
    :param set vertices: valid origin/destination ids, unchecked when None
    :raises ConfigurationError: on schema violations
    """
    check_fields(data, DEMAND_FIELDS, "demand")
    curve = require(data, "ratio_curve", "demand")
    if not isinstance(curve, list) or not curve:
        raise ConfigurationError("demand.ratio_curve", "expected a non-empty list of [hour, ratio]")
    points = []
    for index, point in enumerate(curve):
        if not isinstance(point, (list, tuple)) or len(point) != 2:
            raise ConfigurationError("demand.ratio_curve[{}]".format(index), "expected [hour, ratio]")
        points.append((float(point[0]), float(point[1])))
    if any(later[0] <= earlier[0] for earlier, later in zip(points, points[1:])):
        raise ConfigurationError("demand.ratio_curve", "hours must be strictly increasing")

    raw_pairs = require(data, "od", "demand")
    if not isinstance(raw_pairs, list) or not raw_pairs:
        raise ConfigurationError("demand.od", "expected a non-empty list")
    od_pairs, shares = [], []
    for index, pair in enumerate(raw_pairs):
        path = "demand.od[{}]".format(index)
        check_fields(pair, OD_FIELDS, path)
        origin, destination = str(require(pair, "origin", path)), str(require(pair, "destination", path))
        for key, vertex in (("origin", origin), ("destination", destination)):
            if vertices is not None and vertex not in vertices:
                raise ConfigurationError("{}.{}".format(path, key), "unknown region or road '{}'".format(vertex))
        od_pairs.append((origin, destination))
        shares.append(number(pair, "share", path, minimum=0.0, strict=False))

    try:
        return DemandProfile(
            od_pairs=tuple(od_pairs),
            shares=tuple(shares),
            ratio_curve=tuple(points),
            total=number(data, "total", "demand", minimum=0.0, strict=False),
            duration=number(data, "duration", "demand", minimum=0.0),
            time_step=time_step,
            noise=number(data, "noise", "demand", default=DEFAULT_NOISE, minimum=0.0, strict=False),
        )
    except ValueError as err:
        if isinstance(err, ConfigurationError):
            raise
        raise ConfigurationError("demand", str(err))


def od_pair_ids(profile):
    return ["{}->{}".format(origin, destination) for origin, destination in profile.od_pairs]

# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Simulation helpers"""

import os

import numpy as np

from mesomacro.errors import InvariantError

CONSERVATION_TOLERANCE = 1e-6


class DrainCondition(object):
    """Condition object deciding whether an episode keeps running

    The episode always covers the demand horizon. Afterwards it keeps draining while
    vehicles are running, up to ``cap`` intervals in total.
    """

    def __init__(self, horizon, cap=None, drain=True, threshold=1.0):
        """Constructor

        :param int horizon: The number of demand intervals
        :param int cap: Hard upper bound on intervals, defaults to twice the horizon
        :param bool drain: Whether to continue past the horizon at all
        :param float threshold: Running vehicles below which the network counts as drained
        """
        self.horizon = horizon
        self.cap = 2 * horizon if cap is None else cap
        self.drain = drain
        self.threshold = threshold

    def __call__(self, t, running):
        if t < self.horizon:
            return True

        if not self.drain or t >= self.cap:
            return False

        return running >= self.threshold


class ConservationChecker(object):
    """ConservationChecker audits the global vehicle bookkeeping of an episode"""

    def __init__(self, tolerance=CONSERVATION_TOLERANCE):
        self.tolerance = tolerance
        self._completed = 0.0
        self._index = 0

    def __call__(self, injected, running, completed):
        self._index += 1

        if completed < self._completed - self.tolerance:
            raise InvariantError(
                "Cumulative completions decreased at interval #{}: {} -> {}".format(
                    self._index, self._completed, completed
                )
            )
        self._completed = completed

        error = injected - running - completed
        if abs(error) > self.tolerance:
            raise InvariantError(
                "Vehicle conservation broken at interval #{}: injected {} != running {} + completed {}".format(
                    self._index, injected, running, completed
                )
            )


def env_int(name, default):
    """Return an integer environment setting"""
    return int(os.environ.get(name, default))


def env_flag(name):
    """Return True when the environment variable is set to a true-ish value"""
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


def mean_std(values):
    """Return mean and population standard deviation of a sequence

    An empty sequence yields (nan, nan).
    """
    array = np.asarray(list(values), dtype=float)
    if array.size == 0:
        return float("nan"), float("nan")

    return float(array.mean()), float(array.std())


def format_mean_std(values, precision=2):
    """Format values as ``mean±std``"""
    mean, std = mean_std(values)
    return "{:.{p}f}±{:.{p}f}".format(mean, std, p=precision)


def allocate_proportional(demands, supplies):
    """Split receiver supplies among senders in proportion to their demands

    Each flow is ``D_ij · min(1, S_j / Σ_i D_ij)``, so no receiver gets more than
    its supply and no sender sends more than it asked for. Receivers missing from
    ``supplies`` accept nothing.

    :param dict demands: (sender, receiver) -> demand
    :param dict supplies: receiver -> supply
    :returns: (sender, receiver) -> allocated flow
    :rtype: dict
    """
    totals = {}
    for (_, receiver), demand in demands.items():
        if demand < 0:
            raise ValueError("Negative demand {} towards '{}'".format(demand, receiver))
        totals[receiver] = totals.get(receiver, 0.0) + demand

    flows = {}
    for (sender, receiver), demand in demands.items():
        supply = max(0.0, supplies.get(receiver, 0.0))
        total = totals[receiver]
        if total <= 0 or supply <= 0:
            flows[(sender, receiver)] = 0.0
        else:
            flows[(sender, receiver)] = demand * min(1.0, supply / total)
    return flows

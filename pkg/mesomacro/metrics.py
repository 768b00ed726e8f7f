# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Episode bookkeeping and performance metrics"""

from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np
import pandas as pd

from mesomacro.core.cells import SECONDS_PER_HOUR

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

METRICS_COLUMNS = ["t", "N_inj", "N_run", "N_com", "reward"]
DENSITY_COLUMNS = ["time", "road", "cell", "n"]
ACCUMULATION_COLUMNS = ["time", "region", "accumulation", "speed", "inflow", "outflow"]


class EpisodeLog(object):
    """Per-interval time series of one episode

    ``injected`` is cumulative, ``completions`` and ``rewards`` are per interval.
    """

    def __init__(self, agent_ids=(), time_step=1.0, horizon=None):
        self.agent_ids = tuple(agent_ids)
        self.time_step = time_step
        self.horizon = horizon
        self.times = []
        self.injected = []
        self.running = []
        self.completions = []
        self.rewards = []
        self.vehicle_km = []
        self.rates = {agent: [] for agent in self.agent_ids}
        self.route_injected = None
        self.route_free_flow = None

    def __len__(self):
        return len(self.times)

    def record(self, t, injected, running, completions, reward, vehicle_km=0.0, rates=None):
        self.times.append(t)
        self.injected.append(injected)
        self.running.append(running)
        self.completions.append(completions)
        self.rewards.append(reward)
        self.vehicle_km.append(vehicle_km)
        for agent in self.agent_ids:
            self.rates[agent].append((rates or {}).get(agent, 1.0))

    @property
    def total_completions(self):
        return float(np.sum(self.completions))

    def horizon_reward(self):
        """Cumulative reward over the demand horizon, or the whole log without one"""
        end = len(self.rewards) if self.horizon is None else self.horizon
        return float(np.sum(self.rewards[:end]))

    def as_frame(self):
        """Time series as a DataFrame: t, N_inj, N_run, N_com, reward, rate_<agent>"""
        frame = pd.DataFrame(
            {
                "t": self.times,
                "N_inj": self.injected,
                "N_run": self.running,
                "N_com": self.completions,
                "reward": self.rewards,
            },
            columns=METRICS_COLUMNS,
        )
        for agent in self.agent_ids:
            frame["rate_{}".format(agent)] = self.rates[agent]
        return frame


@dataclass(frozen=True)
class EpisodeMetrics:
    """Summary of an episode

    ``defined`` is False when nothing completed; TTT, delay and speed are then None.
    """

    ttt: Optional[float]
    delay: Optional[float]
    speed: Optional[float]
    reward: float
    completed: float
    free_flow_ttt: Optional[float]
    intervals: int
    defined: bool = True

    def as_row(self):
        return {"reward": self.reward, "TTT": self.ttt, "delay": self.delay, "speed": self.speed}


def free_flow_ttt(route_injected, route_free_flow):
    """Free-flow travel time weighted by the volume injected on each route"""
    volume = np.asarray(route_injected, dtype=float)
    if volume.sum() <= 0:
        return None
    return float((volume * np.asarray(route_free_flow, dtype=float)).sum() / volume.sum())


def finalize_metrics(log):
    """Compute TTT, delay, speed and cumulative reward of an episode

    :param EpisodeLog log: the episode log
    :rtype: EpisodeMetrics
    """
    completed = log.total_completions
    reward = log.horizon_reward()
    reference = None
    if log.route_injected is not None:
        reference = free_flow_ttt(log.route_injected, log.route_free_flow)

    if completed <= 0:
        logger.warning("No trip completed in %d intervals, metrics are undefined", len(log))
        return EpisodeMetrics(None, None, None, reward, 0.0, reference, len(log), defined=False)

    vehicle_seconds = log.time_step * float(np.sum(log.running))
    ttt = vehicle_seconds / completed
    delay = None if not reference else (ttt - reference) / reference
    vehicle_hours = vehicle_seconds / SECONDS_PER_HOUR
    speed = float(np.sum(log.vehicle_km)) / vehicle_hours if vehicle_hours > 0 else None

    return EpisodeMetrics(
        ttt=ttt,
        delay=delay,
        speed=speed,
        reward=reward,
        completed=completed,
        free_flow_ttt=reference,
        intervals=len(log),
    )


class DynamicsRecorder(object):
    """Sample cell densities and region accumulations every ``dump_every`` seconds"""

    def __init__(self, dump_every=30.0):
        self.dump_every = dump_every
        self.densities = []
        self.accumulations = []

    def __call__(self, t, simulator):
        seconds = t * simulator.time_step
        step = max(1, int(round(self.dump_every / simulator.time_step)))
        if t % step:
            return

        for road_id, dynamics in simulator.roads.items():
            for cell, count in enumerate(dynamics.counts):
                self.densities.append((seconds, road_id, cell, float(count)))
        for region_id, dynamics in simulator.regions.items():
            self.accumulations.append(
                (seconds, region_id, dynamics.accumulation, dynamics.state.speed, dynamics.inflow, dynamics.outflow)
            )

    def density_frame(self):
        return pd.DataFrame(self.densities, columns=DENSITY_COLUMNS)

    def accumulation_frame(self):
        return pd.DataFrame(self.accumulations, columns=ACCUMULATION_COLUMNS)

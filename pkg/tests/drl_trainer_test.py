# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Training loop tests on the toy network"""

import math
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import pytest
import torch

from mesomacro.drl import Hyperparams, flat_parameters
from mesomacro.drl_trainer import (
    DQN,
    MODES,
    NO_DEMONSTRATOR,
    PROPOSED,
    TRAINING_LOG_COLUMNS,
    Agent,
    DrlController,
    RolloutController,
    epoch_seed,
    mode_config,
    train,
)
from mesomacro.engine import Simulator, run_episode
from tests.utils import toy_scenario


def tiny_hyperparams(**overrides):
    values = dict(epochs=2, batch_size=8, hidden=8, nstep=3, buffer_size=1000)
    values.update(overrides)
    return Hyperparams.desk(**values)


def rollout_with(rewards):
    rollout = RolloutController({}, None, 0.0, np.random.default_rng(0))
    history = np.zeros((2, 4))
    rollout.steps = {"ON": [(history, np.full(3, float(index)), 1, 1) for index in range(len(rewards))]}
    rollout.rewards = list(rewards)
    return rollout


class TestsModes(object):
    def test_switches(self):
        assert mode_config(PROPOSED) == (True, True, True)
        assert mode_config(NO_DEMONSTRATOR).demonstration is False
        assert mode_config(DQN).recurrent is False
        assert len(MODES) == 5

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            mode_config("a3c")

    def test_epoch_seed(self):
        assert epoch_seed(0, 1) == epoch_seed(0, 1)
        assert epoch_seed(0, 1) != epoch_seed(0, 2)
        assert epoch_seed(0, 1) != epoch_seed(1, 1)


class TestsRolloutTransitions(object):
    def test_multistep_bootstrap(self):
        transitions = rollout_with([1.0, 2.0, 4.0]).transitions("ON", tiny_hyperparams(nstep=2, discount=0.5), True)
        assert [item.reward for item in transitions] == pytest.approx([2.0, 4.0, 4.0])
        assert [item.discount for item in transitions] == pytest.approx([0.25, 0.0, 0.0])
        assert transitions[0].next_observation[0] == 2.0

    def test_single_step(self):
        transitions = rollout_with([1.0, 2.0, 4.0]).transitions("ON", tiny_hyperparams(nstep=2, discount=0.5), False)
        assert [item.reward for item in transitions] == pytest.approx([1.0, 2.0, 4.0])
        assert [item.discount for item in transitions] == pytest.approx([0.5, 0.5, 0.0])
        assert transitions[1].next_observation[0] == 2.0

    def test_flat_nstep(self):
        hyperparams = tiny_hyperparams(nstep=2, discount=0.5, flat_nstep=True)
        transitions = rollout_with([1.0, 2.0, 4.0]).transitions("ON", hyperparams, True)
        assert transitions[0].reward == pytest.approx(1.5)
        assert transitions[0].discount == pytest.approx(0.25)
        assert transitions[0].next_observation[0] == 1.0


class TestTraining(unittest.TestCase):
    def setUp(self):
        self.scenario = toy_scenario()

    def test_zero_epochs(self):
        result = train(self.scenario, tiny_hyperparams(epochs=0), baseline=0.0)
        assert result.records == []
        assert set(result.agents) == {"ON", "B"}
        log = run_episode(Simulator(self.scenario), result.controller())
        assert len(log) >= self.scenario.horizon

    def test_records(self):
        result = train(self.scenario, tiny_hyperparams(batch_size=16), baseline=1.0)
        assert [record.epoch for record in result.records] == [0, 1]
        assert list(result.records[0].as_row()) == TRAINING_LOG_COLUMNS
        assert math.isnan(result.records[0].loss)
        assert math.isfinite(result.records[1].loss)
        assert result.records[0].alpha > result.records[1].alpha > 0
        assert len(result.agents["ON"].buffer) == 24

    def test_deterministic(self):
        first = train(self.scenario, tiny_hyperparams(), seed=3, baseline=0.5)
        second = train(self.scenario, tiny_hyperparams(), seed=3, baseline=0.5)
        for agent_id in first.agents:
            assert torch.equal(
                flat_parameters(first.agents[agent_id].network), flat_parameters(second.agents[agent_id].network)
            )
        assert [record.reward for record in first.records] == [record.reward for record in second.records]

    def test_clone_period(self):
        with patch.object(Agent, "clone", autospec=True) as clone:
            train(self.scenario, tiny_hyperparams(epochs=4, clone_period=2), baseline=0.0)
        assert clone.call_count == 4

    def test_without_demonstrator(self):
        result = train(self.scenario, tiny_hyperparams(), mode=NO_DEMONSTRATOR, baseline=0.0)
        assert all(record.alpha == 0.0 for record in result.records)

    def test_feedforward(self):
        result = train(self.scenario, tiny_hyperparams(epochs=1), mode=DQN, baseline=0.0)
        assert not result.agents["B"].network.recurrent

    def test_checkpoints(self):
        result = train(self.scenario, tiny_hyperparams(epochs=1), baseline=0.0)
        with tempfile.TemporaryDirectory() as directory:
            result.save(directory)
            assert sorted(os.listdir(directory)) == ["agent_B.pt", "agent_ON.pt"]
            loaded = DrlController.from_checkpoints(directory, Simulator(self.scenario), result.hyperparams)

        trained = run_episode(Simulator(self.scenario), result.controller())
        restored = run_episode(Simulator(self.scenario), loaded)
        assert trained.completions == restored.completions

    def test_missing_checkpoint(self):
        with tempfile.TemporaryDirectory() as directory:
            with pytest.raises(IOError):
                DrlController.from_checkpoints(directory, Simulator(self.scenario))

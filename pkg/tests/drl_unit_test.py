# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Basic unittests for the recurrent Q-learner building blocks"""

import math
import os
import unittest

import numpy as np
import pytest
import torch

from mesomacro.drl import (
    STUDENT_WEIGHTED,
    TEACHER_WEIGHTED,
    Hyperparams,
    QNetwork,
    ReplayBuffer,
    Transition,
    anneal_factor,
    check_gradients,
    clone_target,
    collate,
    combined_loss,
    demonstration_loss,
    dummy_policy,
    epsilon_schedule,
    flat_parameters,
    load_checkpoint,
    nstep_return,
    q_forward,
    save_checkpoint,
    select_action,
)
from mesomacro.engine import DECREASE, HOLD, INCREASE


def make_transitions(count, observation_dim=3, hidden=4, seed=0, discount=0.9):
    rng = np.random.default_rng(seed)
    return [
        Transition(
            history=rng.normal(size=(2, hidden)),
            observation=rng.uniform(size=observation_dim),
            action=int(rng.integers(3)),
            reward=float(rng.normal()),
            next_observation=rng.uniform(size=observation_dim),
            next_history=rng.normal(size=(2, hidden)),
            discount=discount,
            teacher_action=int(rng.integers(3)),
        )
        for _ in range(count)
    ]


class TestsHyperparams(object):
    def test_desk(self):
        hyperparams = Hyperparams.desk()
        assert hyperparams.epochs == 30
        assert hyperparams.learning_rate == 1e-4
        assert Hyperparams.desk(epochs=2).epochs == 2

    def test_full_scale(self):
        hyperparams = Hyperparams()
        assert (hyperparams.buffer_size, hyperparams.nstep, hyperparams.batch_size) == (30000, 30, 128)
        assert hyperparams.ce_direction == STUDENT_WEIGHTED

    @pytest.mark.parametrize(
        "changes", [{"discount": 1.0}, {"nstep": 0}, {"eps_end": 0.5}, {"ce_direction": "both"}, {"epochs": -1}]
    )
    def test_invalid(self, changes):
        with pytest.raises(ValueError):
            Hyperparams(**changes)

    def test_digest(self):
        assert Hyperparams().digest() == Hyperparams().digest()
        assert Hyperparams().digest() != Hyperparams(flat_nstep=True).digest()
        assert len(Hyperparams().digest()) == 16


class TestsSchedules(object):
    def test_epsilon(self):
        hyperparams = Hyperparams()
        assert epsilon_schedule(0, hyperparams) == pytest.approx(0.1)
        assert epsilon_schedule(50, hyperparams) == pytest.approx(0.0316228, rel=1e-5)
        assert epsilon_schedule(100, hyperparams) == pytest.approx(0.01)
        assert epsilon_schedule(500, hyperparams) == pytest.approx(0.01)

    def test_anneal_bounds(self):
        hyperparams = Hyperparams()
        assert anneal_factor(0, hyperparams) == pytest.approx(200.0)
        assert anneal_factor(50, hyperparams) == 0.0
        assert anneal_factor(80, hyperparams) == 0.0

    def test_anneal_decreasing(self):
        hyperparams = Hyperparams()
        values = [anneal_factor(epoch, hyperparams) for epoch in range(51)]
        assert all(later < earlier for earlier, later in zip(values, values[1:]))


class TestsPolicies(object):
    def test_greedy(self):
        rng = np.random.default_rng(0)
        assert select_action(np.array([0.0, 2.0, 1.0]), 0.0, rng) == HOLD
        assert select_action(np.array([1.0, 1.0, 1.0]), 0.0, rng) == INCREASE

    def test_random(self):
        rng = np.random.default_rng(0)
        actions = {select_action(np.array([0.0, 0.0, 5.0]), 1.0, rng) for _ in range(100)}
        assert actions == {INCREASE, HOLD, DECREASE}

    def test_dummy_policy(self):
        assert dummy_policy(np.array([10.0, 0.0, 0.0]))[0] == pytest.approx(0.99991, abs=1e-5)
        policy = dummy_policy(torch.tensor([[10.0, 0.0, 0.0]]))
        assert float(policy[0, 0]) == pytest.approx(0.99991, abs=1e-5)

    def test_student_weighted_loss(self):
        teacher = torch.tensor([[0.9, 0.05, 0.05]])
        loss = demonstration_loss(torch.zeros(1, 3), teacher, STUDENT_WEIGHTED)
        assert float(loss) == pytest.approx(-(math.log(0.9) + 2 * math.log(0.05)) / 3, rel=1e-6)

    def test_teacher_weighted_loss(self):
        teacher = torch.tensor([[0.9, 0.05, 0.05]])
        loss = demonstration_loss(torch.zeros(1, 3), teacher, TEACHER_WEIGHTED)
        assert float(loss) == pytest.approx(math.log(3.0), rel=1e-6)

    def test_zero_teacher_probability(self):
        with pytest.raises(ValueError):
            demonstration_loss(torch.zeros(1, 3), torch.tensor([[1.0, 0.0, 0.0]]), STUDENT_WEIGHTED)


class TestsNStepReturn(object):
    def test_discounted(self):
        result = nstep_return([1.0, 1.0, 1.0], 0.5, 3)
        assert result.value == pytest.approx(1.75)
        assert result.horizon == 3
        assert result.discount == pytest.approx(0.125)

    def test_truncated_at_episode_end(self):
        result = nstep_return([1.0, 1.0], 0.5, 3)
        assert result.value == pytest.approx(1.5)
        assert result.horizon == 2

    def test_single_step(self):
        result = nstep_return([2.0, 5.0], 0.9, 1)
        assert result == (pytest.approx(2.0), 1, pytest.approx(0.9))

    def test_flat(self):
        result = nstep_return([1.0, 2.0, 3.0, 4.0], 0.5, 2, flat=True)
        assert result.value == pytest.approx(1.25)
        assert result.horizon == 1
        assert result.discount == pytest.approx(0.25)

    def test_empty(self):
        with pytest.raises(ValueError):
            nstep_return([], 0.5, 3)


class TestQNetwork(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.network = QNetwork(3, hidden=4)

    def test_shapes(self):
        q_values, history = self.network(torch.zeros(5, 3), self.network.initial_history(5))
        assert q_values.shape == (5, 3)
        assert history.shape == (5, 2, 4)

    def test_history_carried(self):
        observation = np.array([0.1, 0.2, 0.3])
        first, history = q_forward(self.network, observation)
        second, _ = q_forward(self.network, observation, history)
        assert first.shape == (3,)
        assert not np.allclose(first, second)

    def test_feedforward_ignores_history(self):
        network = QNetwork(3, hidden=4, recurrent=False)
        observation = np.array([0.1, 0.2, 0.3])
        first, history = q_forward(network, observation)
        second, _ = q_forward(network, observation, history)
        assert np.allclose(first, second)

    def test_observation_mismatch(self):
        with pytest.raises(ValueError):
            q_forward(self.network, np.zeros(4))

    def test_clone(self):
        target = clone_target(self.network)
        assert torch.equal(flat_parameters(target), flat_parameters(self.network))
        assert not any(param.requires_grad for param in target.parameters())


class TestCombinedLoss(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.network = QNetwork(3, hidden=4)
        with torch.no_grad():
            self.network.head.weight.zero_()
            self.network.head.bias.copy_(torch.tensor([50.0, 0.0, 0.0]))
        self.target = clone_target(self.network)
        transition = make_transitions(1)[0]._replace(action=INCREASE, reward=50.0, discount=0.0, teacher_action=0)
        self.batch = collate([transition])

    def test_td_error_only(self):
        assert float(combined_loss(self.network, self.target, self.batch, 0.0)) == pytest.approx(0.0, abs=1e-6)

    def test_with_demonstration(self):
        loss = combined_loss(self.network, self.target, self.batch, 2.0, STUDENT_WEIGHTED)
        assert float(loss) == pytest.approx(-2.0 * math.log(0.9), rel=1e-4)

    def test_bootstrap_from_target(self):
        batch = self.batch._replace(discount=torch.tensor([0.5]))
        loss = combined_loss(self.network, self.target, batch, 0.0)
        assert float(loss) == pytest.approx(25.0**2, rel=1e-4)


class TestsGradients(object):
    @pytest.mark.parametrize("direction", [STUDENT_WEIGHTED, TEACHER_WEIGHTED])
    @pytest.mark.parametrize("draw", range(20))
    def test_matches_finite_differences(self, direction, draw):
        torch.manual_seed(draw)
        network = QNetwork(3, hidden=4)
        target = QNetwork(3, hidden=4)
        alpha = float(np.random.default_rng(draw).uniform(0.1, 3.0))
        batch = collate(make_transitions(4, seed=100 + draw))
        assert check_gradients(network, target, batch, alpha=alpha, direction=direction) < 1e-4

    def test_target_not_differentiated(self):
        torch.manual_seed(1)
        network = QNetwork(3, hidden=4)
        target = clone_target(network)
        before = flat_parameters(target)
        combined_loss(network, target, collate(make_transitions(4)), 1.0).backward()
        assert all(param.grad is None for param in target.parameters())
        assert torch.equal(before, flat_parameters(target))


class TestsReplay(object):
    def test_fifo_capacity(self):
        buffer = ReplayBuffer(3)
        for transition in make_transitions(5):
            buffer.push(transition)
        assert len(buffer) == 3
        assert buffer[0].reward == make_transitions(5)[2].reward

    def test_underfilled(self):
        buffer = ReplayBuffer(10)
        buffer.push(make_transitions(1)[0])
        with pytest.raises(RuntimeError):
            buffer.sample(2)

    def test_seeded(self):
        first, second = ReplayBuffer(10, seed=4), ReplayBuffer(10, seed=4)
        for transition in make_transitions(10):
            first.push(transition)
            second.push(transition)
        assert [item.reward for item in first.sample(5)] == [item.reward for item in second.sample(5)]

    def test_collate(self):
        batch = collate(make_transitions(6))
        assert batch.observation.shape == (6, 3)
        assert batch.history.shape == (6, 2, 4)
        assert batch.teacher.sum(dim=1).numpy() == pytest.approx([1.0] * 6)
        assert batch.action.dtype == torch.long


class TestsCheckpoint(object):
    def test_round_trip(self, tmp_path):
        torch.manual_seed(0)
        network = QNetwork(3, hidden=4)
        path = os.path.join(str(tmp_path), "agent_ON.pt")
        save_checkpoint(path, network, "ON", Hyperparams(), "proposed")
        loaded, mode = load_checkpoint(path, "ON", 3, Hyperparams())
        assert mode == "proposed"
        assert torch.equal(flat_parameters(loaded), flat_parameters(network))

    def test_wrong_agent(self, tmp_path):
        path = os.path.join(str(tmp_path), "agent_ON.pt")
        save_checkpoint(path, QNetwork(3, hidden=4), "ON", Hyperparams(), "proposed")
        with pytest.raises(ValueError):
            load_checkpoint(path, "B", 3)
        with pytest.raises(ValueError):
            load_checkpoint(path, "ON", 5)

    def test_other_hyperparams(self, tmp_path):
        path = os.path.join(str(tmp_path), "agent_ON.pt")
        save_checkpoint(path, QNetwork(3, hidden=4), "ON", Hyperparams(), "proposed")
        with pytest.raises(ValueError):
            load_checkpoint(path, "ON", 3, Hyperparams(flat_nstep=True))

    def test_missing(self, tmp_path):
        with pytest.raises(IOError):
            load_checkpoint(os.path.join(str(tmp_path), "agent_X.pt"), "X", 3)

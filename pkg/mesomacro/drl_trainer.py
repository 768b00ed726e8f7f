# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Training loop of the independent per-agent Q-learners and their greedy controller"""

from collections import namedtuple
from dataclasses import asdict, dataclass, field
import logging
import os

import numpy as np
import torch
from torch import nn

from mesomacro.demand import sample_demand
from mesomacro.demonstrators import DemonstratorController, default_demonstrators
from mesomacro.drl import (
    Hyperparams,
    QNetwork,
    ReplayBuffer,
    Transition,
    anneal_factor,
    clone_target,
    collate,
    combined_loss,
    epsilon_schedule,
    load_checkpoint,
    nstep_return,
    q_forward,
    save_checkpoint,
    select_action,
)
from mesomacro.engine import Controller, Simulator, baseline_constant, run_episode
from mesomacro.helpers import DrainCondition

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

PROPOSED = "proposed"
NO_NSTEPS = "no-nsteps"
NO_DEMONSTRATOR = "no-demonstrator"
NO_DEMONSTRATOR_NO_NSTEPS = "no-demonstrator-no-nsteps"
DQN = "dqn"

ModeConfig = namedtuple("ModeConfig", ["demonstration", "multistep", "recurrent"])

MODES = {
    PROPOSED: ModeConfig(demonstration=True, multistep=True, recurrent=True),
    NO_NSTEPS: ModeConfig(demonstration=True, multistep=False, recurrent=True),
    NO_DEMONSTRATOR: ModeConfig(demonstration=False, multistep=True, recurrent=True),
    NO_DEMONSTRATOR_NO_NSTEPS: ModeConfig(demonstration=False, multistep=False, recurrent=True),
    DQN: ModeConfig(demonstration=False, multistep=False, recurrent=False),
}

TRAINING_LOG_COLUMNS = ["epoch", "reward", "epsilon", "alpha", "loss"]
CHECKPOINT_TEMPLATE = "agent_{}.pt"


def mode_config(mode):
    """Switches of a training mode

    :raises ValueError: for an unknown mode
    """
    try:
        return MODES[mode]
    except KeyError:
        raise ValueError("Unknown training mode {!r}, expected one of {}".format(mode, ", ".join(MODES)))


def epoch_seed(seed, epoch):
    """Demand seed of one training epoch, distinct from the evaluation seed"""
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    reward: float
    epsilon: float
    alpha: float
    loss: float

    def as_row(self):
        return asdict(self)


class Agent(object):
    """One learner: online and target networks, optimizer, replay buffer and history"""

    def __init__(self, agent_id, observation_dim, hyperparams, recurrent=True, seed=0):
        self.agent_id = agent_id
        self.hyperparams = hyperparams
        self.network = QNetwork(observation_dim, hyperparams.hidden, recurrent=recurrent)
        self.target = clone_target(self.network)
        self.optimizer = torch.optim.Adam(self.network.parameters(), lr=hyperparams.learning_rate)
        self.buffer = ReplayBuffer(hyperparams.buffer_size, seed)
        self.history = self.network.initial_history()

    @property
    def observation_dim(self):
        return self.network.observation_dim

    def reset(self):
        self.history = self.network.initial_history()

    def act(self, observation, epsilon, rng):
        """ε-greedy action; returns the action and the history it was taken with"""
        previous = self.history
        q_values, self.history = q_forward(self.network, observation, previous)
        return select_action(q_values, epsilon, rng), previous

    def clone(self):
        clone_target(self.network, self.target)

    def optimize(self, alpha, updates):
        """Run ``updates`` gradient steps on replayed mini-batches

        :returns: mean loss, or None while the buffer holds less than one batch
        """
        hyperparams = self.hyperparams
        if len(self.buffer) < hyperparams.batch_size:
            return None

        losses = []
        for _ in range(updates):
            batch = collate(self.buffer.sample(hyperparams.batch_size), hyperparams.smoothing)
            loss = combined_loss(self.network, self.target, batch, alpha, hyperparams.ce_direction)
            self.optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(self.network.parameters(), hyperparams.grad_clip)
            self.optimizer.step()
            losses.append(float(loss))
        return float(np.mean(losses)) if losses else None


class RolloutController(Controller):
    """ε-greedy controller collecting per-agent decisions and teacher actions"""

    def __init__(self, agents, teacher, epsilon, rng):
        self.agents = agents
        self.teacher = teacher
        self.epsilon = epsilon
        self.rng = rng
        self.steps = {}
        self.rewards = []

    def reset(self, simulator):
        self.steps = {agent_id: [] for agent_id in self.agents}
        self.rewards = []
        self.teacher.reset(simulator)
        for agent in self.agents.values():
            agent.reset()

    def act(self, simulator):
        teacher_actions = self.teacher.decide(simulator)
        actions = {}
        for agent_id, agent in sorted(self.agents.items()):
            observation = simulator.observe(agent_id)
            action, history = agent.act(observation, self.epsilon, self.rng)
            self.steps[agent_id].append((history.numpy().copy(), observation, action, teacher_actions[agent_id]))
            actions[agent_id] = action
        logger.debug("t=%d actions %s", simulator.t, actions)
        return actions

    def reward(self, value):
        self.rewards.append(value)

    def finish(self, simulator, value):
        if len(self.rewards) < len(next(iter(self.steps.values()), [])):
            self.rewards.append(value)

    def transitions(self, agent_id, hyperparams, multistep):
        """Replay transitions of one agent with their multi-step returns"""
        steps = self.steps[agent_id]
        nstep = hyperparams.nstep if multistep else 1
        flat = hyperparams.flat_nstep and multistep
        transitions = []
        for index, (history, observation, action, teacher_action) in enumerate(steps):
            result = nstep_return(self.rewards[index:], hyperparams.discount, nstep, flat=flat)
            ahead = index + result.horizon
            if ahead < len(steps):
                next_history, next_observation, _, _ = steps[ahead]
                discount = result.discount
            else:
                next_history, next_observation, discount = history, observation, 0.0
            transitions.append(
                Transition(
                    history=history,
                    observation=observation,
                    action=action,
                    reward=result.value,
                    next_observation=next_observation,
                    next_history=next_history,
                    discount=discount,
                    teacher_action=teacher_action,
                )
            )
        return transitions


class DrlController(Controller):
    """Greedy controller over trained networks, history carried across decisions"""

    def __init__(self, networks):
        self.networks = dict(networks)
        self.histories = {}

    def reset(self, simulator):
        self.histories = {agent_id: network.initial_history() for agent_id, network in self.networks.items()}

    def act(self, simulator):
        actions = {}
        for agent_id, network in sorted(self.networks.items()):
            q_values, self.histories[agent_id] = q_forward(
                network, simulator.observe(agent_id), self.histories[agent_id]
            )
            actions[agent_id] = int(np.argmax(q_values))
        return actions

    @classmethod
    def from_checkpoints(cls, directory, simulator, hyperparams=None):
        """Load ``agent_<id>.pt`` of every agent of the simulator

        :raises IOError: if a checkpoint is missing or unreadable
        """
        networks = {}
        for agent_id in simulator.agent_ids:
            path = os.path.join(directory, CHECKPOINT_TEMPLATE.format(agent_id))
            if not os.path.exists(path):
                raise IOError("Missing checkpoint {}".format(path))
            networks[agent_id], _ = load_checkpoint(path, agent_id, simulator.observation_dim(agent_id), hyperparams)
        return cls(networks)


@dataclass
class TrainingResult:
    """Trained agents, the mode they were trained in and the per-epoch log"""

    agents: dict
    mode: str
    hyperparams: Hyperparams
    baseline: float
    records: list = field(default_factory=list)

    def controller(self):
        return DrlController({agent_id: agent.network for agent_id, agent in self.agents.items()})

    def save(self, directory):
        """Write one checkpoint per agent into ``directory``"""
        os.makedirs(directory, exist_ok=True)
        for agent_id, agent in sorted(self.agents.items()):
            path = os.path.join(directory, CHECKPOINT_TEMPLATE.format(agent_id))
            save_checkpoint(path, agent.network, agent_id, self.hyperparams, self.mode)


def train(scenario, hyperparams=None, mode=PROPOSED, seed=0, demonstrators=None, baseline=None):
    """Train one learner per agent on a scenario

    Each epoch rolls out one ε-greedy episode over the demand horizon without
    draining, stores every agent's transitions in its own buffer, then runs
    ``optimization_passes`` passes of as many updates as decisions were taken.
    Target networks are cloned every ``clone_period`` epochs.

    :param Scenario scenario: the scenario
    :param Hyperparams hyperparams: learner constants, desk-scale when None
    :param str mode: one of MODES
    :param int seed: seed of network initialization, exploration and demand
    :param dict demonstrators: agent id -> demonstrator parameters, the defaults when None
    :param float baseline: reward baseline, computed from an uncontrolled episode when None
    :rtype: TrainingResult
    :raises ValueError: for an unknown mode
    """
    config = mode_config(mode)
    hyperparams = hyperparams or Hyperparams.desk()
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    if baseline is None:
        baseline = baseline_constant(scenario, seed)
    if demonstrators is None:
        demonstrators = default_demonstrators(scenario.network)
    teacher = DemonstratorController(demonstrators, controlled=())

    probe = Simulator(scenario, baseline=baseline)
    agents = {
        agent_id: Agent(agent_id, probe.observation_dim(agent_id), hyperparams, config.recurrent, seed + index)
        for index, agent_id in enumerate(probe.agent_ids)
    }
    result = TrainingResult(agents=agents, mode=mode, hyperparams=hyperparams, baseline=baseline)
    logger.info("Training %d agents in mode %s for %d epochs", len(agents), mode, hyperparams.epochs)

    for epoch in range(hyperparams.epochs):
        epsilon = epsilon_schedule(epoch, hyperparams)
        alpha = anneal_factor(epoch, hyperparams) if config.demonstration else 0.0

        simulator = Simulator(scenario, sample_demand(scenario.demand, epoch_seed(seed, epoch)), baseline)
        rollout = RolloutController(agents, teacher, epsilon, rng)
        log = run_episode(simulator, rollout, DrainCondition(scenario.horizon, drain=False))

        losses = []
        for agent_id, agent in sorted(agents.items()):
            transitions = rollout.transitions(agent_id, hyperparams, config.multistep)
            for transition in transitions:
                agent.buffer.push(transition)
            for _ in range(hyperparams.optimization_passes):
                loss = agent.optimize(alpha, len(transitions))
                if loss is not None:
                    losses.append(loss)
            if (epoch + 1) % hyperparams.clone_period == 0:
                agent.clone()

        record = EpochRecord(
            epoch=epoch,
            reward=log.horizon_reward(),
            epsilon=epsilon,
            alpha=alpha,
            loss=float(np.mean(losses)) if losses else float("nan"),
        )
        result.records.append(record)
        logger.info(
            "Epoch %d: reward %.2f, epsilon %.4f, alpha %.2f, loss %.4g",
            epoch,
            record.reward,
            epsilon,
            alpha,
            record.loss,
        )
    return result

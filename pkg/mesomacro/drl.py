# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Demonstration-guided recurrent deep Q-learning: network, losses, schedules and replay"""

from collections import deque, namedtuple
from dataclasses import asdict, dataclass, replace
import hashlib
import json
import logging

import numpy as np
import torch
from torch import nn

from mesomacro.demonstrators import DEFAULT_SMOOTHING, teacher_policy
from mesomacro.engine import NUM_ACTIONS

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

# directions of the demonstration cross-entropy
STUDENT_WEIGHTED = "student"  # -sum pi_student * log pi_teacher
TEACHER_WEIGHTED = "teacher"  # -sum pi_teacher * log pi_student
CE_DIRECTIONS = (STUDENT_WEIGHTED, TEACHER_WEIGHTED)

GRADIENT_CHECK_STEP = 1e-6


@dataclass(frozen=True)
class Hyperparams:
    """Learner constants, full-scale values by default

    ``flat_nstep`` switches the n-step return to equal discount**nstep weights
    with the bootstrap taken one decision ahead. ``ce_direction`` picks which policy
    weights the demonstration cross-entropy.
    """

    buffer_size: int = 30000
    epochs: int = 100
    optimization_passes: int = 1
    eps_start: float = 0.1
    eps_end: float = 0.01
    eps_last: int = 100
    alpha_min: float = -3.0
    alpha_step: float = 0.12
    alpha_term: int = 50
    alpha_amp: float = 200.0
    nstep: int = 30
    discount: float = 0.99
    batch_size: int = 128
    learning_rate: float = 3e-6
    clone_period: int = 5
    hidden: int = 100
    grad_clip: float = 10.0
    smoothing: float = DEFAULT_SMOOTHING
    flat_nstep: bool = False
    ce_direction: str = STUDENT_WEIGHTED

    def __post_init__(self):
        positive = ("buffer_size", "optimization_passes", "eps_last", "nstep", "batch_size", "clone_period", "hidden")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError("Hyperparameter {} must be positive, got {}".format(name, getattr(self, name)))
        if self.epochs < 0 or self.alpha_term < 0:
            raise ValueError("epochs and alpha_term must not be negative")
        if not 0 < self.discount < 1:
            raise ValueError("Discount must lie in (0, 1), got {}".format(self.discount))
        if not 0 < self.eps_end <= self.eps_start <= 1:
            raise ValueError("Need 0 < eps_end <= eps_start <= 1")
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ValueError("learning_rate and grad_clip must be positive")
        if self.ce_direction not in CE_DIRECTIONS:
            raise ValueError("Unknown cross-entropy direction {!r}".format(self.ce_direction))

    @classmethod
    def desk(cls, **overrides):
        """Desk-scale preset: 30 epochs at learning rate 1e-4"""
        return replace(cls(epochs=30, learning_rate=1e-4), **overrides)

    def digest(self):
        """Short stable hash of all values, stored in checkpoints"""
        text = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class QNetwork(nn.Module):
    """Two-layer encoder, LSTM cell core and a linear head over the actions

    The history ``h`` stacks the LSTM hidden and cell states, shape ``(batch, 2, hidden)``.
    A non-recurrent network feeds the core a zero history on every call.
    """

    def __init__(self, observation_dim, hidden=100, num_actions=NUM_ACTIONS, recurrent=True):
        super(QNetwork, self).__init__()
        self.observation_dim = observation_dim
        self.hidden = hidden
        self.recurrent = recurrent
        self.encoder = nn.Sequential(
            nn.Linear(observation_dim, hidden), nn.ReLU(), nn.Linear(hidden, hidden), nn.ReLU()
        )
        self.core = nn.LSTMCell(hidden, hidden)
        self.head = nn.Linear(hidden, num_actions)

    def initial_history(self, batch=None):
        shape = (2, self.hidden) if batch is None else (batch, 2, self.hidden)
        param = self.head.weight
        return torch.zeros(shape, dtype=param.dtype, device=param.device)

    def forward(self, observation, history):
        if not self.recurrent:
            history = torch.zeros_like(history)
        hidden, cell = self.core(self.encoder(observation), (history[:, 0], history[:, 1]))
        return self.head(hidden), torch.stack((hidden, cell), dim=1)


def q_forward(network, observation, history=None):
    """Q values and next history of one observation, without gradients

    :param QNetwork network: the Q-network
    :param numpy.ndarray observation: the agent's observation
    :param torch.Tensor history: previous history ``(2, hidden)``, zero when None
    :returns: Q values of the three actions and the next history
    :rtype: tuple
    :raises ValueError: if the observation does not match the network's input dimension
    """
    observation = np.asarray(observation, dtype=float)
    if observation.shape != (network.observation_dim,):
        raise ValueError(
            "Observation of shape {} does not match dimension {}".format(observation.shape, network.observation_dim)
        )
    if history is None:
        history = network.initial_history()
    dtype = network.head.weight.dtype
    with torch.no_grad():
        q_values, next_history = network(torch.as_tensor(observation, dtype=dtype)[None], history[None])
    return q_values[0].numpy().astype(float), next_history[0]


def epsilon_schedule(epoch, hyperparams):
    """Exploration rate decaying geometrically from eps_start to eps_end over eps_last epochs"""
    if epoch >= hyperparams.eps_last:
        return hyperparams.eps_end
    ratio = hyperparams.eps_end / hyperparams.eps_start
    return max(hyperparams.eps_end, hyperparams.eps_start * ratio ** (epoch / hyperparams.eps_last))


def select_action(q_values, epsilon, rng):
    """ε-greedy choice; the lowest index wins exact ties"""
    if rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


def dummy_policy(q_values):
    """Softmax of Q values, for tensors or arrays"""
    if isinstance(q_values, torch.Tensor):
        return torch.softmax(q_values, dim=-1)
    q_values = np.asarray(q_values, dtype=float)
    weights = np.exp(q_values - q_values.max(axis=-1, keepdims=True))
    return weights / weights.sum(axis=-1, keepdims=True)


def demonstration_loss(q_values, teacher, direction=STUDENT_WEIGHTED):
    """Cross-entropy between the softmax policy of ``q_values`` and the teacher policy

    With ``direction="student"`` the log teacher probabilities are weighted by
    the learner's softmax policy, with ``"teacher"`` the log learner
    probabilities are weighted by the teacher policy.

    :param torch.Tensor q_values: Q values ``(batch, actions)`` or ``(actions,)``
    :param torch.Tensor teacher: teacher policy of the same shape
    :param str direction: "student" or "teacher"
    :returns: mean loss over the batch
    :rtype: torch.Tensor
    :raises ValueError: if the teacher policy is not strictly positive
    """
    teacher = torch.as_tensor(teacher, dtype=q_values.dtype)
    if direction == STUDENT_WEIGHTED:
        if bool((teacher <= 0).any()):
            raise ValueError("Teacher policy must be strictly positive")
        loss = -(dummy_policy(q_values) * torch.log(teacher)).sum(dim=-1)
    elif direction == TEACHER_WEIGHTED:
        loss = -(teacher * torch.log_softmax(q_values, dim=-1)).sum(dim=-1)
    else:
        raise ValueError("Unknown cross-entropy direction {!r}".format(direction))
    return loss.mean()


NStepReturn = namedtuple("NStepReturn", ["value", "horizon", "discount"])


def nstep_return(rewards, discount, nstep, flat=False):
    """Multi-step reward of a window starting at the current decision

    By default the return sums discount**i * rewards[i] for i < nstep; the
    bootstrap Q value is then taken ``horizon`` decisions ahead and weighted by
    ``discount``. The flat form weights rewards[1..nstep] by discount**nstep each
    and bootstraps one decision ahead.

    :param list rewards: decision rewards r_t, r_{t+1}, ... up to the episode end
    :param float discount: per-decision discount
    :param int nstep: window length, truncated at the episode end
    :param bool flat: use the flat form
    :rtype: NStepReturn
    """
    rewards = np.asarray(rewards, dtype=float)
    if len(rewards) < 1:
        raise ValueError("Reward window must not be empty")
    if flat:
        weight = discount**nstep
        return NStepReturn(float(weight * rewards[1 : nstep + 1].sum()), 1, weight)

    steps = min(nstep, len(rewards))
    value = float(np.sum(discount ** np.arange(steps) * rewards[:steps]))
    return NStepReturn(value, steps, discount**steps)


Transition = namedtuple(
    "Transition",
    [
        "history",
        "observation",
        "action",
        "reward",
        "next_observation",
        "next_history",
        "discount",
        "teacher_action",
    ],
)
Transition.__doc__ = """One replayed decision; ``discount`` is 0 when the bootstrap lies past the episode end"""


TransitionBatch = namedtuple(
    "TransitionBatch",
    ["history", "observation", "action", "reward", "next_observation", "next_history", "discount", "teacher"],
)


def collate(transitions, smoothing=DEFAULT_SMOOTHING, dtype=torch.float32):
    """Stack transitions into tensors, teacher actions expanded to smoothed policies"""

    def stack(name):
        values = np.stack([np.asarray(getattr(item, name), dtype=float) for item in transitions])
        return torch.as_tensor(values, dtype=dtype)

    return TransitionBatch(
        history=stack("history"),
        observation=stack("observation"),
        action=torch.as_tensor([item.action for item in transitions], dtype=torch.long),
        reward=torch.as_tensor([item.reward for item in transitions], dtype=dtype),
        next_observation=stack("next_observation"),
        next_history=stack("next_history"),
        discount=torch.as_tensor([item.discount for item in transitions], dtype=dtype),
        teacher=torch.as_tensor(
            np.stack([teacher_policy(item.teacher_action, smoothing) for item in transitions]), dtype=dtype
        ),
    )


def combined_loss(network, target, batch, alpha, direction=STUDENT_WEIGHTED):
    """Mean squared TD error against the target network plus the weighted demonstration loss

    :param QNetwork network: online network
    :param QNetwork target: target network, never differentiated
    :param TransitionBatch batch: the mini-batch
    :param float alpha: demonstration weight; the demonstration loss is skipped when 0
    :param str direction: cross-entropy direction of the demonstration loss
    :rtype: torch.Tensor
    """
    q_values, _ = network(batch.observation, batch.history)
    chosen = q_values.gather(1, batch.action[:, None])[:, 0]
    with torch.no_grad():
        next_q, _ = target(batch.next_observation, batch.next_history)
        td_target = batch.reward + batch.discount * next_q.max(dim=1).values
    loss = ((td_target - chosen) ** 2).mean()
    if alpha:
        loss = loss + alpha * demonstration_loss(q_values, batch.teacher, direction)
    return loss


def _annealing(epoch, hyperparams):
    return 1.0 - 1.0 / (1.0 + np.exp(-(hyperparams.alpha_min + hyperparams.alpha_step * epoch)))


def anneal_factor(epoch, hyperparams):
    """Demonstration weight of an epoch: alpha_amp at epoch 0, falling to 0 at alpha_term"""
    if epoch >= hyperparams.alpha_term:
        return 0.0
    final = _annealing(hyperparams.alpha_term, hyperparams)
    ratio = (_annealing(epoch, hyperparams) - final) / (_annealing(0, hyperparams) - final)
    return float(hyperparams.alpha_amp * ratio)


class ReplayBuffer(object):
    """Bounded FIFO of transitions with seeded uniform sampling"""

    def __init__(self, capacity, seed=0):
        self.capacity = capacity
        self._items = deque(maxlen=capacity)
        self._rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]

    def push(self, transition):
        self._items.append(transition)

    def sample(self, batch_size):
        """Draw ``batch_size`` transitions uniformly with replacement

        :raises RuntimeError: if fewer than ``batch_size`` transitions are stored
        """
        if len(self._items) < batch_size:
            raise RuntimeError("Replay buffer holds {} transitions, {} requested".format(len(self._items), batch_size))
        indices = self._rng.integers(len(self._items), size=batch_size)
        return [self._items[index] for index in indices]


def clone_target(network, target=None):
    """Copy the online parameters into the target network, a fresh copy when None"""
    if target is None:
        target = QNetwork(network.observation_dim, network.hidden, recurrent=network.recurrent)
        target.to(network.head.weight.dtype)
    target.load_state_dict(network.state_dict())
    for param in target.parameters():
        param.requires_grad_(False)
    return target


def check_gradients(network, target, batch, alpha, direction=STUDENT_WEIGHTED, step=GRADIENT_CHECK_STEP):
    """Compare autograd gradients of combined_loss with central differences

    Runs in float64 on copies of both networks.

    :returns: the largest relative error ||g − g_fd|| / (||g|| + ||g_fd||) over the parameter tensors
    :rtype: float
    """
    network = clone_target(network, QNetwork(network.observation_dim, network.hidden, recurrent=network.recurrent))
    network.double()
    for param in network.parameters():
        param.requires_grad_(True)
    target = clone_target(target, QNetwork(target.observation_dim, target.hidden, recurrent=target.recurrent))
    target.double()
    batch = TransitionBatch(*(field if field.dtype == torch.long else field.double() for field in batch))

    network.zero_grad()
    combined_loss(network, target, batch, alpha, direction).backward()

    worst = 0.0
    for name, param in network.named_parameters():
        analytic = param.grad.detach().clone().view(-1)
        numeric = torch.zeros_like(analytic)
        flat = param.data.view(-1)
        with torch.no_grad():
            for index in range(flat.numel()):
                original = float(flat[index])
                flat[index] = original + step
                upper = float(combined_loss(network, target, batch, alpha, direction))
                flat[index] = original - step
                lower = float(combined_loss(network, target, batch, alpha, direction))
                flat[index] = original
                numeric[index] = (upper - lower) / (2 * step)
        scale = float(analytic.norm() + numeric.norm())
        error = float((analytic - numeric).norm()) / scale if scale > 0 else 0.0
        logger.debug("Gradient check %s: relative error %.3g", name, error)
        worst = max(worst, error)
    return worst


def flat_parameters(network):
    return nn.utils.parameters_to_vector(network.parameters()).detach().clone()


def save_checkpoint(path, network, agent_id, hyperparams, mode):
    """Write one agent's parameters and metadata with torch.save

    :raises IOError: if the file cannot be written
    """
    payload = {
        "agent_id": agent_id,
        "observation_dim": network.observation_dim,
        "hidden": network.hidden,
        "recurrent": network.recurrent,
        "hyperparams_hash": hyperparams.digest(),
        "mode": mode,
        "parameters": flat_parameters(network),
    }
    try:
        torch.save(payload, str(path))
    except (OSError, RuntimeError) as err:
        raise IOError("Cannot write checkpoint {}: {}".format(path, err))
    logger.info("Saved checkpoint of %s to %s", agent_id, path)


def load_checkpoint(path, agent_id, observation_dim, hyperparams=None):
    """Rebuild an agent's network from a checkpoint after checking its metadata

    :returns: the network and the training mode
    :rtype: Tuple[QNetwork, str]
    :raises IOError: if the file cannot be read
    :raises ValueError: if the metadata does not match
    """
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=True)
    except (OSError, RuntimeError) as err:
        raise IOError("Cannot read checkpoint {}: {}".format(path, err))

    if payload["agent_id"] != agent_id or payload["observation_dim"] != observation_dim:
        raise ValueError(
            "Checkpoint {} holds agent {} with dimension {}, expected {} with {}".format(
                path, payload["agent_id"], payload["observation_dim"], agent_id, observation_dim
            )
        )
    if hyperparams is not None and payload["hyperparams_hash"] != hyperparams.digest():
        raise ValueError("Checkpoint {} was trained with other hyperparameters".format(path))

    network = QNetwork(observation_dim, payload["hidden"], recurrent=payload["recurrent"])
    nn.utils.vector_to_parameters(payload["parameters"], network.parameters())
    return network, payload["mode"]

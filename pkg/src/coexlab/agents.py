"""Learning agents for TXOP control.

Centerpiece is a deep Q-network trained from scratch in numpy: a small
multilayer perceptron over the scalar balance state, an experience-replay
ring buffer, a periodically synchronized target network, and plain
stochastic gradient descent on the squared TD error.  Alongside it live
the baselines used for comparisons: tabular Q-learning over a discretized
state, double DQN, a stateless windowed UCB1 bandit, and a fixed
listen-before-talk agent that never adjusts the TXOP.

All agents expose the same minimal interface: select(s) for the behaviour
policy, observe(s, a, r, s_next) for learning, greedy_action(s) for the
learned policy.  Every random draw descends from the run seed, so training
is bit-reproducible.
"""

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .env import NUM_ACTIONS, ACTION_UNCHANGED, GAMMA_FLOOR_MBPS
from .errors import ConfigError, TrainingDivergedError
from .metrics import clamp_utility, jain_index, utility
from .seeds import derive_seed

AGENT_DQN = "dqn"
AGENT_QLEARNING = "qlearning"
AGENT_DDQN = "ddqn"
AGENT_MAB = "mab"
AGENT_FIXED_LBT = "fixed_lbt"
AGENT_KINDS = (AGENT_DQN, AGENT_QLEARNING, AGENT_DDQN, AGENT_MAB, AGENT_FIXED_LBT)

# Tabular baseline: uniform bins of s on [0, 2] plus one overflow bin.
TABULAR_BINS = 21
TABULAR_RANGE = 2.0

# Bandit baseline: arm means over a sliding window of recent pulls.
MAB_WINDOW = 200

TRAINING_CSV_HEADER = (
    "episode",
    "mean_reward",
    "t_nr_us",
    "gamma_nr_mbps",
    "gamma_wf_mbps",
    "jain",
    "u_nr",
    "u_wf",
)


@dataclass(frozen=True)
class AgentConfig:
    """Training hyperparameters shared by all learning agents."""

    learning_rate: float = 0.001
    discount: float = 0.9
    epsilon: float = 0.1
    replay_capacity: int = 10_000
    batch_size: int = 64
    target_sync_interval: int = 100
    episodes: int = 1000
    steps_per_episode: int = 200
    hidden_sizes: tuple = (64, 64)

    def __post_init__(self):
        problems = []
        if not self.learning_rate > 0.0:
            problems.append(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.discount < 1.0:
            problems.append(f"discount must lie in [0, 1), got {self.discount}")
        if not 0.0 <= self.epsilon <= 1.0:
            problems.append(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.replay_capacity < 1:
            problems.append(f"replay_capacity must be >= 1, got {self.replay_capacity}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.batch_size > self.replay_capacity:
            problems.append(
                "batch_size must not exceed replay_capacity, got "
                f"batch_size={self.batch_size} > replay_capacity={self.replay_capacity}"
            )
        if self.target_sync_interval < 1:
            problems.append(
                f"target_sync_interval must be >= 1, got {self.target_sync_interval}"
            )
        if self.episodes < 1:
            problems.append(f"episodes must be >= 1, got {self.episodes}")
        if self.steps_per_episode < 1:
            problems.append(
                f"steps_per_episode must be >= 1, got {self.steps_per_episode}"
            )
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            problems.append(f"hidden_sizes must be positive, got {self.hidden_sizes}")
        if problems:
            raise ConfigError(problems)


@dataclass
class QNetwork:
    """Fully connected net: rectifier hidden layers, identity output.

    weights[k] has shape (fan_out, fan_in); biases[k] has shape (fan_out,).
    """

    weights: list
    biases: list

    @classmethod
    def initialized(cls, rng, layer_sizes=(1, 64, 64, NUM_ACTIONS)):
        """Seeded init: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)],
        biases zero."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self):
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def copy(self):
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def copy_from(self, other):
        for w, src in zip(self.weights, other.weights):
            w[...] = src
        for b, src in zip(self.biases, other.biases):
            b[...] = src

    def is_finite(self):
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )


def _forward(net, x):
    """Batched forward pass; x has shape (input_dim, batch).

    Returns (pre_activations, activations); activations[-1] is the output.
    """
    pre, acts = [], [x]
    a = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b[:, None]
        pre.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        acts.append(a)
    return pre, acts


def _batch_q(net, s_batch):
    """Q-values for a state vector; returns shape (NUM_ACTIONS, batch).

    The scalar state enters the net centred at parity, as (s - 1).
    """
    x = (np.asarray(s_batch, dtype=float) - 1.0).reshape(1, -1)
    return _forward(net, x)[1][-1]


def q_forward(net, s):
    """Action values for one state; deterministic, shape (NUM_ACTIONS,)."""
    return _batch_q(net, [float(s)])[:, 0].copy()


def select_action(net, s, epsilon, rng):
    """Epsilon-greedy behaviour policy; greedy ties break to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(NUM_ACTIONS))
    return int(np.argmax(q_forward(net, s)))


def td_target(r, s_next, target_net, discount):
    """Bootstrap target y = r + discount * max_a Q_target(s_next, a).

    Accepts scalars or equal-length arrays; sessions are fixed length, so
    there is no terminal special case.
    """
    scalar = np.isscalar(r) and np.isscalar(s_next)
    q_next = _batch_q(target_net, np.atleast_1d(s_next))
    y = np.asarray(r, dtype=float) + discount * q_next.max(axis=0)
    return float(y[0]) if scalar else y


def ddqn_target(r, s_next, net, target_net, discount):
    """Double-DQN target: the online net picks the action, the target net
    scores it."""
    scalar = np.isscalar(r) and np.isscalar(s_next)
    s_arr = np.atleast_1d(s_next)
    best = np.argmax(_batch_q(net, s_arr), axis=0)
    q_next = _batch_q(target_net, s_arr)[best, np.arange(len(s_arr))]
    y = np.asarray(r, dtype=float) + discount * q_next
    return float(y[0]) if scalar else y


@dataclass(frozen=True)
class Transition:
    """One experience tuple (s, a, r, s')."""

    state: float
    action: int
    reward: float
    next_state: float

    def __post_init__(self):
        problems = []
        for name in ("state", "reward", "next_state"):
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{name} must be finite, got {getattr(self, name)}")
        if not 0 <= self.action < NUM_ACTIONS:
            problems.append(f"action index out of range: {self.action}")
        if problems:
            raise ConfigError(problems)


class ReplayBuffer:
    """Fixed-capacity experience store with strictly FIFO eviction."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ConfigError([f"replay capacity must be >= 1, got {capacity}"])
        self.capacity = capacity
        self._s = np.empty(capacity)
        self._a = np.empty(capacity, dtype=np.int64)
        self._r = np.empty(capacity)
        self._s_next = np.empty(capacity)
        self._head = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, transition):
        if self._size < self.capacity:
            slot = (self._head + self._size) % self.capacity
            self._size += 1
        else:
            slot = self._head
            self._head = (self._head + 1) % self.capacity
        self._s[slot] = transition.state
        self._a[slot] = transition.action
        self._r[slot] = transition.reward
        self._s_next[slot] = transition.next_state

    def records(self):
        """Stored transitions, oldest first."""
        idx = (self._head + np.arange(self._size)) % self.capacity
        return [
            Transition(float(self._s[i]), int(self._a[i]), float(self._r[i]),
                       float(self._s_next[i]))
            for i in idx
        ]

    def sample_arrays(self, rng, batch_size):
        """Uniform sample without replacement as (s, a, r, s_next) arrays."""
        if batch_size > self._size:
            raise ConfigError(
                [f"cannot sample {batch_size} from buffer of size {self._size}"]
            )
        picks = rng.choice(self._size, size=batch_size, replace=False)
        idx = (self._head + picks) % self.capacity
        return self._s[idx], self._a[idx], self._r[idx], self._s_next[idx]


def _batch_arrays(batch):
    if isinstance(batch, tuple):
        s, a, r, s_next = batch
        return (
            np.asarray(s, dtype=float),
            np.asarray(a, dtype=np.int64),
            np.asarray(r, dtype=float),
            np.asarray(s_next, dtype=float),
        )
    s = np.array([t.state for t in batch])
    a = np.array([t.action for t in batch], dtype=np.int64)
    r = np.array([t.reward for t in batch])
    s_next = np.array([t.next_state for t in batch])
    return s, a, r, s_next


def td_loss_and_grads(net, s_batch, a_batch, y_batch):
    """Mean squared TD error and its exact gradients.

    Targets are constants; the gradient flows only through Q(s, a) of the
    taken actions.  Returns (loss, (weight_grads, bias_grads)).
    """
    n = len(s_batch)
    x = (np.asarray(s_batch, dtype=float) - 1.0).reshape(1, -1)
    pre, acts = _forward(net, x)
    q = acts[-1]
    cols = np.arange(n)
    err = q[a_batch, cols] - y_batch
    loss = float(np.mean(err**2))

    delta = np.zeros_like(q)
    delta[a_batch, cols] = 2.0 * err / n
    weight_grads = [None] * len(net.weights)
    bias_grads = [None] * len(net.biases)
    for k in range(len(net.weights) - 1, -1, -1):
        weight_grads[k] = delta @ acts[k].T
        bias_grads[k] = delta.sum(axis=1)
        if k > 0:
            delta = (net.weights[k].T @ delta) * (pre[k - 1] > 0.0)
    return loss, (weight_grads, bias_grads)


def dqn_update(net, batch, target_net, cfg, use_double=False):
    """One SGD step on the squared TD error; returns the pre-step loss."""
    s, a, r, s_next = _batch_arrays(batch)
    if use_double:
        y = ddqn_target(r, s_next, net, target_net, cfg.discount)
    else:
        y = td_target(r, s_next, target_net, cfg.discount)
    loss, (weight_grads, bias_grads) = td_loss_and_grads(net, s, a, y)
    finite = all(np.isfinite(g).all() for g in weight_grads) and all(
        np.isfinite(g).all() for g in bias_grads
    )
    if not finite or not math.isfinite(loss):
        raise TrainingDivergedError("non-finite gradient in update")
    for w, g in zip(net.weights, weight_grads):
        w -= cfg.learning_rate * g
    for b, g in zip(net.biases, bias_grads):
        b -= cfg.learning_rate * g
    if not net.is_finite():
        raise TrainingDivergedError("non-finite parameters after update")
    return loss


def sync_target(net, target_net, step_count, interval):
    """Copy online parameters into the target every `interval` training steps.

    Returns (target_net, copied) so callers can count actual copies.
    """
    copied = step_count % interval == 0
    if copied:
        target_net.copy_from(net)
    return target_net, copied


class DqnAgent:
    """DQN with replay, target network, and epsilon-greedy exploration."""

    def __init__(self, cfg, seed, use_double=False):
        init_rng = np.random.default_rng(derive_seed(seed, "net-init"))
        layer_sizes = (1,) + tuple(cfg.hidden_sizes) + (NUM_ACTIONS,)
        self.net = QNetwork.initialized(init_rng, layer_sizes)
        self.target_net = self.net.copy()
        self.replay = ReplayBuffer(cfg.replay_capacity)
        self.action_rng = np.random.default_rng(derive_seed(seed, "explore"))
        self.sample_rng = np.random.default_rng(derive_seed(seed, "replay"))
        self.cfg = cfg
        self.use_double = use_double
        self.training_steps = 0
        self.last_loss = float("nan")

    def select(self, s):
        return select_action(self.net, s, self.cfg.epsilon, self.action_rng)

    def observe(self, s, a, r, s_next):
        self.replay.push(Transition(s, a, r, s_next))
        if len(self.replay) >= self.cfg.batch_size:
            batch = self.replay.sample_arrays(self.sample_rng, self.cfg.batch_size)
            self.last_loss = dqn_update(
                self.net, batch, self.target_net, self.cfg, use_double=self.use_double
            )
            self.training_steps += 1
            sync_target(
                self.net, self.target_net, self.training_steps,
                self.cfg.target_sync_interval,
            )

    def greedy_action(self, s):
        return int(np.argmax(q_forward(self.net, s)))


def state_bin(s):
    """Tabular state index: uniform bins on [0, 2] plus one overflow bin."""
    if s >= TABULAR_RANGE:
        return TABULAR_BINS
    return min(max(int(s / (TABULAR_RANGE / TABULAR_BINS)), 0), TABULAR_BINS - 1)


class TabularQAgent:
    """Q-learning over the discretized balance state."""

    def __init__(self, cfg, seed):
        self.q = np.zeros((TABULAR_BINS + 1, NUM_ACTIONS))
        self.action_rng = np.random.default_rng(derive_seed(seed, "explore"))
        self.cfg = cfg

    def select(self, s):
        if self.action_rng.random() < self.cfg.epsilon:
            return int(self.action_rng.integers(NUM_ACTIONS))
        return int(np.argmax(self.q[state_bin(s)]))

    def observe(self, s, a, r, s_next):
        y = r + self.cfg.discount * float(np.max(self.q[state_bin(s_next)]))
        row = state_bin(s)
        self.q[row, a] += self.cfg.learning_rate * (y - self.q[row, a])

    def greedy_action(self, s):
        return int(np.argmax(self.q[state_bin(s)]))


class MabAgent:
    """Stateless UCB1 over the three actions with windowed mean rewards."""

    def __init__(self, cfg, seed, window=MAB_WINDOW):
        self.recent = [deque(maxlen=window) for _ in range(NUM_ACTIONS)]
        self.counts = np.zeros(NUM_ACTIONS, dtype=np.int64)
        self.total = 0

    def _means(self):
        return np.array(
            [np.mean(d) if d else -np.inf for d in self.recent]
        )

    def select(self, s):
        for arm in range(NUM_ACTIONS):
            if self.counts[arm] == 0:
                return arm
        bonus = np.sqrt(2.0 * math.log(self.total) / self.counts)
        return int(np.argmax(self._means() + bonus))

    def observe(self, s, a, r, s_next):
        self.recent[a].append(r)
        self.counts[a] += 1
        self.total += 1

    def greedy_action(self, s):
        means = self._means()
        if np.all(np.isinf(means)):
            return 0
        return int(np.argmax(means))


class FixedLbtAgent:
    """Non-learning baseline: the TXOP stays wherever it started."""

    def __init__(self, cfg, seed):
        pass

    def select(self, s):
        return ACTION_UNCHANGED

    def observe(self, s, a, r, s_next):
        pass

    def greedy_action(self, s):
        return ACTION_UNCHANGED


def build_agent(agent_kind, cfg, seed):
    if agent_kind == AGENT_DQN:
        return DqnAgent(cfg, seed)
    if agent_kind == AGENT_DDQN:
        return DqnAgent(cfg, seed, use_double=True)
    if agent_kind == AGENT_QLEARNING:
        return TabularQAgent(cfg, seed)
    if agent_kind == AGENT_MAB:
        return MabAgent(cfg, seed)
    if agent_kind == AGENT_FIXED_LBT:
        return FixedLbtAgent(cfg, seed)
    raise ConfigError(
        [f"unknown agent kind {agent_kind!r}; expected one of {AGENT_KINDS}"]
    )


@dataclass(frozen=True)
class EpisodeRecord:
    """Per-episode training log row."""

    episode: int
    mean_reward: float
    t_nr_us: float
    gamma_nr_mbps: float
    gamma_wf_mbps: float
    jain: float
    u_nr: float
    u_wf: float
    mean_loss: float = float("nan")


@dataclass
class TrainLog:
    """Full training trace plus the trained agent."""

    agent_kind: str
    policy_name: str
    seed: int
    records: list
    agent: object = field(compare=False, repr=False)

    def mean_rewards(self):
        return [rec.mean_reward for rec in self.records]

    def greedy_action(self, s):
        return self.agent.greedy_action(s)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAINING_CSV_HEADER)
            for rec in self.records:
                writer.writerow([
                    rec.episode,
                    rec.mean_reward,
                    rec.t_nr_us,
                    rec.gamma_nr_mbps,
                    rec.gamma_wf_mbps,
                    rec.jain,
                    rec.u_nr,
                    rec.u_wf,
                ])


def train(env_factory, agent_kind, cfg, policy, seed, utility_model=None):
    """Run E fixed-length episodes of one agent; deterministic per seed.

    The environment comes from env_factory(seed).  Logs per-episode mean
    reward, final TXOP, mean throughputs, Jain index, and mean clamped
    utilities (blank when no utility model is supplied).
    """
    agent = build_agent(agent_kind, cfg, seed)
    env = env_factory(seed)
    records = []
    for episode in range(1, cfg.episodes + 1):
        s = env.reset(episode)
        rewards = []
        g_nr, g_wf, jains, u_nr, u_wf, losses = [], [], [], [], [], []
        t_nr_final = float("nan")
        for step_idx in range(1, cfg.steps_per_episode + 1):
            a = agent.select(s)
            result = env.step(a)
            try:
                agent.observe(s, a, result.reward, result.next_state)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(
                    str(exc), episode=episode, step=step_idx
                ) from exc
            s = result.next_state
            rewards.append(result.reward)
            gn = result.metrics.gamma_nr
            gw = result.metrics.gamma_wf
            g_nr.append(gn)
            g_wf.append(gw)
            jains.append(
                jain_index(max(gn, GAMMA_FLOOR_MBPS), max(gw, GAMMA_FLOOR_MBPS))
            )
            if utility_model is not None:
                u_nr.append(clamp_utility(utility(max(gn, GAMMA_FLOOR_MBPS),
                                                  utility_model)))
                u_wf.append(clamp_utility(utility(max(gw, GAMMA_FLOOR_MBPS),
                                                  utility_model)))
            loss = getattr(agent, "last_loss", float("nan"))
            if math.isfinite(loss):
                losses.append(loss)
            t_nr_final = result.control.t_nr_us
        records.append(EpisodeRecord(
            episode=episode,
            mean_reward=float(np.mean(rewards)),
            t_nr_us=t_nr_final,
            gamma_nr_mbps=float(np.mean(g_nr)),
            gamma_wf_mbps=float(np.mean(g_wf)),
            jain=float(np.mean(jains)),
            u_nr=float(np.mean(u_nr)) if u_nr else float("nan"),
            u_wf=float(np.mean(u_wf)) if u_wf else float("nan"),
            mean_loss=float(np.mean(losses)) if losses else float("nan"),
        ))
    return TrainLog(
        agent_kind=agent_kind,
        policy_name=policy.name,
        seed=seed,
        records=records,
        agent=agent,
    )

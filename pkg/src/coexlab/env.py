"""MDP wrapper around the slotted coexistence simulator.

The control variable is the NR-U transmit-opportunity duration.  Each
environment step applies a multiplicative adjustment to the TXOP, runs one
measurement window of the simulator, observes the resulting balance state,
and pays a banded reward centred on parity.

State s is the NR-U/Wi-Fi throughput ratio, or the ratio of clamped
utilities when the policy is utility-driven.  Rewards depend only on
|s - 1|: the innermost band pays r3, the middle band r2, everything else
r1, with r1 < r2 < r3.
"""

from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .metrics import UtilityModel, clamp_utility, utility
from .seeds import derive_seed
from .simulate import EpisodeMetrics, SimConfig, reseed, run_window

ACTION_INCREASE = 0
ACTION_DECREASE = 1
ACTION_UNCHANGED = 2
NUM_ACTIONS = 3

# Floor applied to each throughput before forming the ratio, so a starved
# window yields an extreme but finite state.
GAMMA_FLOOR_MBPS = 1e-6

# The observed ratio is clipped into [1/S_CAP, S_CAP].
S_CAP = 10.0

STATE_MODE_THROUGHPUT = "throughput_ratio"
STATE_MODE_UTILITY = "utility_ratio"


@dataclass(frozen=True)
class TxopControl:
    """Current NR-U TXOP setting together with its admissible range."""

    t_nr_us: float
    t_min_us: float
    t_max_us: float
    up_factor: float = 1.1
    down_factor: float = 0.9

    def __post_init__(self):
        problems = []
        if not self.t_min_us > 0.0:
            problems.append(f"t_min_us must be positive, got {self.t_min_us}")
        if not self.t_max_us >= self.t_min_us:
            problems.append(
                f"t_max_us must be >= t_min_us, got {self.t_max_us} < {self.t_min_us}"
            )
        if not self.t_min_us <= self.t_nr_us <= self.t_max_us:
            problems.append(
                f"t_nr_us must lie in [{self.t_min_us}, {self.t_max_us}], got {self.t_nr_us}"
            )
        if not self.up_factor > 1.0:
            problems.append(f"up_factor must exceed 1, got {self.up_factor}")
        if not 0.0 < self.down_factor < 1.0:
            problems.append(f"down_factor must lie in (0, 1), got {self.down_factor}")
        if problems:
            raise ConfigError(problems)


def apply_action(ctrl, action):
    """Return the control after one adjustment, clamped to its range."""
    if action == ACTION_INCREASE:
        t = ctrl.t_nr_us * ctrl.up_factor
    elif action == ACTION_DECREASE:
        t = ctrl.t_nr_us * ctrl.down_factor
    elif action == ACTION_UNCHANGED:
        t = ctrl.t_nr_us
    else:
        raise ConfigError([f"unknown action index {action}"])
    t = min(max(t, ctrl.t_min_us), ctrl.t_max_us)
    return replace(ctrl, t_nr_us=t)


@dataclass(frozen=True)
class RewardPolicy:
    """Banded reward around parity plus the choice of state signal.

    d2 < d1 are the half-widths of the inner and middle bands; r1 < r2 < r3
    are the payments from outermost to innermost.
    """

    name: str
    d1: float
    d2: float
    r1: float
    r2: float
    r3: float
    state_mode: str = STATE_MODE_THROUGHPUT

    def __post_init__(self):
        problems = []
        if not 0.0 < self.d2 < self.d1:
            problems.append(
                f"need 0 < d2 < d1, got d2={self.d2}, d1={self.d1}"
            )
        if not self.r1 < self.r2 < self.r3:
            problems.append(
                f"need r1 < r2 < r3, got ({self.r1}, {self.r2}, {self.r3})"
            )
        if self.state_mode not in (STATE_MODE_THROUGHPUT, STATE_MODE_UTILITY):
            problems.append(f"unknown state_mode {self.state_mode!r}")
        if problems:
            raise ConfigError(problems)

    @property
    def uses_utility_state(self):
        return self.state_mode == STATE_MODE_UTILITY


def compute_reward(s, policy):
    """Banded reward: r3 inside |s-1| <= d2, r2 inside |s-1| <= d1, else r1."""
    d = abs(s - 1.0)
    if d <= policy.d2:
        return policy.r3
    if d <= policy.d1:
        return policy.r2
    return policy.r1


def observe_state(metrics, policy, utility_model=None):
    """Map one window's throughputs to the scalar balance state.

    Throughput-ratio policies never touch the utility model; utility-ratio
    policies require one.
    """
    g_nr = max(metrics.gamma_nr, GAMMA_FLOOR_MBPS)
    g_wf = max(metrics.gamma_wf, GAMMA_FLOOR_MBPS)
    if policy.uses_utility_state:
        if utility_model is None:
            raise ConfigError(
                [f"policy {policy.name!r} needs a utility model for its state"]
            )
        u_nr = clamp_utility(utility(g_nr, utility_model))
        u_wf = clamp_utility(utility(g_wf, utility_model))
        s = u_nr / u_wf
    else:
        s = g_nr / g_wf
    return float(min(max(s, 1.0 / S_CAP), S_CAP))


@dataclass(frozen=True)
class EnvStep:
    """One transition: what was observed, done, and measured."""

    state: float
    action: int
    reward: float
    next_state: float
    metrics: EpisodeMetrics
    control: TxopControl


def env_step(sim_cfg, ctrl, action, policy, utility_model, seed,
             prev_state=float("nan")):
    """Pure single-step transition; returns (EnvStep, new control).

    Applies the action, simulates one window under the new TXOP with the
    given seed, and pays the reward on the post-action state.
    """
    new_ctrl = apply_action(ctrl, action)
    metrics = run_window(reseed(sim_cfg, seed), t_nr_override=new_ctrl.t_nr_us)
    next_state = observe_state(metrics, policy, utility_model)
    reward = compute_reward(next_state, policy)
    step = EnvStep(
        state=prev_state,
        action=action,
        reward=reward,
        next_state=next_state,
        metrics=metrics,
        control=new_ctrl,
    )
    return step, new_ctrl


@dataclass
class CoexEnv:
    """Episodic environment over the simulator.

    Each episode restarts the TXOP at the initial control setting and runs
    a fixed number of adjustment steps.  Window seeds derive from
    (run_seed, episode, step), so trajectories are reproducible and
    distinct windows never share a random stream.
    """

    sim_cfg: SimConfig
    initial_ctrl: TxopControl
    policy: RewardPolicy
    run_seed: int
    utility_model: UtilityModel | None = None
    ctrl: TxopControl = field(init=False)
    episode_index: int = field(init=False, default=0)
    step_index: int = field(init=False, default=0)
    state: float = field(init=False, default=float("nan"))

    def __post_init__(self):
        if self.policy.uses_utility_state and self.utility_model is None:
            raise ConfigError(
                [f"policy {self.policy.name!r} needs a utility model"]
            )
        self.ctrl = self.initial_ctrl

    def _window_seed(self):
        return derive_seed(self.run_seed, self.episode_index, self.step_index)

    def reset(self, episode_index=None):
        """Start a new episode; returns the initial state observation."""
        self.episode_index = (
            self.episode_index + 1 if episode_index is None else episode_index
        )
        self.step_index = 0
        self.ctrl = self.initial_ctrl
        metrics = run_window(
            reseed(self.sim_cfg, self._window_seed()),
            t_nr_override=self.ctrl.t_nr_us,
        )
        self.state = observe_state(metrics, self.policy, self.utility_model)
        return self.state

    def step(self, action):
        """Apply one action; returns the full transition record."""
        self.step_index += 1
        result, new_ctrl = env_step(
            self.sim_cfg,
            self.ctrl,
            action,
            self.policy,
            self.utility_model,
            self._window_seed(),
            prev_state=self.state,
        )
        self.ctrl = new_ctrl
        self.state = result.next_state
        return result

"""Spectrum-coexistence laboratory for NR-U / Wi-Fi channel sharing."""

from .access import (
    AccessConfig,
    ChainSolution,
    CoexistenceOperatingPoint,
    analytical_throughput,
    solve_chain,
    solve_coexistence_fixed_point,
    with_txop,
)
from .errors import (
    ConfigError,
    FixedPointError,
    InsufficientDataError,
    TrainingDivergedError,
    UndefinedFairnessError,
)
from .agents import (
    AGENT_KINDS,
    AgentConfig,
    DqnAgent,
    QNetwork,
    ReplayBuffer,
    TrainLog,
    Transition,
    build_agent,
    train,
)
from .env import (
    ACTION_DECREASE,
    ACTION_INCREASE,
    ACTION_UNCHANGED,
    CoexEnv,
    EnvStep,
    RewardPolicy,
    TxopControl,
    apply_action,
    compute_reward,
    env_step,
    observe_state,
)
from .harness import (
    SCHEMES,
    ExperimentConfig,
    ReportBundle,
    RunResult,
    StabilizationCriterion,
    detect_stabilization,
    emit_report,
    load_config,
    run_one,
    run_suite,
)
from .metrics import UtilityModel, jain_index, utility, utility_fairness
from .seeds import derive_seed
from .simulate import RNG_FAMILY, EpisodeMetrics, SimConfig, reseed, run_window

__version__ = "0.1.0"

"""Experiment orchestration: configs, sweeps, stabilization, reports.

The harness turns one JSON config plus a sweep grid (schemes x priority
classes x pair counts x trials) into deterministic training runs and a
CSV/plain-text report bundle.  Every emitted number is a pure function of
(config file, base_seed); wall-clock timestamps only ever appear in the
metadata sidecar, so CSV bodies are byte-identical across reruns.

Per-run seeds come from a counter-free derivation,
run_seed = base_seed XOR mix(scheme, priority, n_pairs, trial),
so grid cells are independent: adding or removing cells cannot shift any
other cell's random stream.
"""

import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from statistics import fmean

from .access import AccessConfig, solve_coexistence_fixed_point
from .agents import (
    AGENT_DDQN,
    AGENT_DQN,
    AGENT_FIXED_LBT,
    AGENT_MAB,
    AGENT_QLEARNING,
    AgentConfig,
    train,
)
from .env import CoexEnv, RewardPolicy, TxopControl
from .errors import ConfigError, InsufficientDataError
from .metrics import UtilityModel, jain_index
from .seeds import derive_seed
from .simulate import SimConfig

SCHEMES = ("LBT", "Q1", "Q2", "Q2u", "QLearning", "DDQN", "MAB")

# scheme -> (agent kind, reward policy driving its state/reward)
SCHEME_AGENTS = {
    "LBT": (AGENT_FIXED_LBT, "Q1"),
    "Q1": (AGENT_DQN, "Q1"),
    "Q2": (AGENT_DQN, "Q2"),
    "Q2u": (AGENT_DQN, "Q2u"),
    "QLearning": (AGENT_QLEARNING, "Q1"),
    "DDQN": (AGENT_DDQN, "Q1"),
    "MAB": (AGENT_MAB, "Q1"),
}

SWEEP_CSV_HEADER = (
    "scheme", "priority", "n_pairs", "trial", "agg_throughput_mbps",
    "jain", "mean_utility", "utility_fairness", "stabilization_episode",
)

# best-to-worst expectations checked by `sweep --check`
ORDER_THROUGHPUT = ("LBT", "Q2u", "Q2", "Q1")
ORDER_FAIRNESS = ("Q1", "Q2", "Q2u", "LBT")
ORDERING_MARGIN = 0.03

SUMMARY_TAIL_EPISODES = 100

SEED_SCHEME = (
    "run_seed = base_seed XOR splitmix64-fold(scheme, priority, n_pairs, trial); "
    "window seeds derive from (run_seed, episode, step)"
)


@dataclass(frozen=True)
class StabilizationCriterion:
    """Sliding-window settling test on the per-episode mean reward."""

    window: int = 50
    rel_tol: float = 0.05
    hold: int = 50

    def __post_init__(self):
        problems = []
        if not (isinstance(self.window, int) and self.window >= 2):
            problems.append(f"window must be an integer >= 2, got {self.window!r}")
        if not 0.0 < self.rel_tol < 1.0:
            problems.append(f"rel_tol must be in (0, 1), got {self.rel_tol!r}")
        if not (isinstance(self.hold, int) and self.hold >= 1):
            problems.append(f"hold must be an integer >= 1, got {self.hold!r}")
        if problems:
            raise ConfigError(problems)


def detect_stabilization(rewards, crit):
    """First episode t* where the windowed mean settles near a local baseline.

    Episodes are numbered from 1.  mu_t is the mean over episodes
    (t - W + 1 .. t).  A candidate span anchors its baseline mu_bar at its
    first full window and must satisfy |mu_t - mu_bar| <= rel_tol * |mu_bar|
    for `hold` consecutive window positions; the result is the final episode
    of the earliest such span.  Returns None when no span qualifies
    (zero baselines can never qualify: the relative criterion is undefined
    there).  The test is invariant to positive rescaling of the rewards.
    """
    vals = [float(r) for r in rewards]
    w, hold = crit.window, crit.hold
    if len(vals) < w + hold - 1:
        raise InsufficientDataError(
            f"need at least window + hold - 1 = {w + hold - 1} episodes, "
            f"got {len(vals)}"
        )
    prefix = [0.0]
    for v in vals:
        prefix.append(prefix[-1] + v)

    def mu(t):
        return (prefix[t] - prefix[t - w]) / w

    for start in range(w, len(vals) - hold + 2):
        base = mu(start)
        if base == 0.0:
            continue
        if all(
            abs(mu(t) - base) <= crit.rel_tol * abs(base)
            for t in range(start, start + hold)
        ):
            return start + hold - 1
    return None


@dataclass(frozen=True)
class ClassParams:
    """Access parameters and TXOP bounds of one priority class."""

    wifi: AccessConfig
    nru: AccessConfig
    t_min_us: float
    t_max_us: float

    def __post_init__(self):
        if not 0.0 < self.t_min_us <= self.t_max_us:
            raise ConfigError(
                [f"need 0 < t_min_us <= t_max_us, got ({self.t_min_us!r}, {self.t_max_us!r})"]
            )


def _scalar_violations(scheme, n_pairs, priority_class, trials, base_seed):
    problems = []
    if scheme not in SCHEMES:
        problems.append(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if not (isinstance(n_pairs, int) and 1 <= n_pairs <= 10):
        problems.append(f"n_pairs must be an integer in 1..10, got {n_pairs!r}")
    if not (isinstance(priority_class, int) and 1 <= priority_class <= 4):
        problems.append(
            f"priority_class must be an integer in 1..4, got {priority_class!r}"
        )
    if not (isinstance(trials, int) and trials >= 1):
        problems.append(f"trials must be an integer >= 1, got {trials!r}")
    if not (isinstance(base_seed, int) and 0 <= base_seed < 2 ** 64):
        problems.append(f"base_seed must be a 64-bit unsigned integer, got {base_seed!r}")
    return problems


@dataclass
class ExperimentConfig:
    """Fully resolved experiment settings.

    `sim` and `txop` are templates for the configured (priority_class,
    n_pairs) cell; sweeps re-derive both per cell from `classes`.
    `resolved` echoes the defaulted JSON document for metadata output.
    """

    scheme: str
    n_pairs: int
    priority_class: int
    agent: AgentConfig
    sim: SimConfig
    txop: TxopControl
    utility: UtilityModel
    policies: dict
    classes: dict
    stabilization: StabilizationCriterion
    trials: int
    base_seed: int
    sweep_schemes: tuple
    sweep_priorities: tuple
    sweep_n_pairs: tuple
    resolved: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        problems = _scalar_violations(
            self.scheme, self.n_pairs, self.priority_class, self.trials,
            self.base_seed,
        )
        if problems:
            raise ConfigError(problems)


def default_config_dict():
    """The packaged defaults as a plain dict (fresh copy)."""
    text = resources.files("coexlab").joinpath("data/defaults.json").read_text()
    return json.loads(text)


def _merge(base, override, path, violations):
    """Deep-merge `override` onto `base`; unknown keys are violations."""
    out = dict(base)
    for key, val in override.items():
        dotted = ".".join(path + [key])
        if key not in base:
            violations.append(f"unknown config key {dotted!r}")
            continue
        cur = base[key]
        if isinstance(cur, dict) and isinstance(val, dict):
            out[key] = _merge(cur, val, path + [key], violations)
        else:
            out[key] = val
    return out


def _access_from(block, label, violations):
    try:
        return AccessConfig(
            w0=int(block["w0"]),
            max_stage=int(block["max_stage"]),
            cw_max=int(block["cw_max"]),
            slot_time_us=float(block["slot_time_us"]),
            defer_time_us=float(block["defer_time_us"]),
            txop_duration_us=float(block["txop_duration_us"]),
            payload_bits_per_txop=int(block["payload_bits_per_txop"]),
        )
    except ConfigError as exc:
        violations.extend(f"{label}: {v}" for v in exc.violations)
    except (KeyError, TypeError, ValueError) as exc:
        violations.append(f"{label}: {exc!r}")
    return None


def lone_nru_throughput(cls_params):
    """Analytical throughput of a single NR-U node with no contenders.

    Used as the derived utility ceiling B_max when the config leaves it
    null: no allocation in the class can beat an uncontested channel.
    """
    op = solve_coexistence_fixed_point(0, 1, cls_params.wifi, cls_params.nru)
    return op.gamma_nr


def _utility_from(block, cls_params):
    b_max = block["b_max_mbps"]
    if b_max is None:
        b_max = lone_nru_throughput(cls_params)
    return UtilityModel(b_min_mbps=float(block["b_min_mbps"]), b_max_mbps=float(b_max))


def utility_model_for(cfg, priority):
    """Utility model for one priority class (derives B_max when null)."""
    return _utility_from(cfg.resolved["utility"], cfg.classes[priority])


def _txop_from(block, cls_params):
    return TxopControl(
        t_nr_us=cls_params.t_max_us,
        t_min_us=cls_params.t_min_us,
        t_max_us=cls_params.t_max_us,
        up_factor=float(block["up_factor"]),
        down_factor=float(block["down_factor"]),
    )


def txop_control_for(cfg, priority):
    """Initial TXOP control for one class: start wide open at t_max."""
    return _txop_from(cfg.resolved["txop"], cfg.classes[priority])


def build_config(resolved, pre_violations=()):
    """Validate a fully merged config dict into an ExperimentConfig.

    Collects every violation across all sections (on top of any the merge
    already found) before raising, so a bad file reports all its problems
    at once.
    """
    violations = list(pre_violations)

    scheme = resolved.get("scheme")
    n_pairs = resolved.get("n_pairs")
    priority = resolved.get("priority_class")
    trials = resolved.get("trials")
    base_seed = resolved.get("base_seed")
    violations.extend(_scalar_violations(scheme, n_pairs, priority, trials, base_seed))

    agent = None
    try:
        block = dict(resolved["agent"])
        block["hidden_sizes"] = tuple(int(h) for h in block["hidden_sizes"])
        agent = AgentConfig(**block)
    except ConfigError as exc:
        violations.extend(f"agent: {v}" for v in exc.violations)
    except (KeyError, TypeError, ValueError) as exc:
        violations.append(f"agent: {exc!r}")

    classes = {}
    for key in sorted(resolved.get("priority_classes", {})):
        block = resolved["priority_classes"][key]
        label = f"priority_classes.{key}"
        if not (key.isdigit() and 1 <= int(key) <= 4):
            violations.append(f"{label}: class keys must be '1'..'4'")
            continue
        wifi = _access_from(block.get("wifi", {}), f"{label}.wifi", violations)
        nru = _access_from(block.get("nru", {}), f"{label}.nru", violations)
        if wifi is None or nru is None:
            continue
        try:
            classes[int(key)] = ClassParams(
                wifi=wifi,
                nru=nru,
                t_min_us=float(block["t_min_us"]),
                t_max_us=float(block["t_max_us"]),
            )
        except ConfigError as exc:
            violations.extend(f"{label}: {v}" for v in exc.violations)
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"{label}: {exc!r}")

    policies = {}
    for name, block in resolved.get("reward_policies", {}).items():
        try:
            policies[name] = RewardPolicy(
                name=name,
                d1=float(block["d1"]),
                d2=float(block["d2"]),
                r1=float(block["r1"]),
                r2=float(block["r2"]),
                r3=float(block["r3"]),
                state_mode=str(block["state_mode"]),
            )
        except ConfigError as exc:
            violations.extend(f"reward_policies.{name}: {v}" for v in exc.violations)
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"reward_policies.{name}: {exc!r}")
    for needed in {policy for _, policy in SCHEME_AGENTS.values()}:
        if needed not in policies:
            violations.append(f"reward_policies must define {needed!r}")

    stabilization = None
    try:
        block = resolved["stabilization"]
        stabilization = StabilizationCriterion(
            window=int(block["window"]),
            rel_tol=float(block["rel_tol"]),
            hold=int(block["hold"]),
        )
    except ConfigError as exc:
        violations.extend(f"stabilization: {v}" for v in exc.violations)
    except (KeyError, TypeError, ValueError) as exc:
        violations.append(f"stabilization: {exc!r}")

    # null sweep axes fall back to the single configured value
    sweep = resolved.get("sweep", {})
    raw = sweep.get("schemes")
    sweep_schemes = tuple(raw) if raw else (scheme,) if scheme in SCHEMES else ()
    violations.extend(
        f"sweep.schemes: unknown scheme {s!r}" for s in sweep_schemes
        if s not in SCHEMES
    )
    raw = sweep.get("priorities")
    sweep_priorities = (
        tuple(int(p) for p in raw) if raw
        else (priority,) if isinstance(priority, int) else ()
    )
    violations.extend(
        f"sweep.priorities: class {p!r} outside 1..4" for p in sweep_priorities
        if not 1 <= p <= 4
    )
    raw = sweep.get("n_pairs")
    sweep_n_pairs = (
        tuple(int(n) for n in raw) if raw
        else (n_pairs,) if isinstance(n_pairs, int) else ()
    )
    violations.extend(
        f"sweep.n_pairs: {n!r} outside 1..10" for n in sweep_n_pairs
        if not 1 <= n <= 10
    )

    sim = txop = utility = None
    if not violations and priority in classes:
        cls = classes[priority]
        try:
            sim = SimConfig(
                wifi=cls.wifi,
                nru=cls.nru,
                n_wifi=n_pairs,
                n_nru=n_pairs,
                window_slots=int(resolved["sim"]["window_slots"]),
                rng_seed=base_seed,
            )
        except ConfigError as exc:
            violations.extend(f"sim: {v}" for v in exc.violations)
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"sim: {exc!r}")
        try:
            txop = _txop_from(resolved["txop"], cls)
        except ConfigError as exc:
            violations.extend(f"txop: {v}" for v in exc.violations)
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"txop: {exc!r}")
        try:
            utility = _utility_from(resolved["utility"], cls)
        except ConfigError as exc:
            violations.extend(f"utility: {v}" for v in exc.violations)
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"utility: {exc!r}")
    elif not violations:
        violations.append(f"priority_classes is missing class {priority!r}")

    if violations:
        raise ConfigError(violations)
    return ExperimentConfig(
        scheme=scheme,
        n_pairs=n_pairs,
        priority_class=priority,
        agent=agent,
        sim=sim,
        txop=txop,
        utility=utility,
        policies=policies,
        classes=classes,
        stabilization=stabilization,
        trials=trials,
        base_seed=base_seed,
        sweep_schemes=sweep_schemes,
        sweep_priorities=sweep_priorities,
        sweep_n_pairs=sweep_n_pairs,
        resolved=resolved,
    )


def load_config(path=None, overrides=None):
    """Load a JSON config over the packaged defaults.

    `path` may be None (pure defaults).  `overrides` is a dict of dotted
    keys (e.g. "base_seed", "agent.episodes") applied last, used by the
    CLI flags.  Raises ConfigError listing every violation, including
    unknown keys: silence is never an option in a sweep config.
    """
    base = default_config_dict()
    violations = []
    merged = base
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config {path!r}: {exc}"])
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config {path!r} is not valid JSON: {exc}"])
        if not isinstance(user, dict):
            raise ConfigError([f"config root must be a JSON object, got {type(user).__name__}"])
        if user.get("schema_version", base["schema_version"]) != base["schema_version"]:
            raise ConfigError(
                [f"unsupported schema_version {user['schema_version']!r}; "
                 f"this build reads version {base['schema_version']}"]
            )
        merged = _merge(base, user, [], violations)
    for dotted, value in (overrides or {}).items():
        node = merged
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.get(part) if isinstance(node, dict) else None
            if node is None:
                break
        if isinstance(node, dict) and parts[-1] in node:
            node[parts[-1]] = value
        else:
            violations.append(f"unknown override key {dotted!r}")
    return build_config(merged, pre_violations=violations)


def run_seed_for(base_seed, scheme, priority, n_pairs, trial):
    """Independent per-run seed; no counter, so cells never interact."""
    return base_seed ^ derive_seed(0, scheme, priority, n_pairs, trial)


@dataclass(frozen=True)
class RunSpec:
    scheme: str
    priority: int
    n_pairs: int
    trial: int


@dataclass(frozen=True)
class RunResult:
    """Summary of one training run (last-100-episode means), or its failure."""

    scheme: str
    priority: int
    n_pairs: int
    trial: int
    run_seed: int
    agg_throughput_mbps: float = None
    jain: float = None
    mean_utility: float = None
    utility_fairness: float = None
    stabilization_episode: int = None
    error: str = None
    log: object = field(default=None, compare=False, repr=False)


def run_one(cfg, scheme, priority, n_pairs, trial, keep_log=True):
    """Train one (scheme, priority, n_pairs, trial) cell and summarize it."""
    agent_kind, policy_name = SCHEME_AGENTS[scheme]
    policy = cfg.policies[policy_name]
    cls = cfg.classes[priority]
    seed = run_seed_for(cfg.base_seed, scheme, priority, n_pairs, trial)
    umodel = utility_model_for(cfg, priority)
    ctrl = txop_control_for(cfg, priority)
    sim_cfg = SimConfig(
        wifi=cls.wifi,
        nru=cls.nru,
        n_wifi=n_pairs,
        n_nru=n_pairs,
        window_slots=cfg.sim.window_slots,
        rng_seed=seed,
    )

    def factory(run_seed):
        return CoexEnv(
            sim_cfg=sim_cfg,
            initial_ctrl=ctrl,
            policy=policy,
            run_seed=run_seed,
            utility_model=umodel,
        )

    log = train(factory, agent_kind, cfg.agent, policy, seed, utility_model=umodel)
    tail = log.records[-min(SUMMARY_TAIL_EPISODES, len(log.records)):]
    agg = fmean(r.gamma_nr_mbps + r.gamma_wf_mbps for r in tail)
    jain = fmean(r.jain for r in tail)
    mean_utility = fmean((r.u_nr + r.u_wf) / 2.0 for r in tail)
    utility_fair = fmean(jain_index(r.u_nr, r.u_wf) for r in tail)
    try:
        stab = detect_stabilization(log.mean_rewards(), cfg.stabilization)
    except InsufficientDataError:
        stab = None
    return RunResult(
        scheme=scheme,
        priority=priority,
        n_pairs=n_pairs,
        trial=trial,
        run_seed=seed,
        agg_throughput_mbps=agg,
        jain=jain,
        mean_utility=mean_utility,
        utility_fairness=utility_fair,
        stabilization_episode=stab,
        log=log if keep_log else None,
    )


def _suite_cell(args):
    """Worker wrapper: any run failure becomes a per-cell record."""
    cfg, spec, keep_log = args
    try:
        return run_one(cfg, spec.scheme, spec.priority, spec.n_pairs, spec.trial,
                       keep_log=keep_log)
    except Exception as exc:  # recorded, never aborts the suite
        return RunResult(
            scheme=spec.scheme,
            priority=spec.priority,
            n_pairs=spec.n_pairs,
            trial=spec.trial,
            run_seed=run_seed_for(cfg.base_seed, spec.scheme, spec.priority,
                                  spec.n_pairs, spec.trial),
            error=f"{type(exc).__name__}: {exc}",
        )


@dataclass
class ReportBundle:
    """Everything run_suite produced, in deterministic grid order."""

    resolved: dict
    schemes: tuple
    priorities: tuple
    n_pairs: tuple
    trials: int
    base_seed: int
    results: list

    def cells(self):
        return [(p, n) for p in self.priorities for n in self.n_pairs]

    def cell_results(self, scheme, priority, n_pairs):
        return [
            r for r in self.results
            if (r.scheme, r.priority, r.n_pairs) == (scheme, priority, n_pairs)
        ]

    def cell_mean(self, scheme, priority, n_pairs, metric):
        """Trial mean of one metric over successful runs, or None."""
        vals = [
            getattr(r, metric)
            for r in self.cell_results(scheme, priority, n_pairs)
            if r.error is None and getattr(r, metric) is not None
        ]
        return fmean(vals) if vals else None

    def failures(self):
        return [r for r in self.results if r.error is not None]


def run_suite(cfg, schemes=None, priorities=None, n_pairs_list=None,
              parallel=1, keep_logs=True, verbose=False):
    """Execute the full grid; failures are recorded per cell, never fatal.

    Results come back in grid order regardless of execution order, so the
    aggregation (and every file emit_report writes) is a deterministic
    reduction.
    """
    schemes = tuple(schemes) if schemes else cfg.sweep_schemes
    priorities = tuple(int(p) for p in priorities) if priorities else cfg.sweep_priorities
    n_list = tuple(int(n) for n in n_pairs_list) if n_pairs_list else cfg.sweep_n_pairs

    problems = []
    problems.extend(f"unknown scheme {s!r}" for s in schemes if s not in SCHEMES)
    problems.extend(f"priority {p!r} outside 1..4" for p in priorities if not 1 <= p <= 4)
    problems.extend(f"n_pairs {n!r} outside 1..10" for n in n_list if not 1 <= n <= 10)
    if problems:
        raise ConfigError(problems)

    specs = [
        RunSpec(scheme=s, priority=p, n_pairs=n, trial=t)
        for s in schemes for p in priorities for n in n_list
        for t in range(1, cfg.trials + 1)
    ]
    jobs = [(cfg, spec, keep_logs) for spec in specs]
    results = []
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for i, res in enumerate(pool.map(_suite_cell, jobs)):
                results.append(res)
                if verbose:
                    _progress(i + 1, len(jobs), res)
    else:
        for i, job in enumerate(jobs):
            started = time.monotonic()
            res = _suite_cell(job)
            results.append(res)
            if verbose:
                _progress(i + 1, len(jobs), res, time.monotonic() - started)
    return ReportBundle(
        resolved=cfg.resolved,
        schemes=schemes,
        priorities=priorities,
        n_pairs=n_list,
        trials=cfg.trials,
        base_seed=cfg.base_seed,
        results=results,
    )


def _progress(done, total, res, elapsed=None):
    status = res.error or (
        f"agg={res.agg_throughput_mbps:.2f} Mb/s jain={res.jain:.3f}"
    )
    timing = f" [{elapsed:.0f}s]" if elapsed is not None else ""
    print(
        f"[{done}/{total}] {res.scheme} p{res.priority} n{res.n_pairs} "
        f"t{res.trial}: {status}{timing}",
        file=sys.stderr,
        flush=True,
    )


@dataclass(frozen=True)
class OrderingCheck:
    name: str
    order: tuple
    metric: str
    passed: bool
    details: tuple

    def summary_line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {'>'.join(self.order)} = {verdict}"


def ordering_checks(bundle, margin=ORDERING_MARGIN):
    """Pairwise scheme-ordering checks on trial-mean metrics.

    Each expectation must hold in every (priority, n_pairs) cell and for
    every pair in the order (not just adjacent ones), with the winner at
    least `margin` relatively above the loser.  Only evaluated when the
    sweep covered all four ordered schemes.
    """
    checks = []
    if not set(ORDER_THROUGHPUT) <= set(bundle.schemes):
        return checks
    for name, order, metric in (
        ("ordering_throughput", ORDER_THROUGHPUT, "agg_throughput_mbps"),
        ("ordering_fairness", ORDER_FAIRNESS, "jain"),
    ):
        passed = True
        details = []
        for priority, n in bundle.cells():
            means = {s: bundle.cell_mean(s, priority, n, metric) for s in order}
            missing = sorted(s for s, v in means.items() if v is None)
            if missing:
                passed = False
                details.append(f"p{priority} n{n}: no successful runs for {missing}")
                continue
            for i in range(len(order)):
                for j in range(i + 1, len(order)):
                    hi, lo = means[order[i]], means[order[j]]
                    if not hi >= lo * (1.0 + margin):
                        passed = False
                        details.append(
                            f"p{priority} n{n}: {order[i]}={hi:.4f} not above "
                            f"{order[j]}={lo:.4f} by {margin:.0%}"
                        )
        checks.append(OrderingCheck(
            name=name, order=order, metric=metric, passed=passed,
            details=tuple(details),
        ))
    return checks


def _mab_placement_lines(bundle):
    if "MAB" not in bundle.schemes:
        return []
    lines = []
    for priority, n in bundle.cells():
        for metric, label in (
            ("agg_throughput_mbps", "throughput"),
            ("jain", "fairness"),
        ):
            means = {
                s: bundle.cell_mean(s, priority, n, metric)
                for s in bundle.schemes
            }
            means = {s: v for s, v in means.items() if v is not None}
            ranked = sorted(means, key=means.get, reverse=True)
            if "MAB" in ranked:
                lines.append(
                    f"mab_placement p{priority} n{n} {label}: "
                    f"rank {ranked.index('MAB') + 1} of {len(ranked)}"
                )
    return lines


def _csv_cell(value):
    if value is None:
        return ""
    return value


def write_sweep_csv(bundle, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_HEADER)
        for r in bundle.results:
            writer.writerow([
                r.scheme, r.priority, r.n_pairs, r.trial,
                _csv_cell(r.agg_throughput_mbps),
                _csv_cell(r.jain),
                _csv_cell(r.mean_utility),
                _csv_cell(r.utility_fairness),
                _csv_cell(r.stabilization_episode),
            ])


def write_summary(bundle, path):
    checks = ordering_checks(bundle)
    lines = [
        "suite: schemes={} priorities={} n_pairs={} trials={} base_seed={}".format(
            ",".join(bundle.schemes),
            ",".join(str(p) for p in bundle.priorities),
            ",".join(str(n) for n in bundle.n_pairs),
            bundle.trials,
            bundle.base_seed,
        ),
        "runs: {} total, {} failed".format(
            len(bundle.results), len(bundle.failures())
        ),
        "",
        "cell means over successful trials (last-{} episodes of each run):".format(
            SUMMARY_TAIL_EPISODES
        ),
        "{:<10} {:>8} {:>7} {:>20} {:>8} {:>13} {:>17} {:>14}".format(
            "scheme", "priority", "n_pairs", "agg_throughput_mbps", "jain",
            "mean_utility", "utility_fairness", "stabilization"),
    ]
    for scheme in bundle.schemes:
        for priority, n in bundle.cells():
            def cell(metric):
                v = bundle.cell_mean(scheme, priority, n, metric)
                return "-" if v is None else f"{v:.4f}"
            stabs = [
                r.stabilization_episode
                for r in bundle.cell_results(scheme, priority, n)
                if r.error is None and r.stabilization_episode is not None
            ]
            stab = f"{fmean(stabs):.1f}" if stabs else "-"
            lines.append(
                "{:<10} {:>8} {:>7} {:>20} {:>8} {:>13} {:>17} {:>14}".format(
                    scheme, priority, n,
                    cell("agg_throughput_mbps"), cell("jain"),
                    cell("mean_utility"), cell("utility_fairness"), stab,
                )
            )
    lines.append("")
    for chk in checks:
        lines.append(chk.summary_line())
        for detail in chk.details:
            lines.append(f"  {detail}")
    lines.extend(_mab_placement_lines(bundle))
    lines.append("")
    failures = bundle.failures()
    if failures:
        lines.append("failures:")
        lines.extend(
            f"  {r.scheme} p{r.priority} n{r.n_pairs} t{r.trial}: {r.error}"
            for r in failures
        )
    else:
        lines.append("failures: none")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return checks


def _package_version():
    try:
        from importlib.metadata import version

        return version("coexlab")
    except Exception:
        return "unknown"


def write_metadata(bundle, path):
    """Timestamped sidecar; the only emitted file that is not reproducible."""
    meta = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "tool": {"name": "coexlab", "version": _package_version()},
        "seed_scheme": SEED_SCHEME,
        "grid": {
            "schemes": list(bundle.schemes),
            "priorities": list(bundle.priorities),
            "n_pairs": list(bundle.n_pairs),
            "trials": bundle.trials,
            "base_seed": bundle.base_seed,
        },
        "failures": [
            {"scheme": r.scheme, "priority": r.priority, "n_pairs": r.n_pairs,
             "trial": r.trial, "error": r.error}
            for r in bundle.failures()
        ],
        "config": bundle.resolved,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _render_plots(bundle, out_dir):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return []
    written = []
    logged = [r for r in bundle.results if r.log is not None]
    if logged:
        fig, ax = plt.subplots(figsize=(8.0, 4.5))
        for r in logged:
            ax.plot(
                range(1, len(r.log.records) + 1),
                r.log.mean_rewards(),
                linewidth=0.8,
                label=f"{r.scheme} p{r.priority} n{r.n_pairs} t{r.trial}",
            )
        ax.set_xlabel("episode")
        ax.set_ylabel("mean reward")
        ax.legend(fontsize=6, ncol=2)
        path = Path(out_dir) / "reward_traces.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    if len(bundle.n_pairs) > 1:
        fig, ax = plt.subplots(figsize=(8.0, 4.5))
        for scheme in bundle.schemes:
            for priority in bundle.priorities:
                ys = [
                    bundle.cell_mean(scheme, priority, n, "agg_throughput_mbps")
                    for n in bundle.n_pairs
                ]
                ax.plot(bundle.n_pairs, ys, marker="o",
                        label=f"{scheme} p{priority}")
        ax.set_xlabel("user pairs per technology")
        ax.set_ylabel("aggregate throughput (Mb/s)")
        ax.legend(fontsize=7)
        path = Path(out_dir) / "throughput_vs_n.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def emit_report(bundle, out_dir, plots=False):
    """Write the report bundle; returns the list of paths written.

    sweep.csv and summary.txt are byte-identical across reruns of the same
    config; metadata.json carries the timestamp and the resolved config.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    sweep_path = out / "sweep.csv"
    write_sweep_csv(bundle, sweep_path)
    written.append(sweep_path)

    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)
    for r in bundle.results:
        if r.log is None:
            continue
        path = runs_dir / f"{r.scheme}_p{r.priority}_n{r.n_pairs}_t{r.trial}.csv"
        r.log.write_csv(path)
        written.append(path)

    summary_path = out / "summary.txt"
    write_summary(bundle, summary_path)
    written.append(summary_path)

    meta_path = out / "metadata.json"
    write_metadata(bundle, meta_path)
    written.append(meta_path)

    if plots:
        written.extend(_render_plots(bundle, out))
    return written

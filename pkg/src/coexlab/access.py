"""Analytical channel-access models for the two contending technologies.

Both Wi-Fi (CSMA/CA) and NR-U (LBT cat-4) are described by the same kind of
binary-exponential-backoff chain: stages j = 0..m with per-stage contention
window W_j = min(2^j * W0, CW_max).  A node at stage j draws a backoff counter
uniformly from {0..W_j-1}, counts down one per contention slot and transmits
when the counter reaches zero.  A failed transmission at stage j moves the
node to stage min(j+1, m); a success returns it to stage 0.  There is no
retry limit: at the last stage the node keeps re-entering stage m.

`solve_chain` gives the stationary transmission probability of one node for a
fixed conditional collision probability p.  `solve_coexistence_fixed_point`
closes the loop between the two node populations, and `analytical_throughput`
converts an operating point into per-technology saturation throughput.
"""

from dataclasses import dataclass, replace

from .errors import ConfigError, FixedPointError

FIXED_POINT_TOL = 1e-10
FIXED_POINT_DAMPING = 0.5
FIXED_POINT_MAX_ITER = 100_000


@dataclass(frozen=True)
class AccessConfig:
    """Static channel-access parameters of one technology.

    Attributes:
        w0: initial contention window (slots), >= 2.
        max_stage: number of window doublings m, >= 0.
        cw_max: cap applied to every stage window, >= w0.
        slot_time_us: contention slot duration in microseconds.
        defer_time_us: fixed deferral (AIFS / LBT prioritization period)
            spent in front of every transmission burst, microseconds.
        txop_duration_us: transmission-opportunity duration, microseconds.
        payload_bits_per_txop: payload delivered by one successful TXOP, bits.
    """

    w0: int
    max_stage: int
    cw_max: int
    slot_time_us: float
    defer_time_us: float
    txop_duration_us: float
    payload_bits_per_txop: int

    def __post_init__(self):
        problems = []
        if not (isinstance(self.w0, int) and self.w0 >= 2):
            problems.append(f"w0 must be an integer >= 2, got {self.w0!r}")
        if not (isinstance(self.max_stage, int) and self.max_stage >= 0):
            problems.append(f"max_stage must be an integer >= 0, got {self.max_stage!r}")
        if not (isinstance(self.cw_max, int) and self.cw_max >= self.w0):
            problems.append(f"cw_max must be an integer >= w0, got {self.cw_max!r}")
        if not self.slot_time_us > 0:
            problems.append(f"slot_time_us must be positive, got {self.slot_time_us!r}")
        if self.defer_time_us < 0:
            problems.append(f"defer_time_us must be >= 0, got {self.defer_time_us!r}")
        if not self.txop_duration_us > 0:
            problems.append(f"txop_duration_us must be positive, got {self.txop_duration_us!r}")
        if not (isinstance(self.payload_bits_per_txop, int) and self.payload_bits_per_txop >= 1):
            problems.append(
                f"payload_bits_per_txop must be a positive integer, got {self.payload_bits_per_txop!r}"
            )
        if problems:
            raise ConfigError(problems)

    @property
    def occupancy_us(self):
        """Airtime consumed by one transmission burst (defer + TXOP)."""
        return self.defer_time_us + self.txop_duration_us

    @property
    def rate_mbps(self):
        """Effective payload rate inside the TXOP (bits/us == Mb/s)."""
        return self.payload_bits_per_txop / self.txop_duration_us

    def window_ladder(self):
        """Per-stage contention windows [W_0, ..., W_m]."""
        return [min((1 << j) * self.w0, self.cw_max) for j in range(self.max_stage + 1)]

    def state_count(self):
        """Number of (stage, counter) states of the backoff chain."""
        return sum(self.window_ladder())


def with_txop(cfg, txop_duration_us):
    """Derive a config with a different TXOP at the same payload rate.

    The payload scales proportionally to the TXOP duration (fixed-rate
    airtime model) and is rounded to a whole number of bits.
    """
    bits = max(1, round(cfg.rate_mbps * txop_duration_us))
    return replace(cfg, txop_duration_us=float(txop_duration_us), payload_bits_per_txop=bits)


@dataclass(frozen=True)
class ChainSolution:
    """Stationary solution of one backoff chain at fixed collision probability.

    Attributes:
        tau: per-slot transmission probability, sum of the stage heads.
        stationary_heads: stationary probability of each (j, 0) state.
        collision_prob_in: the conditional collision probability p used.
    """

    tau: float
    stationary_heads: tuple
    collision_prob_in: float


def solve_chain(cfg, collision_prob):
    """Solve the backoff chain of one node for a given collision probability.

    Closed form: the visit ratios of the stage heads are h_j = p^j for
    j < m and h_m = p^m / (1 - p) (the last stage re-absorbs its own
    collisions); every other (j, k) state carries weight (W_j - k) / W_j
    relative to its head, so the heads are normalized by
    sum_j h_j * (W_j + 1) / 2 over the full state space.
    """
    p = float(collision_prob)
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"collision probability must lie in [0, 1), got {p!r}")
    windows = cfg.window_ladder()
    m = cfg.max_stage
    if m == 0:
        heads_rel = [1.0]  # single stage: collisions re-enter it, p drops out
    else:
        heads_rel = [p ** j for j in range(m)]
        heads_rel.append(p ** m / (1.0 - p))
    z = sum(h * (w + 1) / 2.0 for h, w in zip(heads_rel, windows))
    heads = tuple(h / z for h in heads_rel)
    tau = sum(heads)
    if not 0.0 < tau <= 1.0:
        raise FixedPointError(
            "backoff chain produced a non-normalizable solution",
            last_iterate=(tau,), residual=float("nan"), iterations=0,
        )
    return ChainSolution(tau=tau, stationary_heads=heads, collision_prob_in=p)


@dataclass(frozen=True)
class CoexistenceOperatingPoint:
    """Converged coupled operating point of the two populations.

    tau_* are per-slot transmission probabilities, p_w / p_l the
    conditional collision probabilities seen by one Wi-Fi / NR-U node,
    gamma_* the analytical saturation throughputs in Mb/s.
    """

    tau_wf: float
    tau_nr: float
    p_w: float
    p_l: float
    gamma_wf: float
    gamma_nr: float
    residual: float
    iterations: int


def _collision_probs(tau_wf, tau_nr, n_wifi, n_nru):
    p_w = p_l = 0.0
    if n_wifi >= 1:
        p_w = 1.0 - (1.0 - tau_wf) ** (n_wifi - 1) * (1.0 - tau_nr) ** n_nru
    if n_nru >= 1:
        p_l = 1.0 - (1.0 - tau_wf) ** n_wifi * (1.0 - tau_nr) ** (n_nru - 1)
    return min(max(p_w, 0.0), 1.0 - 1e-15), min(max(p_l, 0.0), 1.0 - 1e-15)


def solve_coexistence_fixed_point(n_wifi, n_nru, wifi_cfg, nru_cfg, tol=FIXED_POINT_TOL):
    """Find the coupled (tau_wf, tau_nr) fixed point by damped iteration.

    Each population's collision probability is induced by everyone else:
    p_w = 1 - (1-tau_wf)^(n_wifi-1) (1-tau_nr)^n_nru and symmetrically for
    p_l.  The update is damped half-and-half, which keeps the map a
    contraction for every configuration we care about.
    """
    if n_wifi < 0 or n_nru < 0:
        raise ConfigError(f"node counts must be >= 0, got ({n_wifi}, {n_nru})")

    tau_wf = solve_chain(wifi_cfg, 0.0).tau if n_wifi >= 1 else 0.0
    tau_nr = solve_chain(nru_cfg, 0.0).tau if n_nru >= 1 else 0.0
    residual = float("inf")
    iterations = 0
    for iterations in range(1, FIXED_POINT_MAX_ITER + 1):
        p_w, p_l = _collision_probs(tau_wf, tau_nr, n_wifi, n_nru)
        new_wf = solve_chain(wifi_cfg, p_w).tau if n_wifi >= 1 else 0.0
        new_nr = solve_chain(nru_cfg, p_l).tau if n_nru >= 1 else 0.0
        residual = max(abs(new_wf - tau_wf), abs(new_nr - tau_nr))
        tau_wf += FIXED_POINT_DAMPING * (new_wf - tau_wf)
        tau_nr += FIXED_POINT_DAMPING * (new_nr - tau_nr)
        if residual <= tol:
            break
    else:
        raise FixedPointError(
            "coexistence fixed point did not converge",
            last_iterate=(tau_wf, tau_nr), residual=residual, iterations=iterations,
        )

    p_w, p_l = _collision_probs(tau_wf, tau_nr, n_wifi, n_nru)
    point = CoexistenceOperatingPoint(
        tau_wf=tau_wf, tau_nr=tau_nr, p_w=p_w, p_l=p_l,
        gamma_wf=0.0, gamma_nr=0.0, residual=residual, iterations=iterations,
    )
    gamma_nr, gamma_wf = analytical_throughput(point, n_wifi, n_nru, wifi_cfg, nru_cfg)
    return replace(point, gamma_wf=gamma_wf, gamma_nr=gamma_nr)


def slot_event_probabilities(tau_wf, tau_nr, n_wifi, n_nru):
    """Per-slot probabilities of the six contention-slot outcomes.

    Returns a dict with idle, per-technology success, and the three
    collision classes (wifi-only, nru-only, cross).  Transmissions of
    distinct nodes are treated as independent.
    """
    no_wf = (1.0 - tau_wf) ** n_wifi
    no_nr = (1.0 - tau_nr) ** n_nru
    one_wf = n_wifi * tau_wf * (1.0 - tau_wf) ** (n_wifi - 1) if n_wifi >= 1 else 0.0
    one_nr = n_nru * tau_nr * (1.0 - tau_nr) ** (n_nru - 1) if n_nru >= 1 else 0.0
    some_wf = 1.0 - no_wf
    some_nr = 1.0 - no_nr
    return {
        "idle": no_wf * no_nr,
        "success_wf": one_wf * no_nr,
        "success_nr": one_nr * no_wf,
        "collision_wf_only": (some_wf - one_wf) * no_nr,
        "collision_nr_only": (some_nr - one_nr) * no_wf,
        "collision_cross": some_wf * some_nr,
    }


def analytical_throughput(op_point, n_wifi, n_nru, wifi_cfg, nru_cfg):
    """Saturation throughput (gamma_nr, gamma_wf) in Mb/s at an operating point.

    Renewal argument over contention slots: the expected payload delivered
    per slot divided by the expected slot duration.  An idle slot lasts one
    backoff slot; a slot owned by one technology lasts its defer + TXOP; a
    cross collision lasts the longer of the two occupancies.
    """
    probs = slot_event_probabilities(op_point.tau_wf, op_point.tau_nr, n_wifi, n_nru)
    occ_wf = wifi_cfg.occupancy_us
    occ_nr = nru_cfg.occupancy_us
    slot = wifi_cfg.slot_time_us if n_wifi >= 1 else nru_cfg.slot_time_us

    expected_slot_us = (
        probs["idle"] * slot
        + (probs["success_wf"] + probs["collision_wf_only"]) * occ_wf
        + (probs["success_nr"] + probs["collision_nr_only"]) * occ_nr
        + probs["collision_cross"] * max(occ_wf, occ_nr)
    )
    if expected_slot_us <= 0.0:
        return 0.0, 0.0
    gamma_wf = probs["success_wf"] * wifi_cfg.payload_bits_per_txop / expected_slot_us
    gamma_nr = probs["success_nr"] * nru_cfg.payload_bits_per_txop / expected_slot_us
    return gamma_nr, gamma_wf

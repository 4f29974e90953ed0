"""Slot-level Monte-Carlo simulator for saturated coexistence.

The contention process advances in discrete slots shared by every node.
Each slot, nodes whose backoff counter is zero transmit; if nobody does,
the slot is idle and every counter decrements by one (counters freeze
while the channel is busy, as the procedural listen-before-talk rules
require).  Exactly one transmitter makes a success, two or more make a
collision whose airtime is the longest occupancy among the colliders.
A success resets the winner to stage 0; every collider escalates to
stage min(j+1, m).  Everything is saturated: a fresh burst is always
waiting.

The observation window is measured in contention slots (idle slots plus
transmission events), not wall time, so throughput estimates keep
comparable variance across TXOP settings.

Randomness comes from per-node splitmix64 streams derived from a single
64-bit seed, so results are bit-identical for a given seed regardless of
platform.  Counter draws use the fixed-point trick (z >> 11) * W >> 53,
i.e. floor(u * W) for u uniform on [0, 1) with 53 random bits.
"""

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import ConfigError

RNG_FAMILY = "splitmix64"

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class SimConfig:
    """One coexistence scenario: node counts, per-technology access configs.

    window_slots is the contention-slot budget of one observation window;
    it must be at least 1000 so that windowed throughput estimates stay
    meaningful.
    """

    wifi: object
    nru: object
    n_wifi: int
    n_nru: int
    window_slots: int
    rng_seed: int

    def __post_init__(self):
        problems = []
        if not (isinstance(self.n_wifi, int) and self.n_wifi >= 0):
            problems.append(f"n_wifi must be an integer >= 0, got {self.n_wifi!r}")
        if not (isinstance(self.n_nru, int) and self.n_nru >= 0):
            problems.append(f"n_nru must be an integer >= 0, got {self.n_nru!r}")
        if not (isinstance(self.window_slots, int) and self.window_slots >= 1000):
            problems.append(f"window_slots must be an integer >= 1000, got {self.window_slots!r}")
        if not isinstance(self.rng_seed, int):
            problems.append(f"rng_seed must be an integer, got {self.rng_seed!r}")
        if self.wifi.slot_time_us != self.nru.slot_time_us:
            problems.append("wifi and nru slot_time_us must agree (single slot clock)")
        if problems:
            raise ConfigError(problems)


def reseed(cfg, new_seed):
    """Same scenario, different random seed."""
    return replace(cfg, rng_seed=int(new_seed))


@dataclass(frozen=True)
class EpisodeMetrics:
    """Counters and throughput of one observation window.

    gamma_* are Mb/s and equal successes * payload_bits / elapsed_us
    exactly (bits per microsecond).  idle_slot_count plus the three event
    counts always equals the configured window_slots, and
    idle_slot_count * slot_time + sum of occupancy airtimes equals
    elapsed_us exactly.
    """

    gamma_nr: float
    gamma_wf: float
    wifi_success_count: int
    nru_success_count: int
    collision_count: int
    idle_slot_count: int
    elapsed_us: float
    collision_wf_only: int
    collision_nr_only: int
    collision_cross: int
    payload_bits_wf: float
    payload_bits_nr: float
    t_nr_us: float


@njit(cache=True)
def _splitmix_init(seed, index):
    s = np.uint64(seed) + _PHI * (np.uint64(index) + np.uint64(1))
    z = (s ^ (s >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _draw(stream, i, window):
    # advance node i's stream and return a counter uniform on {0..window-1}
    stream[i] += _PHI
    z = stream[i]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return np.int64(((z >> np.uint64(11)) * np.uint64(window)) >> np.uint64(53))


@njit(cache=True)
def _stage_window(stage, w0, cap):
    w = w0 << stage
    if w > cap:
        w = cap
    return w


@njit(cache=True)
def _run_core(seed, n_wifi, n_total, window_slots,
              w0_wf, m_wf, cap_wf, w0_nr, m_nr, cap_nr):
    stage = np.zeros(n_total, dtype=np.int64)
    counter = np.zeros(n_total, dtype=np.int64)
    stream = np.zeros(n_total, dtype=np.uint64)
    for i in range(n_total):
        stream[i] = _splitmix_init(seed, i)
        if i < n_wifi:
            counter[i] = _draw(stream, i, w0_wf)
        else:
            counter[i] = _draw(stream, i, w0_nr)

    wifi_succ = np.int64(0)
    nru_succ = np.int64(0)
    coll_wf = np.int64(0)
    coll_nr = np.int64(0)
    coll_cross = np.int64(0)
    idle = np.int64(0)
    budget = np.int64(window_slots)

    while budget > 0:
        mn = counter[0]
        for i in range(1, n_total):
            if counter[i] < mn:
                mn = counter[i]
        if mn > 0:
            # idle gap: every counter shrinks one per idle slot
            g = mn if mn < budget else budget
            for i in range(n_total):
                counter[i] -= g
            idle += g
            budget -= g
            continue

        budget -= 1
        wf_tx = np.int64(0)
        nr_tx = np.int64(0)
        for i in range(n_total):
            if counter[i] == 0:
                if i < n_wifi:
                    wf_tx += 1
                else:
                    nr_tx += 1
        success = wf_tx + nr_tx == 1
        if success:
            if wf_tx == 1:
                wifi_succ += 1
            else:
                nru_succ += 1
        elif wf_tx > 0 and nr_tx > 0:
            coll_cross += 1
        elif wf_tx > 0:
            coll_wf += 1
        else:
            coll_nr += 1
        for i in range(n_total):
            if counter[i] != 0:
                continue
            if i < n_wifi:
                m, w0, cap = m_wf, w0_wf, cap_wf
            else:
                m, w0, cap = m_nr, w0_nr, cap_nr
            if success:
                stage[i] = 0
            elif stage[i] < m:
                stage[i] += 1
            counter[i] = _draw(stream, i, _stage_window(stage[i], w0, cap))

    return wifi_succ, nru_succ, coll_wf, coll_nr, coll_cross, idle


def run_window(cfg, t_nr_override=None):
    """Simulate one observation window; fully deterministic given rng_seed.

    t_nr_override replaces the NR-U TXOP duration for this window (the
    control variable).  The per-success NR-U payload scales with the
    override at the configured rate, so bits per microsecond of TXOP stay
    constant.
    """
    t_nr = float(cfg.nru.txop_duration_us if t_nr_override is None else t_nr_override)
    if t_nr <= 0:
        raise ConfigError(f"t_nr_override must be positive, got {t_nr!r}")
    bits_wf = float(cfg.wifi.payload_bits_per_txop)
    bits_nr = cfg.nru.rate_mbps * t_nr
    occ_wf = cfg.wifi.occupancy_us
    occ_nr = cfg.nru.defer_time_us + t_nr
    slot = cfg.wifi.slot_time_us

    n_total = cfg.n_wifi + cfg.n_nru
    if n_total == 0:
        elapsed = cfg.window_slots * slot
        return EpisodeMetrics(
            gamma_nr=0.0, gamma_wf=0.0, wifi_success_count=0, nru_success_count=0,
            collision_count=0, idle_slot_count=cfg.window_slots, elapsed_us=elapsed,
            collision_wf_only=0, collision_nr_only=0, collision_cross=0,
            payload_bits_wf=bits_wf, payload_bits_nr=bits_nr, t_nr_us=t_nr,
        )

    wifi_succ, nru_succ, coll_wf, coll_nr, coll_cross, idle = _run_core(
        np.uint64(cfg.rng_seed & 0xFFFFFFFFFFFFFFFF),
        cfg.n_wifi, n_total, cfg.window_slots,
        cfg.wifi.w0, cfg.wifi.max_stage, cfg.wifi.cw_max,
        cfg.nru.w0, cfg.nru.max_stage, cfg.nru.cw_max,
    )

    # elapsed assembled from event counts so airtime conservation is exact
    elapsed = (
        int(idle) * slot
        + int(wifi_succ + coll_wf) * occ_wf
        + int(nru_succ + coll_nr) * occ_nr
        + int(coll_cross) * max(occ_wf, occ_nr)
    )
    gamma_wf = int(wifi_succ) * bits_wf / elapsed
    gamma_nr = int(nru_succ) * bits_nr / elapsed
    return EpisodeMetrics(
        gamma_nr=gamma_nr, gamma_wf=gamma_wf,
        wifi_success_count=int(wifi_succ), nru_success_count=int(nru_succ),
        collision_count=int(coll_wf + coll_nr + coll_cross),
        idle_slot_count=int(idle), elapsed_us=float(elapsed),
        collision_wf_only=int(coll_wf), collision_nr_only=int(coll_nr),
        collision_cross=int(coll_cross),
        payload_bits_wf=bits_wf, payload_bits_nr=bits_nr, t_nr_us=t_nr,
    )

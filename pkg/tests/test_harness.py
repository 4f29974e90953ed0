"""Harness layer: stabilization detector, config loading, suite, reports."""

import json
import math

import numpy as np
import pytest

from coexlab.errors import ConfigError, InsufficientDataError
from coexlab.harness import (
    ORDER_FAIRNESS,
    ORDER_THROUGHPUT,
    SCHEMES,
    SWEEP_CSV_HEADER,
    ReportBundle,
    RunResult,
    StabilizationCriterion,
    detect_stabilization,
    emit_report,
    load_config,
    lone_nru_throughput,
    ordering_checks,
    run_one,
    run_seed_for,
    run_suite,
    txop_control_for,
    utility_model_for,
    write_summary,
)

CRIT = StabilizationCriterion(window=50, rel_tol=0.05, hold=50)


def reference_detect(rewards, window, rel_tol, hold):
    """Straightforward quadratic scan with the same episode convention."""
    n = len(rewards)
    for start in range(window, n - hold + 2):
        base = sum(rewards[start - window:start]) / window
        if base == 0:
            continue
        ok = True
        for t in range(start, start + hold):
            mu = sum(rewards[t - window:t]) / window
            if abs(mu - base) > rel_tol * abs(base):
                ok = False
                break
        if ok:
            return start + hold - 1
    return None


def plateau_fixture():
    """Noisy ramp over episodes 1..300, flat at 1.0 afterwards."""
    rng = np.random.default_rng(1234)
    values = [e / 300 for e in range(1, 301)] + [1.0] * 200
    noise = rng.uniform(-0.01, 0.01, size=len(values))
    return [v + eps for v, eps in zip(values, noise)]


class TestDetector:
    def test_constant_sequence(self):
        assert detect_stabilization([3.0] * 200, CRIT) == 99

    def test_constant_sequence_at_minimum_length(self):
        assert detect_stabilization([3.0] * 99, CRIT) == 99
        with pytest.raises(InsufficientDataError):
            detect_stabilization([3.0] * 98, CRIT)

    def test_doubling_sequence_never_stabilizes(self):
        rewards = [float(2**k) for k in range(200)]
        assert detect_stabilization(rewards, CRIT) is None

    def test_plateau_fixture_detected_in_band(self):
        rewards = plateau_fixture()
        got = detect_stabilization(rewards, CRIT)
        want = reference_detect(rewards, 50, 0.05, 50)
        assert got == want
        assert 300 <= got <= 400

    def test_matches_reference_on_random_walks(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            rewards = np.cumsum(rng.normal(0.02, 0.3, size=250)).tolist()
            assert detect_stabilization(rewards, CRIT) == reference_detect(
                rewards, 50, 0.05, 50
            )

    def test_invariant_under_positive_rescaling(self):
        rewards = plateau_fixture()
        base = detect_stabilization(rewards, CRIT)
        for factor in (7.3, 0.002, 1e6):
            scaled = [factor * r for r in rewards]
            assert detect_stabilization(scaled, CRIT) == base

    def test_negative_reward_scale(self):
        assert detect_stabilization([-2.0] * 200, CRIT) == 99

    def test_zero_baseline_windows_are_skipped(self):
        rewards = [0.0] * 60 + [1.0] * 200
        got = detect_stabilization(rewards, CRIT)
        assert got == reference_detect(rewards, 50, 0.05, 50)
        assert got is not None and got > 100

    def test_small_hand_case(self):
        crit = StabilizationCriterion(window=3, rel_tol=0.05, hold=2)
        assert detect_stabilization([4.0, 4.0, 4.0, 4.0], crit) == 4
        assert detect_stabilization([4.0, 4.0, 4.0, 9.0], crit) is None

    def test_criterion_validation(self):
        with pytest.raises(ConfigError):
            StabilizationCriterion(window=1, rel_tol=0.05, hold=50)
        with pytest.raises(ConfigError):
            StabilizationCriterion(window=50, rel_tol=0.0, hold=50)
        with pytest.raises(ConfigError):
            StabilizationCriterion(window=50, rel_tol=1.0, hold=50)
        with pytest.raises(ConfigError) as err:
            StabilizationCriterion(window=0, rel_tol=2.0, hold=0)
        assert len(err.value.violations) == 3


class TestConfigDefaults:
    def test_agent_defaults(self):
        cfg = load_config()
        assert cfg.agent.learning_rate == 0.001
        assert cfg.agent.discount == 0.9
        assert cfg.agent.epsilon == 0.1
        assert cfg.agent.replay_capacity == 10_000
        assert cfg.agent.batch_size == 64
        assert cfg.agent.target_sync_interval == 100
        assert cfg.agent.episodes == 1000
        assert cfg.agent.steps_per_episode == 200

    def test_experiment_defaults(self):
        cfg = load_config()
        assert cfg.scheme == "Q1"
        assert cfg.priority_class == 3
        assert cfg.n_pairs == 5
        assert cfg.trials == 3
        assert cfg.sim.window_slots == 50_000
        assert cfg.stabilization == StabilizationCriterion(50, 0.05, 50)
        assert cfg.sweep_schemes == ("LBT", "Q1", "Q2", "Q2u")
        assert cfg.sweep_priorities == (3,)
        assert cfg.sweep_n_pairs == (5,)

    def test_priority_classes_complete(self):
        cfg = load_config()
        assert sorted(cfg.classes) == [1, 2, 3, 4]
        bounds = {k: (c.t_min_us, c.t_max_us) for k, c in cfg.classes.items()}
        assert bounds == {1: (250.0, 2000.0), 2: (250.0, 3000.0),
                          3: (500.0, 8000.0), 4: (500.0, 8000.0)}
        c3 = cfg.classes[3]
        assert (c3.wifi.w0, c3.wifi.max_stage, c3.wifi.cw_max) == (32, 5, 1024)
        assert (c3.nru.w0, c3.nru.max_stage, c3.nru.cw_max) == (32, 3, 256)

    def test_reward_policies(self):
        cfg = load_config()
        q1, q2, q2u = cfg.policies["Q1"], cfg.policies["Q2"], cfg.policies["Q2u"]
        assert (q1.d1, q1.d2) == (0.2, 0.1)
        assert (q2.d1, q2.d2) == (0.5, 0.3)
        assert (q1.r1, q1.r2, q1.r3) == (-1.0, 0.5, 2.0)
        assert not q1.uses_utility_state and not q2.uses_utility_state
        assert q2u.uses_utility_state
        assert (q2u.d1, q2u.d2) == (0.5, 0.3)

    def test_derived_utility_ceiling(self):
        cfg = load_config()
        model = utility_model_for(cfg, 3)
        assert model.b_min_mbps == 0.5
        assert model.b_max_mbps == pytest.approx(lone_nru_throughput(cfg.classes[3]))
        assert model.b_max_mbps == pytest.approx(73.327, abs=0.01)

    def test_txop_control_starts_at_ceiling(self):
        cfg = load_config()
        ctrl = txop_control_for(cfg, 3)
        assert ctrl.t_nr_us == ctrl.t_max_us == 8000.0
        assert ctrl.t_min_us == 500.0
        assert (ctrl.up_factor, ctrl.down_factor) == (1.1, 0.9)


class TestConfigLoading:
    def write(self, tmp_path, payload):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(payload))
        return path

    def test_unknown_key_is_an_error(self, tmp_path):
        path = self.write(tmp_path, {"agent": {"momentum": 0.9}})
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert any("momentum" in v for v in err.value.violations)

    def test_batch_exceeding_replay_names_both_fields(self, tmp_path):
        path = self.write(
            tmp_path, {"agent": {"batch_size": 128, "replay_capacity": 64}}
        )
        with pytest.raises(ConfigError) as err:
            load_config(path)
        msg = str(err.value)
        assert "batch_size" in msg and "replay_capacity" in msg

    def test_all_violations_reported_at_once(self, tmp_path):
        path = self.write(tmp_path, {
            "agent": {"learning_rate": -1.0, "epsilon": 3.0, "momentum": 1},
            "scheme": "Q9",
            "n_pairs": 0,
        })
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert len(err.value.violations) >= 5

    def test_schema_version_gate(self, tmp_path):
        path = self.write(tmp_path, {"schema_version": 99})
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "schema_version" in str(err.value)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "not valid JSON" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            load_config(tmp_path / "absent.json")
        assert "cannot read" in str(err.value)

    def test_non_object_root(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_overrides_apply_last(self, tmp_path):
        path = self.write(tmp_path, {"base_seed": 5})
        cfg = load_config(path, overrides={"base_seed": 42, "agent.episodes": 7})
        assert cfg.base_seed == 42
        assert cfg.agent.episodes == 7

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError) as err:
            load_config(overrides={"agent.warmup": 10})
        assert "override" in str(err.value)

    def test_file_values_override_defaults(self, tmp_path):
        path = self.write(tmp_path, {
            "trials": 1,
            "agent": {"episodes": 4},
            "utility": {"b_max_mbps": 50.0},
        })
        cfg = load_config(path)
        assert cfg.trials == 1
        assert cfg.agent.episodes == 4
        assert utility_model_for(cfg, 3).b_max_mbps == 50.0
        # untouched defaults survive the merge
        assert cfg.agent.batch_size == 64


class TestRunSeeds:
    def test_grid_seeds_are_distinct(self):
        seeds = {
            run_seed_for(20240601, scheme, p, n, t)
            for scheme in SCHEMES
            for p in (1, 2, 3, 4)
            for n in (1, 5, 10)
            for t in (1, 2, 3)
        }
        assert len(seeds) == len(SCHEMES) * 4 * 3 * 3

    def test_base_seed_shifts_every_cell(self):
        a = run_seed_for(1, "Q1", 3, 5, 1)
        b = run_seed_for(2, "Q1", 3, 5, 1)
        assert a != b
        # XOR structure: the cell offset is the same for every base seed
        assert a ^ 1 == b ^ 2


def synthetic_bundle(cells):
    """cells: {(scheme, priority, n): (agg, jain)} with one trial each."""
    schemes = tuple(dict.fromkeys(s for s, _, _ in cells))
    priorities = tuple(sorted({p for _, p, _ in cells}))
    n_pairs = tuple(sorted({n for _, _, n in cells}))
    results = [
        RunResult(scheme=s, priority=p, n_pairs=n, trial=1, run_seed=0,
                  agg_throughput_mbps=agg, jain=jain, mean_utility=0.5,
                  utility_fairness=0.9, stabilization_episode=None)
        for (s, p, n), (agg, jain) in cells.items()
    ]
    return ReportBundle(resolved={}, schemes=schemes, priorities=priorities,
                        n_pairs=n_pairs, trials=1, base_seed=0, results=results)


class TestOrderingChecks:
    def full_grid(self, agg, jain, priority=3, n=5):
        return {
            (s, priority, n): (agg[s], jain[s]) for s in ORDER_THROUGHPUT
        }

    def test_clean_orderings_pass(self):
        bundle = synthetic_bundle(self.full_grid(
            agg={"LBT": 50.0, "Q2u": 40.0, "Q2": 30.0, "Q1": 20.0},
            jain={"Q1": 0.99, "Q2": 0.90, "Q2u": 0.80, "LBT": 0.50},
        ))
        checks = ordering_checks(bundle)
        assert [c.passed for c in checks] == [True, True]
        lines = [c.summary_line() for c in checks]
        assert lines[0] == "ordering_throughput: LBT>Q2u>Q2>Q1 = PASS"
        assert lines[1] == "ordering_fairness: Q1>Q2>Q2u>LBT = PASS"

    def test_margin_is_enforced(self):
        # Q2 only 2% above Q1: inside the 3% margin, so the check fails
        bundle = synthetic_bundle(self.full_grid(
            agg={"LBT": 50.0, "Q2u": 40.0, "Q2": 20.4, "Q1": 20.0},
            jain={"Q1": 0.99, "Q2": 0.90, "Q2u": 0.80, "LBT": 0.50},
        ))
        checks = {c.name: c for c in ordering_checks(bundle)}
        assert not checks["ordering_throughput"].passed
        assert checks["ordering_fairness"].passed
        assert any("Q2" in d and "Q1" in d
                   for d in checks["ordering_throughput"].details)
        line = checks["ordering_throughput"].summary_line()
        assert line == "ordering_throughput: LBT>Q2u>Q2>Q1 = FAIL"

    def test_inverted_pair_fails(self):
        bundle = synthetic_bundle(self.full_grid(
            agg={"LBT": 50.0, "Q2u": 40.0, "Q2": 30.0, "Q1": 20.0},
            jain={"Q1": 0.90, "Q2": 0.99, "Q2u": 0.80, "LBT": 0.50},
        ))
        checks = {c.name: c for c in ordering_checks(bundle)}
        assert not checks["ordering_fairness"].passed

    def test_requires_all_four_schemes(self):
        bundle = synthetic_bundle({
            ("LBT", 3, 5): (50.0, 0.5),
            ("Q1", 3, 5): (20.0, 0.99),
        })
        assert ordering_checks(bundle) == []

    def test_every_cell_must_pass(self):
        good = self.full_grid(
            agg={"LBT": 50.0, "Q2u": 40.0, "Q2": 30.0, "Q1": 20.0},
            jain={"Q1": 0.99, "Q2": 0.90, "Q2u": 0.80, "LBT": 0.50},
            n=2,
        )
        bad = self.full_grid(
            agg={"LBT": 50.0, "Q2u": 40.0, "Q2": 30.0, "Q1": 31.0},
            jain={"Q1": 0.99, "Q2": 0.90, "Q2u": 0.80, "LBT": 0.50},
            n=5,
        )
        bundle = synthetic_bundle({**good, **bad})
        checks = {c.name: c for c in ordering_checks(bundle)}
        assert not checks["ordering_throughput"].passed
        assert any("n5" in d for d in checks["ordering_throughput"].details)
        assert not any("n2" in d for d in checks["ordering_throughput"].details)

    def test_failed_cells_are_reported_missing(self):
        cells = self.full_grid(
            agg={"LBT": 50.0, "Q2u": 40.0, "Q2": 30.0, "Q1": 20.0},
            jain={"Q1": 0.99, "Q2": 0.90, "Q2u": 0.80, "LBT": 0.50},
        )
        bundle = synthetic_bundle(cells)
        bundle.results = [
            r if r.scheme != "Q2" else RunResult(
                scheme="Q2", priority=3, n_pairs=5, trial=1, run_seed=0,
                error="TrainingDivergedError: boom",
            )
            for r in bundle.results
        ]
        checks = {c.name: c for c in ordering_checks(bundle)}
        assert not checks["ordering_throughput"].passed
        assert any("no successful runs" in d
                   for d in checks["ordering_throughput"].details)


TINY_OVERRIDES = {
    "trials": 1,
    "n_pairs": 2,
    "agent.episodes": 3,
    "agent.steps_per_episode": 4,
    "agent.batch_size": 8,
    "agent.replay_capacity": 64,
    "agent.hidden_sizes": [8, 8],
    "sim.window_slots": 1500,
    "stabilization.window": 2,
    "stabilization.hold": 2,
}


def tiny_config(**extra):
    return load_config(overrides={**TINY_OVERRIDES, **extra})


class TestSuiteAndReports:
    def test_run_one_summary_matches_log(self):
        cfg = tiny_config()
        res = run_one(cfg, "LBT", 3, 2, 1)
        assert res.error is None
        tail = res.log.records
        assert res.agg_throughput_mbps == pytest.approx(
            np.mean([r.gamma_nr_mbps + r.gamma_wf_mbps for r in tail])
        )
        assert res.jain == pytest.approx(np.mean([r.jain for r in tail]))
        assert res.mean_utility == pytest.approx(
            np.mean([(r.u_nr + r.u_wf) / 2 for r in tail])
        )
        assert res.run_seed == run_seed_for(cfg.base_seed, "LBT", 3, 2, 1)
        # the fixed agent never moves the TXOP off its start value
        assert all(r.t_nr_us == 8000.0 for r in tail)

    def test_suite_grid_order_and_determinism(self):
        bundle_a = run_suite(tiny_config(), schemes=("LBT", "MAB"),
                             priorities=(3,), n_pairs_list=(2,))
        bundle_b = run_suite(tiny_config(), schemes=("LBT", "MAB"),
                             priorities=(3,), n_pairs_list=(2,))
        assert [r.scheme for r in bundle_a.results] == ["LBT", "MAB"]
        assert bundle_a.results == bundle_b.results
        assert bundle_a.failures() == []

    def test_suite_rejects_bad_grid(self):
        cfg = tiny_config()
        with pytest.raises(ConfigError):
            run_suite(cfg, schemes=("LBT", "FancyNew"), priorities=(3,),
                      n_pairs_list=(2,))
        with pytest.raises(ConfigError):
            run_suite(cfg, schemes=("LBT",), priorities=(0,), n_pairs_list=(2,))
        with pytest.raises(ConfigError):
            run_suite(cfg, schemes=("LBT",), priorities=(3,), n_pairs_list=(11,))

    def test_failures_recorded_without_aborting(self):
        cfg = tiny_config(**{"agent.learning_rate": 1e30})
        with np.errstate(all="ignore"):
            bundle = run_suite(cfg, schemes=("LBT", "Q1"), priorities=(3,),
                               n_pairs_list=(2,))
        lbt, q1 = bundle.results
        assert lbt.error is None
        assert q1.error is not None and "TrainingDiverged" in q1.error
        assert bundle.failures() == [q1]
        assert bundle.cell_mean("Q1", 3, 2, "jain") is None

    def test_emit_report_files(self, tmp_path):
        bundle = run_suite(tiny_config(), schemes=("LBT", "MAB"),
                           priorities=(3,), n_pairs_list=(2,))
        written = emit_report(bundle, tmp_path / "out")
        names = {p.name for p in written}
        assert {"sweep.csv", "summary.txt", "metadata.json"} <= names

        sweep = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
        assert sweep[0] == ",".join(SWEEP_CSV_HEADER)
        assert len(sweep) == 3
        assert sweep[1].startswith("LBT,3,2,1,")

        run_csv = tmp_path / "out" / "runs" / "LBT_p3_n2_t1.csv"
        assert run_csv.exists()
        assert run_csv.read_text().splitlines()[0].startswith("episode,mean_reward")

        summary = (tmp_path / "out" / "summary.txt").read_text()
        assert summary.startswith("suite: schemes=LBT,MAB")
        assert "mab_placement p3 n2 throughput: rank" in summary
        assert "ordering_" not in summary  # needs all four ordered schemes

        meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
        assert meta["grid"]["base_seed"] == bundle.base_seed
        assert meta["grid"]["schemes"] == ["LBT", "MAB"]
        assert meta["failures"] == []
        assert "generated_at" in meta
        assert meta["config"]["agent"]["episodes"] == 3

    def test_reruns_are_byte_identical_except_timestamp(self, tmp_path):
        for tag in ("one", "two"):
            bundle = run_suite(tiny_config(), schemes=("LBT",), priorities=(3,),
                               n_pairs_list=(2,))
            emit_report(bundle, tmp_path / tag)
        for name in ("sweep.csv", "summary.txt", "runs/LBT_p3_n2_t1.csv"):
            a = (tmp_path / "one" / name).read_bytes()
            b = (tmp_path / "two" / name).read_bytes()
            assert a == b, name
        meta_a = json.loads((tmp_path / "one" / "metadata.json").read_text())
        meta_b = json.loads((tmp_path / "two" / "metadata.json").read_text())
        time_keys = {k for k in meta_a if "time" in k or "generated" in k}
        for k in set(meta_a) - time_keys:
            assert meta_a[k] == meta_b[k], k

    def test_summary_reports_failures(self, tmp_path):
        cfg = tiny_config(**{"agent.learning_rate": 1e30})
        with np.errstate(all="ignore"):
            bundle = run_suite(cfg, schemes=("LBT", "Q1"), priorities=(3,),
                               n_pairs_list=(2,))
        path = tmp_path / "summary.txt"
        write_summary(bundle, path)
        text = path.read_text()
        assert "Q1" in text and "TrainingDiverged" in text

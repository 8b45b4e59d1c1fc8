import csv
import json
from dataclasses import replace

import numpy as np
import pytest

import advactive.harness as harness
from advactive.attacker import AttackConfig
from advactive.datasets import DatasetSpec, Task
from advactive.errors import ConfigurationError, ExperimentError, SelectionError, ValidationError
from advactive.harness import (
    ErrorCurve,
    ExperimentConfig,
    ExperimentResult,
    RoundRecord,
    TrialRecord,
    build_pools,
    prepare_task,
    read_curve,
    run_experiment,
    run_trial,
    write_csv,
)
from advactive.seeding import trial_seed
from advactive.selection import StrategyConfig

SMALL = DatasetSpec(Task.SYNTHETIC2D, 12, 3, 3, (40, 40), 0)


def small_config(**kw):
    base = dict(dataset=SMALL, strategy=StrategyConfig("uncertainty"), budget=5, trials=2)
    base.update(kw)
    return ExperimentConfig(**base)


def stub_record(k, errors):
    return TrialRecord(k, k, [RoundRecord(r, e) for r, e in enumerate(errors)])


class TestBookkeeping:
    def test_pool_sizes_after_each_round(self):
        cfg = small_config(budget=4, trials=1)
        rec = run_trial(cfg, trial_seed(0, 0))
        assert [r.round for r in rec.rounds] == [0, 1, 2, 3, 4]
        uids = [r.chosen_uid for r in rec.rounds[1:]]
        assert len(set(uids)) == 4
        assert all(r.provenance == "natural" and r.injected_uid is None for r in rec.rounds[1:])

    def test_labels_come_from_oracle(self, monkeypatch):
        cfg = small_config(budget=3, trials=1)
        seen = []
        real = harness.DataPools.transfer

        def spy(self, index, label):
            seen.append((self.unlabeled[index].features.copy(), label))
            return real(self, index, label)

        monkeypatch.setattr(harness.DataPools, "transfer", spy)
        run_trial(cfg, 7)
        assert len(seen) == 3
        assert all(label == (1 if x[0] >= 0 else -1) for x, label in seen)

    def test_adversarial_samples_transfer(self):
        cfg = small_config(attack=AttackConfig(True), budget=3, trials=1)
        rec = run_trial(cfg, trial_seed(0, 0))
        for r in rec.rounds[1:]:
            assert r.injected_uid is not None
            assert r.provenance == "adversarial" and r.chosen_uid == r.injected_uid

    def test_exhaustion_pads_with_last_error(self, monkeypatch, caplog):
        cfg = small_config(budget=6, trials=1)
        calls = {"n": 0}
        real = harness.Selector.select

        def select(self, clf, view):
            calls["n"] += 1
            if calls["n"] == 3:
                raise SelectionError("T_u is empty")
            return real(self, clf, view)

        monkeypatch.setattr(harness.Selector, "select", select)
        rec = run_trial(cfg, 1)
        assert rec.exhausted_at == 3
        assert len(rec.rounds) == 7
        assert [r.round for r in rec.rounds] == list(range(7))
        assert np.all(rec.errors[3:] == rec.errors[2])
        assert {r.branch for r in rec.rounds[3:]} == {"padded"}
        assert "exhausted" in caplog.text


class TestDeterminism:
    def test_same_seed_same_trial(self):
        cfg = small_config(strategy=StrategyConfig("mixed", 0.5, "random"), budget=4, trials=1)
        a, b = run_trial(cfg, 42), run_trial(cfg, 42)
        assert a.rounds == b.rounds

    def test_round_zero_shared_across_strategies(self):
        errors = set()
        for st in (StrategyConfig("uncertainty"), StrategyConfig("random"), StrategyConfig("mixed", 0.5)):
            rec = run_trial(small_config(strategy=st, budget=1, trials=1), trial_seed(3, 2))
            errors.add((rec.rounds[0].test_error, rec.rounds[0].model_hash))
        assert len(errors) == 1

    def test_trials_use_distinct_splits(self):
        cfg = small_config()
        ctx = prepare_task(cfg)
        a = build_pools(cfg, trial_seed(0, 0), ctx)
        b = build_pools(cfg, trial_seed(0, 1), ctx)
        assert {s.uid for s in a.labeled} != {s.uid for s in b.labeled}
        # the pool itself is shared
        uids = lambda p: {s.uid for s in p.labeled + p.validation + p.unlabeled}  # noqa: E731
        assert uids(a) == uids(b)


class TestAveraging:
    def test_stub_curves_average_pointwise(self):
        records = [stub_record(k, [0.2 + 0.1 * k, 0.3, 0.5 - 0.1 * k]) for k in range(3)]
        curve = ErrorCurve.from_trials(records)
        np.testing.assert_allclose(curve.mean, [0.3, 0.3, 0.4], atol=1e-15)
        assert curve.per_trial.shape == (3, 3)

    def test_stderr(self):
        curve = ErrorCurve.from_trials([stub_record(0, [0.1]), stub_record(1, [0.3])])
        np.testing.assert_allclose(curve.stderr(), [0.1])
        assert ErrorCurve.from_trials([stub_record(0, [0.1])]).stderr()[0] == 0.0

    def test_experiment_mean_matches_trials(self):
        res = run_experiment(small_config(budget=2, trials=3))
        manual = np.mean([r.errors for r in res.records], axis=0)
        np.testing.assert_allclose(res.curve.mean, manual, rtol=0, atol=0)
        assert [r.seed for r in res.records] == [trial_seed(0, k) for k in range(3)]


class TestOutput:
    def _result(self):
        cfg = small_config(budget=9, trials=1)
        return run_experiment(cfg)

    def test_curve_csv_layout(self, tmp_path):
        write_csv(self._result(), tmp_path)
        lines = (tmp_path / "curve.csv").read_text().splitlines()
        assert len(lines) == 11
        assert lines[0] == "query,mean_test_error,trial_0"
        for q, line in enumerate(lines[1:]):
            fields = line.split(",")
            assert fields[0] == str(q)
            assert all(len(f.split(".")[1]) == 6 for f in fields[1:])

    def test_trial_file_and_meta(self, tmp_path):
        res = self._result()
        write_csv(res, tmp_path)
        with open(tmp_path / "trial_00.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10 and rows[0]["chosen_uid"] == ""
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert ExperimentConfig.from_dict(meta["config"]) == res.config
        assert meta["trial_seeds"] == [res.records[0].seed]
        assert meta["oracle_hash"] is None  # the synthetic oracle has no model

    def test_read_curve_round_trip(self, tmp_path):
        res = self._result()
        write_csv(res, tmp_path)
        label, curve = read_curve(tmp_path)
        assert label == res.config.label
        np.testing.assert_allclose(curve.mean, res.curve.mean, atol=5e-7)
        np.testing.assert_allclose(curve.per_trial, res.curve.per_trial, atol=5e-7)

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ExperimentError):
            write_csv(ExperimentResult(small_config(), [stub_record(0, [0.1])],
                                       ErrorCurve.from_trials([stub_record(0, [0.1])])), blocker / "sub")


class TestInvariants:
    def test_leak_is_detected(self):
        cfg = small_config(budget=1, trials=1)
        pools = build_pools(cfg, 5, prepare_task(cfg))
        leaked = replace(pools, unlabeled=pools.unlabeled + (pools.labeled[0],))
        state = harness.TrialState(leaked, None, natural_in_pool=len(pools.labeled) + len(pools.unlabeled) + 1)
        with pytest.raises(ValidationError):
            harness._check_invariants(state)

    def test_conservation_is_checked(self):
        cfg = small_config(budget=1, trials=1)
        pools = build_pools(cfg, 5, prepare_task(cfg))
        state = harness.TrialState(pools, None, natural_in_pool=len(pools.labeled) + len(pools.unlabeled) - 1)
        with pytest.raises(ExperimentError):
            harness._check_invariants(state)


class TestFailure:
    def test_partial_results_and_error_file(self, tmp_path, monkeypatch):
        cfg = small_config(budget=2, trials=3, output_dir=str(tmp_path))
        real = harness.run_trial

        def flaky(config, seed, context=None, trial_index=0):
            if trial_index == 2:
                raise RuntimeError("boom")
            return real(config, seed, context, trial_index)

        monkeypatch.setattr(harness, "run_trial", flaky)
        with pytest.raises(ExperimentError):
            run_experiment(cfg)
        assert "trial 2 failed after 2 completed" in (tmp_path / "error.txt").read_text()
        assert sorted(p.name for p in tmp_path.glob("trial_*.csv")) == ["trial_00.csv", "trial_01.csv"]
        assert len(read_curve(tmp_path)[1].per_trial) == 2


class TestConfig:
    def test_bad_counts(self):
        with pytest.raises(ConfigurationError):
            small_config(trials=0)
        with pytest.raises(ConfigurationError):
            small_config(budget=-1)

    def test_budget_beyond_pool(self):
        with pytest.raises(ConfigurationError):
            small_config(budget=13)  # 2 * (12 - 3 - 3) = 12 natural samples
        small_config(budget=13, attack=AttackConfig(True))

    def test_mnist_needs_files(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(dataset=DatasetSpec.reference_mnist())

    def test_round_trip(self):
        cfg = small_config(strategy=StrategyConfig("mixed", 0.75, "random"), attack=AttackConfig(True, 2))
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_label(self):
        assert small_config().label == "uncertainty, attack off"

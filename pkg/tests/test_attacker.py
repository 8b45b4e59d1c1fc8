import logging

import numpy as np
import pytest

from advactive.attacker import (
    AttackConfig,
    CandidateSource,
    candidate_pool,
    craft_attack,
    project_onto_boundary,
)
from advactive.calibration import CalibratedClassifier, PlattParams, calibrate
from advactive.datasets import DatasetSpec, Provenance, Sample, generate_synthetic, labels_of, stack
from advactive.errors import ConfigurationError, ValidationError
from advactive.harness import ExperimentConfig, Selector, TrialState, build_pools, fit_classifier, prepare_task, run_round
from advactive.seeding import trial_seed
from advactive.selection import StrategyConfig, candidate_utilities
from advactive.svm import LinearModel, train

from test_selection import micro_instance


class TestProjection:
    def test_onto_vertical_axis(self):
        model = LinearModel(np.array([1.0, 0.0]), 0.0)
        np.testing.assert_array_equal(project_onto_boundary(model, [2.0, 3.0]), [0.0, 3.0])

    def test_idempotent(self):
        model = LinearModel(np.array([1.0, 1.0]), -1.0)
        x = np.array([0.25, 0.75])
        np.testing.assert_array_equal(project_onto_boundary(model, x), x)

    def test_diagonal(self):
        model = LinearModel(np.array([1.0, 1.0]), 0.0)
        xp = project_onto_boundary(model, [2.0, 0.0])
        np.testing.assert_allclose(xp, [1.0, -1.0])
        assert model.decision(xp[None])[0] == 0.0

    def test_rows_match_single_points(self, rng):
        model = LinearModel(rng.normal(size=5), 0.3)
        X = rng.normal(size=(8, 5))
        batch = project_onto_boundary(model, X)
        for x, xp in zip(X, batch):
            np.testing.assert_allclose(project_onto_boundary(model, x), xp, rtol=1e-14)

    def test_zero_weights(self):
        with pytest.raises(ValidationError):
            project_onto_boundary(LinearModel(np.zeros(2), 1.0), [1.0, 2.0])

    def test_unclipped_outside_pixel_range(self):
        model = LinearModel(np.full(4, 1.0), -3.9)
        xp = project_onto_boundary(model, np.zeros(4))
        assert np.all(xp > 0.9) and abs(model.decision(xp[None])[0]) < 1e-12
        xq = project_onto_boundary(LinearModel(np.full(4, 1.0), 10.0), np.zeros(4))
        assert np.all(xq < 0)  # not clipped to [0, 1]


class TestCraft:
    def _setup(self, seed=0):
        view = micro_instance(seed, n_lab=4, n_unl=5)
        clf = calibrate(train(view.labeled_X, view.labeled_y), view.validation_X, view.validation_y)
        return view, clf

    def test_candidate_count(self):
        view, clf = self._setup()
        assert len(candidate_pool(clf.model, view)) == len(view.labeled_X) + len(view.unlabeled_X)

    def test_picks_minimum_utility(self):
        view, clf = self._setup()
        plan = craft_attack(clf, view, uid=99)
        cands = candidate_pool(clf.model, view)
        u = candidate_utilities(clf, view, cands).utilities
        assert plan.source_index == int(np.argmin(u))
        np.testing.assert_array_equal(plan.sample.features, cands[plan.source_index])
        np.testing.assert_array_equal(plan.utilities, u)

    def test_argmin_with_fixed_utilities(self, monkeypatch):
        import advactive.attacker as attacker
        from advactive.selection import UtilityReport

        view, clf = self._setup()
        n = len(view.labeled_X) + len(view.unlabeled_X)
        u = np.full(n, 0.9)
        u[[2, 5, 7]] = [0.8, 0.3, 0.5]
        monkeypatch.setattr(attacker, "candidate_utilities", lambda *a, **k: UtilityReport(u, np.zeros(n, bool)))
        assert craft_attack(clf, view, uid=0).source_index == 5

    def test_sample_is_on_boundary_and_unlabeled(self):
        for seed in range(5):
            view, clf = self._setup(seed)
            s = craft_attack(clf, view, uid=123).sample
            w = clf.model.weights
            assert abs(w @ s.features + clf.model.bias) <= 1e-9 * np.linalg.norm(w)
            assert s.label is None and s.provenance is Provenance.ADVERSARIAL and s.uid == 123

    def test_natural_only_mask(self):
        view, clf = self._setup()
        n = len(view.labeled_X) + len(view.unlabeled_X)
        mask = np.ones(n, dtype=bool)
        mask[[0, 3, 6]] = False
        plan = craft_attack(clf, view, uid=1, natural_mask=mask)
        assert plan.source_index not in (0, 3, 6)
        assert len(plan.utilities) == n - 3

    def test_zero_weights_skip(self, caplog):
        view, _ = self._setup()
        clf = CalibratedClassifier(LinearModel(np.zeros(2), 0.5), PlattParams(-1.0, 0.0))
        with caplog.at_level(logging.WARNING):
            assert craft_attack(clf, view, uid=0).sample is None
        assert "zero weight" in caplog.text

    def test_view_has_no_test_or_truth(self):
        view, _ = self._setup()
        assert not hasattr(view, "test") and not hasattr(view, "unlabeled_truth")


class TestConfig:
    def test_enabled_needs_injections(self):
        with pytest.raises(ConfigurationError):
            AttackConfig(True, 0)

    def test_round_trip(self):
        cfg = AttackConfig(True, 2, "natural_only")
        assert AttackConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.source is CandidateSource.NATURAL_ONLY


class TestPoolEffects:
    def test_inject_grows_pool(self):
        pools = generate_synthetic(DatasetSpec.reference_synthetic())
        after = pools.inject(Sample(pools.next_uid, np.zeros(2), None, Provenance.ADVERSARIAL))
        assert len(pools.unlabeled) == 190 and len(after.unlabeled) == 191


def _run_rounds(attack, rounds, k=0):
    cfg = ExperimentConfig(strategy=StrategyConfig("uncertainty"), attack=AttackConfig(attack), budget=rounds, trials=1)
    ctx = prepare_task(cfg)
    seed = trial_seed(0, k)
    pools = build_pools(cfg, seed, ctx)
    state = TrialState(pools, fit_classifier(pools, cfg.solver),
                       natural_in_pool=len(pools.labeled) + len(pools.unlabeled))
    selector = Selector(cfg.strategy, seed, cfg.solver)
    records = [run_round(state, selector, cfg.attack, ctx.oracle, cfg.solver,
                         stack(pools.test), labels_of(pools.test), r) for r in range(1, rounds + 1)]
    return state, records


def _angle_to_vertical(model):
    w = model.weights
    return np.degrees(np.arctan2(abs(w[1]), abs(w[0])))


class TestRoundEffects:
    def test_injected_sample_is_selected_and_labeled(self):
        state, records = _run_rounds(True, 3)
        for rec in records:
            assert rec.provenance == "adversarial" and rec.chosen_uid == rec.injected_uid
        labeled_uids = {s.uid for s in state.pools.labeled}
        assert all(rec.injected_uid in labeled_uids for rec in records)

    def test_disabled_attack_only_transfers(self):
        state, records = _run_rounds(False, 3)
        assert all(rec.injected_uid is None and rec.provenance == "natural" for rec in records)
        assert len(state.pools.unlabeled) == 187 and len(state.pools.labeled) == 13

    def test_boundary_tilts_under_attack(self):
        # single-trial setup at the default seed, nine queries
        clean, _ = _run_rounds(False, 9)
        attacked, _ = _run_rounds(True, 9)
        assert _angle_to_vertical(attacked.clf.model) > _angle_to_vertical(clean.clf.model)

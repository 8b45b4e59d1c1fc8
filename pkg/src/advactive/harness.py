"""Active-learning rounds, trials and multi-trial experiments.

One round: inject (if attacking), select, oracle-label, move the sample to
T_l, retrain, recalibrate on V, record the test error.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .attacker import AttackConfig, CandidateSource, craft_attack
from .calibration import CalibratedClassifier, calibrate
from .datasets import (
    DataPools,
    DatasetSpec,
    Provenance,
    Task,
    build_mnist_task,
    generate_synthetic,
    labels_of,
    load_mnist,
    stack,
)
from .errors import ConfigurationError, ExperimentError, SelectionError
from .oracle import Oracle, OracleKind, build_full_oracle
from .seeding import trial_seed
from .selection import Selector, StrategyConfig
from .svm import SolverConfig, test_error, train

log = logging.getLogger(__name__)

DEFAULT_BUDGET = {Task.SYNTHETIC2D: 50, Task.MNIST56: 100}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = DatasetSpec()
    strategy: StrategyConfig = StrategyConfig()
    attack: AttackConfig = AttackConfig()
    solver: SolverConfig = SolverConfig()
    budget: int = 50
    trials: int = 10
    master_seed: int = 0
    output_dir: Optional[str] = None
    mnist_images: Optional[str] = None
    mnist_labels: Optional[str] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trial count must be at least 1")
        if self.budget < 0:
            raise ConfigurationError("query budget cannot be negative")
        spec = self.dataset
        natural = 2 * (spec.pool_per_class - spec.labeled_per_class - spec.validation_per_class)
        injected = self.budget * self.attack.injections_per_round if self.attack.enabled else 0
        if self.budget > natural + injected:
            raise ConfigurationError(f"budget {self.budget} exceeds the {natural + injected} samples T_u can supply")
        if spec.task is Task.MNIST56 and not (self.mnist_images and self.mnist_labels):
            raise ConfigurationError("the mnist56 task needs --mnist-images and --mnist-labels")

    @property
    def label(self) -> str:
        return f"{self.strategy.name}, attack {'on' if self.attack.enabled else 'off'}"

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "strategy": self.strategy.to_dict(),
            "attack": self.attack.to_dict(),
            "solver": {"C": self.solver.C, "tol": self.solver.tol, "max_epochs": self.solver.max_epochs},
            "budget": self.budget,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "mnist_images": self.mnist_images,
            "mnist_labels": self.mnist_labels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["dataset"] = DatasetSpec.from_dict(d["dataset"])
        d["strategy"] = StrategyConfig.from_dict(d["strategy"])
        d["attack"] = AttackConfig.from_dict(d["attack"])
        d["solver"] = SolverConfig(**d["solver"])
        return cls(**d)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    test_error: float
    chosen_uid: Optional[int] = None
    provenance: Optional[str] = None
    branch: Optional[str] = None
    injected_uid: Optional[int] = None
    model_hash: str = ""


@dataclass
class TrialRecord:
    trial_index: int
    seed: int
    rounds: list = field(default_factory=list)
    exhausted_at: Optional[int] = None

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.test_error for r in self.rounds])


@dataclass(frozen=True)
class ErrorCurve:
    mean: np.ndarray
    per_trial: np.ndarray  # (trials, budget + 1)

    @classmethod
    def from_trials(cls, records: Sequence[TrialRecord]) -> "ErrorCurve":
        per_trial = np.vstack([r.errors for r in records])
        return cls(per_trial.mean(axis=0), per_trial)

    def stderr(self) -> np.ndarray:
        n = len(self.per_trial)
        if n < 2:
            return np.zeros_like(self.mean)
        return self.per_trial.std(axis=0, ddof=1) / np.sqrt(n)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    curve: ErrorCurve
    oracle_hash: Optional[str] = None


@dataclass(frozen=True)
class TaskContext:
    """Data shared by every trial of one experiment."""

    oracle: Oracle
    images: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None


def build_pools(config: ExperimentConfig, trial_seed: int, context: TaskContext) -> DataPools:
    """Pools for one trial: shared T_r, per-trial T_l/V split.

    Synthetic trials also get a fresh test sample, so the averaged curve
    estimates generalization error rather than error on one fixed draw.
    """
    spec = replace(config.dataset, split_seed=trial_seed)
    if spec.task is Task.SYNTHETIC2D:
        return generate_synthetic(replace(spec, test_seed=trial_seed))
    return build_mnist_task(context.images, context.labels, spec)


def prepare_task(config: ExperimentConfig) -> TaskContext:
    if config.dataset.task is Task.SYNTHETIC2D:
        return TaskContext(Oracle(OracleKind.BAYES_SYNTHETIC))
    images, labels = load_mnist(config.mnist_images, config.mnist_labels)
    pools = build_mnist_task(images, labels, config.dataset)
    every = pools.labeled + pools.validation + pools.unlabeled + pools.test
    model = build_full_oracle(stack(every), np.array([s.truth for s in every], dtype=np.float64),
                              replace(config.solver, C=1e4))
    log.info("full-data oracle %s built on %d samples", model.snapshot_hash(), len(every))
    return TaskContext(Oracle(OracleKind.FULLSVM_MNIST, model), images, labels)


@dataclass
class TrialState:
    pools: DataPools
    clf: CalibratedClassifier
    injections: int = 0
    natural_in_pool: int = 0

    @property
    def view(self):
        return self.pools.view()


def fit_classifier(pools: DataPools, solver: SolverConfig) -> CalibratedClassifier:
    view = pools.view()
    model = train(view.labeled_X, view.labeled_y, solver)
    return calibrate(model, view.validation_X, view.validation_y)


def _check_invariants(state: TrialState) -> None:
    state.pools.check_disjoint()
    training = state.pools.labeled + state.pools.unlabeled
    natural = sum(s.provenance is Provenance.NATURAL for s in training)
    if natural != state.natural_in_pool or len(training) - natural != state.injections:
        raise ExperimentError("sample conservation violated")


def run_round(state: TrialState, selector: Selector, attack: AttackConfig, oracle: Oracle,
              solver: SolverConfig, test_X, test_y, index: int) -> RoundRecord:
    """Advance ``state`` by one query and return what happened."""
    injected = None
    if attack.enabled:
        for _ in range(attack.injections_per_round):
            view = state.view
            mask = None
            if attack.source is CandidateSource.NATURAL_ONLY:
                mask = [s.provenance is Provenance.NATURAL for s in state.pools.labeled + state.pools.unlabeled]
            plan = craft_attack(state.clf, view, state.pools.next_uid, solver, natural_mask=mask)
            if plan.sample is not None:
                state.pools = state.pools.inject(plan.sample)
                state.injections += 1
                injected = plan.sample.uid
    outcome = selector.select(state.clf, state.view)
    chosen = state.pools.unlabeled[outcome.index]
    state.pools, moved = state.pools.transfer(outcome.index, oracle.label(chosen.features))
    state.clf = fit_classifier(state.pools, solver)
    _check_invariants(state)
    return RoundRecord(
        round=index,
        test_error=test_error(state.clf.model, test_X, test_y),
        chosen_uid=moved.uid,
        provenance=moved.provenance.value,
        branch=outcome.branch,
        injected_uid=injected,
        model_hash=state.clf.model.snapshot_hash(),
    )


def run_trial(config: ExperimentConfig, seed: int, context: Optional[TaskContext] = None,
              trial_index: int = 0) -> TrialRecord:
    """One trial: fresh T_l/V split of the shared pool, then ``budget`` rounds."""
    context = context or prepare_task(config)
    pools = build_pools(config, seed, context)
    test_X, test_y = stack(pools.test), labels_of(pools.test)
    state = TrialState(pools, fit_classifier(pools, config.solver),
                       natural_in_pool=len(pools.labeled) + len(pools.unlabeled))
    selector = Selector(config.strategy, seed, config.solver)
    record = TrialRecord(trial_index, seed)
    record.rounds.append(RoundRecord(0, test_error(state.clf.model, test_X, test_y),
                                     model_hash=state.clf.model.snapshot_hash()))
    for r in range(1, config.budget + 1):
        try:
            record.rounds.append(run_round(state, selector, config.attack, context.oracle,
                                           config.solver, test_X, test_y, r))
        except SelectionError:
            log.warning("trial %d: T_u exhausted at round %d; padding the curve", trial_index, r)
            record.exhausted_at = r
            last = record.rounds[-1]
            record.rounds.extend(RoundRecord(k, last.test_error, branch="padded", model_hash=last.model_hash)
                                 for k in range(r, config.budget + 1))
            break
    return record


def run_experiment(config: ExperimentConfig, context: Optional[TaskContext] = None,
                   progress: Optional[Callable[[TrialRecord], None]] = None) -> ExperimentResult:
    """Run ``config.trials`` trials and average their error curves pointwise.

    If a trial fails, finished trials and an error summary are written to
    ``config.output_dir`` (when set) before :class:`ExperimentError` is raised.
    """
    context = context or prepare_task(config)
    records = []
    for k in range(config.trials):
        try:
            records.append(run_trial(config, trial_seed(config.master_seed, k), context, k))
        except Exception as exc:
            if config.output_dir:
                out = Path(config.output_dir)
                if records:
                    write_csv(ExperimentResult(config, records, ErrorCurve.from_trials(records),
                                               _oracle_hash(context)), out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "error.txt").write_text(f"trial {k} failed after {len(records)} completed: {exc!r}\n")
            raise ExperimentError(f"trial {k} failed: {exc}") from exc
        if progress:
            progress(records[-1])
    return ExperimentResult(config, records, ErrorCurve.from_trials(records), _oracle_hash(context))


def _oracle_hash(context: TaskContext) -> Optional[str]:
    model = context.oracle.model
    return None if model is None else model.snapshot_hash()


METADATA_NOTES = {
    "mnist_pixel_scaling": "pixels divided by 255",
    "mnist_labels": "digit 5 -> +1, digit 6 -> -1",
    "validation_set": "fixed for the whole trial; only the sigmoid is refit each round",
    "mnist_oracle_training_set": "pool and test samples",
    "tie_rule": "zero margin -> +1; selection ties -> lowest index",
}


def write_csv(result: ExperimentResult, out_dir) -> list[Path]:
    """Write ``curve.csv``, ``meta.json`` and one ``trial_NN.csv`` per trial."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "curve.csv", out / "meta.json"]
        curve = result.curve
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query", "mean_test_error"] + [f"trial_{k}" for k in range(len(curve.per_trial))])
            for q, mean in enumerate(curve.mean):
                w.writerow([q, f"{mean:.6f}"] + [f"{e:.6f}" for e in curve.per_trial[:, q]])
        meta = {
            "config": result.config.to_dict(),
            "label": result.config.label,
            "trial_seeds": [r.seed for r in result.records],
            "exhausted_at": [r.exhausted_at for r in result.records],
            "oracle_hash": result.oracle_hash,
            "versions": {"advactive": __version__, "numpy": np.__version__},
            "notes": METADATA_NOTES,
        }
        paths[1].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        for rec in result.records:
            path = out / f"trial_{rec.trial_index:02d}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["round", "test_error", "chosen_uid", "provenance", "branch", "injected_uid", "model_hash"])
                for r in rec.rounds:
                    w.writerow([r.round, f"{r.test_error:.6f}", _blank(r.chosen_uid), _blank(r.provenance),
                                _blank(r.branch), _blank(r.injected_uid), r.model_hash])
            paths.append(path)
    except OSError as exc:
        raise ExperimentError(f"could not write results to {exc.filename or out}: {exc.strerror}") from exc
    return paths


def _blank(v) -> str:
    return "" if v is None else str(v)


def read_curve(run_dir) -> tuple[str, ErrorCurve]:
    """Load the label and curve written by :func:`write_csv`."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "meta.json").read_text())
    with open(run_dir / "curve.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    table = np.array([[float(v) for v in row[1:]] for row in rows])
    return meta["label"], ErrorCurve(table[:, 0], table[:, 1:].T)

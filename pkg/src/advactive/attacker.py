"""Boundary-projection poisoning attack.

Each round the attacker projects the pool samples onto the current decision
hyperplane and injects into T_u the projection with the smallest expected
utility, i.e. the point the max-expected-utility learner would value least.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .calibration import CalibratedClassifier
from .datasets import PoolView, Provenance, Sample
from .errors import ConfigurationError, ValidationError
from .selection import candidate_utilities
from .svm import LinearModel, SolverConfig

log = logging.getLogger(__name__)


class CandidateSource(str, enum.Enum):
    ALL_POOL = "all_pool"
    NATURAL_ONLY = "natural_only"


@dataclass(frozen=True)
class AttackConfig:
    enabled: bool = False
    injections_per_round: int = 1
    source: CandidateSource = CandidateSource.ALL_POOL

    def __post_init__(self):
        object.__setattr__(self, "source", CandidateSource(self.source))
        if self.enabled and self.injections_per_round < 1:
            raise ConfigurationError("an enabled attack injects at least one sample per round")

    def to_dict(self) -> dict:
        return {"enabled": self.enabled, "injections_per_round": self.injections_per_round,
                "source": self.source.value}

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(**d)


def project_onto_boundary(model: LinearModel, x) -> np.ndarray:
    """Orthogonal projection of ``x`` (or each row of ``x``) onto ``w . z + b = 0``."""
    w = model.weights
    sq = float(w @ w)
    if sq == 0.0:
        raise ValidationError("cannot project onto the boundary of a zero weight vector")
    x = np.asarray(x, dtype=np.float64)
    f = x @ w + model.bias
    return x - np.multiply.outer(f / sq, w)


@dataclass(frozen=True)
class AttackPlan:
    """Crafted sample plus diagnostics; ``sample`` is None when the attack was skipped."""

    sample: Optional[Sample]
    source_index: Optional[int] = None
    utilities: Optional[np.ndarray] = None


def candidate_pool(model: LinearModel, view: PoolView, natural_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Projections of T_l followed by T_u; ``natural_mask`` filters the rows kept."""
    X = np.vstack([view.labeled_X, view.unlabeled_X])
    if natural_mask is not None:
        X = X[np.asarray(natural_mask, dtype=bool)]
    return project_onto_boundary(model, X)


def craft_attack(
    clf: CalibratedClassifier,
    view: PoolView,
    uid: int,
    solver: SolverConfig = SolverConfig(),
    natural_mask: Optional[np.ndarray] = None,
) -> AttackPlan:
    """Return the minimum-expected-utility boundary projection as an adversarial sample.

    The attacker sees only ``view`` (T_l, T_u, V) and the learner's current
    calibrated classifier. ``natural_mask`` (over T_l then T_u) restricts the
    sources to natural samples.
    """
    if clf.model.norm == 0.0:
        log.warning("zero weight vector; attack skipped this round")
        return AttackPlan(None)
    cands = candidate_pool(clf.model, view, natural_mask)
    if len(cands) == 0:
        log.warning("no attack candidates; attack skipped this round")
        return AttackPlan(None)
    utilities = candidate_utilities(clf, view, cands, None, solver).utilities
    best = int(np.argmin(utilities))
    sources = np.arange(len(view.labeled_X) + len(view.unlabeled_X))
    if natural_mask is not None:
        sources = sources[np.asarray(natural_mask, dtype=bool)]
    sample = Sample(uid, cands[best], None, Provenance.ADVERSARIAL)
    return AttackPlan(sample, int(sources[best]), utilities)


def inject(pools, sample: Sample):
    """Append an adversarial sample to T_u."""
    return pools.inject(sample)

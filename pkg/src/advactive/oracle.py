"""Labeling oracles: the Bayes rule for the synthetic task, a frozen full-data SVM for MNIST."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import OracleError, ValidationError
from .svm import LinearModel, SolverConfig, predict, train

HARD_MARGIN_C = 1e4


class OracleKind(str, enum.Enum):
    BAYES_SYNTHETIC = "bayes_synthetic"
    FULLSVM_MNIST = "fullsvm_mnist"


def bayes_label(x) -> int:
    """Sign of the first coordinate; the optimal boundary is the vertical axis. 0 -> +1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (2,):
        raise ValidationError(f"Bayes oracle expects a 2-D point, got shape {x.shape}")
    return 1 if x[0] >= 0.0 else -1


def build_full_oracle(X, y, config: Optional[SolverConfig] = None) -> LinearModel:
    """Train the near-hard-margin SVM on every sample the experiment owns.

    Raises :class:`OracleError` if the result misclassifies any of them.
    """
    config = config or SolverConfig(C=HARD_MARGIN_C)
    model = train(X, y, config)
    wrong = int(np.sum(predict(model, X) != np.asarray(y)))
    if wrong:
        raise OracleError(f"full-data SVM misclassifies {wrong} of {len(y)} samples; data not separable")
    return model


@dataclass(frozen=True)
class Oracle:
    kind: OracleKind
    model: Optional[LinearModel] = None

    def __post_init__(self):
        if self.kind is OracleKind.FULLSVM_MNIST and self.model is None:
            raise OracleError("the full-data SVM oracle needs a trained model")

    def label(self, x) -> int:
        if self.kind is OracleKind.BAYES_SYNTHETIC:
            return bayes_label(x)
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.model.weights.shape:
            raise ValidationError(f"expected dimension {self.model.weights.shape[0]}, got shape {x.shape}")
        return int(predict(self.model, x[None, :])[0])


def oracle_label(oracle: Oracle, x) -> int:
    return oracle.label(x)

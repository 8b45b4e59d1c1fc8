"""Active-learning sample selection: uncertainty, max expected utility, random, mixed.

Expected utility of candidate ``x_i`` under the current posterior ``theta``::

    U_i = sum_{y_i} p(y_i | x_i) / N * (
              sum_{j in L + {i}} p'(y_j | x_j)
            + sum_{j in U - {i}} sum_{y_j} p(y_j | x_j) p'(y_j | x_j) )

where ``p'`` is the posterior after retraining the SVM on ``T_l + (x_i, y_i)``
and refitting the sigmoid on V, and ``N = |T_l| + |T_u|``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .calibration import GRAD_TOL, MAX_NEWTON, CalibratedClassifier, _fit, _sigmoid_neg
from .datasets import PoolView
from .errors import ConfigurationError, SelectionError, TrainingError
from .seeding import stream
from .svm import LinearModel, SolverConfig, _solve_dual, augmented_diag, augmented_gram, solve_from_gram

log = logging.getLogger(__name__)


class StrategyKind(str, enum.Enum):
    UNCERTAINTY = "uncertainty"
    MEU = "meu"
    RANDOM = "random"
    MIXED = "mixed"


class Companion(str, enum.Enum):
    MEU = "meu"
    RANDOM = "random"


@dataclass(frozen=True)
class StrategyConfig:
    kind: StrategyKind = StrategyKind.UNCERTAINTY
    p: float = 0.0
    companion: Companion = Companion.MEU
    keep_utilities: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "companion", Companion(self.companion))
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"mix probability must lie in [0, 1], got {self.p}")

    @property
    def name(self) -> str:
        if self.kind is StrategyKind.MIXED:
            return f"mixed-{self.companion.value}(p={self.p:g})"
        return self.kind.value

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p": self.p, "companion": self.companion.value,
                "keep_utilities": self.keep_utilities}

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyConfig":
        return cls(**d)


@dataclass(frozen=True)
class SelectionOutcome:
    index: int
    branch: str
    utilities: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class UtilityReport:
    utilities: np.ndarray
    unconverged: np.ndarray  # True where a retrain hit the epoch limit


@numba.njit(cache=True)
def _branch_sum(y_L, q_L, y_c, q_c, p_U, q_U, exclude):
    # Bracketed sum for one putative label: agreement of the retrained
    # posterior q (probability of +1) with the known labels of T_l and the
    # candidate, plus expected agreement with the current posterior p on T_u.
    total = 0.0
    for j in range(y_L.shape[0]):
        total += q_L[j] if y_L[j] > 0 else 1.0 - q_L[j]
    total += q_c if y_c > 0 else 1.0 - q_c
    for j in range(p_U.shape[0]):
        if j != exclude:
            total += p_U[j] * q_U[j] + (1.0 - p_U[j]) * (1.0 - q_U[j])
    return total


def utility_from_posteriors(p_c, y_L, p_U, branches, exclude=-1) -> float:
    """Combine posteriors into the expected utility of one candidate.

    ``p_c`` is the current probability of +1 at the candidate and ``p_U`` the
    current probabilities on T_u. ``branches`` maps each putative label (+1,
    -1) to the retrained probabilities ``(q_L, q_c, q_U)``. ``exclude`` is the
    candidate's own index in T_u, or -1 for an outside point (which then
    counts toward N).
    """
    y_L = np.asarray(y_L, dtype=np.float64)
    p_U = np.asarray(p_U, dtype=np.float64)
    N = len(y_L) + len(p_U) + (1 if exclude < 0 else 0)
    total = 0.0
    for y_c, weight in ((1, p_c), (-1, 1.0 - p_c)):
        q_L, q_c, q_U = branches[y_c]
        total += weight * _branch_sum(y_L, np.asarray(q_L, dtype=np.float64), float(y_c), float(q_c),
                                      p_U, np.asarray(q_U, dtype=np.float64), int(exclude))
    return total / N


@numba.njit(cache=True)
def _utilities(K_LL, y_L, K_LC, k_CC, K_LV, K_CV, pos_V, K_LU, K_CU, p_U, p_C, exclude, N,
               C, tol, max_epochs, alpha_base):
    n_L = K_LL.shape[0]
    m = K_LC.shape[1]
    n_V = K_LV.shape[1]
    n_U = K_LU.shape[1]
    K = np.empty((n_L + 1, n_L + 1))
    K[:n_L, :n_L] = K_LL
    y = np.empty(n_L + 1)
    y[:n_L] = y_L
    utilities = np.empty(m)
    converged = np.ones(m, dtype=np.bool_)
    f_L = np.empty(n_L)
    f_V = np.empty(n_V)
    f_U = np.empty(n_U)
    for c in range(m):
        for i in range(n_L):
            K[i, n_L] = K_LC[i, c]
            K[n_L, i] = K_LC[i, c]
        K[n_L, n_L] = k_CC[c]
        total = 0.0
        for branch in range(2):
            y_c = 1.0 if branch == 0 else -1.0
            weight = p_C[c] if branch == 0 else 1.0 - p_C[c]
            y[n_L] = y_c
            alpha, _, ok = _solve_dual(K, y, C, tol, max_epochs, alpha_base.copy())
            if not ok:
                converged[c] = False
            coef = alpha * y
            # margins from kernel columns: f(x) = sum_k coef_k K(x_k, x)
            f_c = coef[n_L] * k_CC[c]
            for i in range(n_L):
                f_c += coef[i] * K_LC[i, c]
            for j in range(n_L):
                f_L[j] = coef[n_L] * K_LC[j, c]
            for j in range(n_V):
                f_V[j] = coef[n_L] * K_CV[c, j]
            for j in range(n_U):
                f_U[j] = coef[n_L] * K_CU[c, j]
            for i in range(n_L):
                a = coef[i]
                if a != 0.0:
                    for j in range(n_L):
                        f_L[j] += a * K_LL[i, j]
                    for j in range(n_V):
                        f_V[j] += a * K_LV[i, j]
                    for j in range(n_U):
                        f_U[j] += a * K_LU[i, j]
            A, B, _, _, _ = _fit(f_V, pos_V, GRAD_TOL, MAX_NEWTON)
            for j in range(n_L):
                f_L[j] = _sigmoid_neg(A * f_L[j] + B)
            for j in range(n_U):
                f_U[j] = _sigmoid_neg(A * f_U[j] + B)
            total += weight * _branch_sum(y_L, f_L, y_c, _sigmoid_neg(A * f_c + B), p_U, f_U, exclude[c])
        utilities[c] = total / N
    return utilities, converged


def candidate_utilities(
    clf: CalibratedClassifier,
    view: PoolView,
    candidates,
    pool_indices: Optional[Sequence[int]] = None,
    solver: SolverConfig = SolverConfig(),
) -> UtilityReport:
    """Expected utility of each row of ``candidates``.

    With ``pool_indices`` the candidates are members of T_u at those indices
    and are excluded from the unlabeled sum. Without it they are outside
    points evaluated as if just added to T_u, so N counts them as well.

    Every retrain is warm-started from the current T_l solution, and margins
    are read off precomputed kernel blocks instead of forming weights.
    """
    C = np.ascontiguousarray(candidates, dtype=np.float64)
    X_L, y_L = view.labeled_X, np.ascontiguousarray(view.labeled_y, dtype=np.float64)
    X_U, X_V = view.unlabeled_X, view.validation_X
    if len(np.unique(y_L)) < 2:
        raise TrainingError("T_l must contain both classes")
    N = view.n if pool_indices is not None else view.n + 1
    exclude = np.full(len(C), -1, dtype=np.int64)
    if pool_indices is not None:
        exclude[:] = pool_indices

    K_LL = augmented_gram(X_L)
    alpha_base = np.append(solve_from_gram(K_LL, X_L, y_L, solver).alpha, 0.0)
    utilities, converged = _utilities(
        K_LL, y_L, augmented_gram(X_L, C), augmented_diag(C),
        augmented_gram(X_L, X_V), augmented_gram(C, X_V), np.asarray(view.validation_y) == 1,
        augmented_gram(X_L, X_U), augmented_gram(C, X_U),
        clf.prob_positive(X_U), clf.prob_positive(C), exclude, float(N),
        float(solver.C), float(solver.tol), int(solver.max_epochs), alpha_base,
    )
    if not converged.all():
        log.warning("%d candidate retrains stopped before reaching tol=%g", int((~converged).sum()), solver.tol)
    return UtilityReport(utilities, ~converged)


def expected_utility(
    clf: CalibratedClassifier,
    view: PoolView,
    i: int,
    solver: SolverConfig = SolverConfig(),
) -> float:
    """Expected utility of ``T_u[i]``."""
    if not 0 <= i < len(view.unlabeled_X):
        raise SelectionError(f"candidate {i} outside T_u of size {len(view.unlabeled_X)}")
    return float(candidate_utilities(clf, view, view.unlabeled_X[i:i + 1], [i], solver).utilities[0])


def _require_unlabeled(view: PoolView) -> int:
    n = len(view.unlabeled_X)
    if n == 0:
        raise SelectionError("T_u is empty")
    return n


def select_uncertainty(model: LinearModel, view: PoolView) -> SelectionOutcome:
    """Nearest unlabeled sample to the boundary; first index wins ties.

    |f(x)| / |w| has the same argmin as |f(x)|, so the norm is not divided out.
    """
    _require_unlabeled(view)
    return SelectionOutcome(int(np.argmin(np.abs(model.decision(view.unlabeled_X)))), "uncertainty")


def select_meu(clf, view, solver=SolverConfig(), keep_utilities=False) -> SelectionOutcome:
    n = _require_unlabeled(view)
    u = candidate_utilities(clf, view, view.unlabeled_X, np.arange(n), solver).utilities
    return SelectionOutcome(int(np.argmax(u)), "meu", u if keep_utilities else None)


def select_random(rng: np.random.Generator, view: PoolView) -> SelectionOutcome:
    n = _require_unlabeled(view)
    return SelectionOutcome(int(rng.integers(n)), "random")


def select_mixed(coin_rng, random_rng, p, companion, clf, view,
                 solver=SolverConfig(), keep_utilities=False) -> SelectionOutcome:
    """Companion strategy with probability ``p``, uncertainty sampling otherwise.

    The coin is drawn every round from its own stream, whatever ``p`` is.
    """
    _require_unlabeled(view)
    if coin_rng.random() < p:
        if Companion(companion) is Companion.MEU:
            return select_meu(clf, view, solver, keep_utilities)
        return select_random(random_rng, view)
    return select_uncertainty(clf.model, view)


class Selector:
    """A strategy bound to its random streams for one trial."""

    def __init__(self, config: StrategyConfig, seed: int, solver: SolverConfig = SolverConfig()):
        self.config = config
        self.solver = solver
        self.coin_rng = stream(seed, "mix")
        self.random_rng = stream(seed, "random")

    def select(self, clf: CalibratedClassifier, view: PoolView) -> SelectionOutcome:
        cfg = self.config
        if cfg.kind is StrategyKind.UNCERTAINTY:
            return select_uncertainty(clf.model, view)
        if cfg.kind is StrategyKind.MEU:
            return select_meu(clf, view, self.solver, cfg.keep_utilities)
        if cfg.kind is StrategyKind.RANDOM:
            return select_random(self.random_rng, view)
        return select_mixed(self.coin_rng, self.random_rng, cfg.p, cfg.companion, clf, view,
                            self.solver, cfg.keep_utilities)

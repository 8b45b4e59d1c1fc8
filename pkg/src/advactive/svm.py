"""Soft-margin linear SVM trained by dual coordinate descent.

The bias is folded into the weights through a constant unit feature, so the
primal objective is ``0.5 * (|w|^2 + b^2) + C * sum(hinge)`` and the dual has
box constraints only: ``0 <= alpha_i <= C``.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numba
import numpy as np

from .errors import TrainingError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    C: float = 1.0
    tol: float = 1e-8
    max_epochs: int = 100_000

    def __post_init__(self):
        if not self.C > 0:
            raise ValidationError(f"C must be positive, got {self.C}")
        if not self.tol > 0:
            raise ValidationError(f"tolerance must be positive, got {self.tol}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be positive, got {self.max_epochs}")


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float

    def decision(self, X) -> np.ndarray:
        """Margins ``X @ w + b`` for a 2-D batch."""
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    def snapshot_hash(self) -> str:
        """Hash of (w, b) rounded to a 1e-12 grid."""
        q = np.rint(np.append(self.weights, self.bias) * 1e12) + 0.0
        return hashlib.sha256(q.astype("<f8").tobytes()).hexdigest()[:16]


@numba.njit(cache=True)
def _augmented_gram(A, B):
    # Entries are summed in a fixed order so that K[i, j] depends only on the
    # two rows involved, not on how the matrix was stacked.
    n, m, d = A.shape[0], B.shape[0], A.shape[1]
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                s += A[i, k] * B[j, k]
            K[i, j] = s + 1.0
    return K


@numba.njit(cache=True)
def augmented_diag(A):
    """``A[i] . A[i] + 1``, summed exactly as in the full Gram matrix."""
    out = np.empty(A.shape[0])
    for i in range(A.shape[0]):
        s = 0.0
        for k in range(A.shape[1]):
            s += A[i, k] * A[i, k]
        out[i] = s + 1.0
    return out


def augmented_gram(A, B=None) -> np.ndarray:
    """``K[i, j] = A[i] . B[j] + 1`` (inner products with the bias feature)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = A if B is None else np.ascontiguousarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise ValidationError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _augmented_gram(A, B)


@numba.njit(cache=True)
def _dual_cd(K, y, C, tol, max_epochs, alpha, grad):
    # Cyclic coordinate descent, updating ``alpha`` and ``grad`` in place.
    # grad = Q alpha - 1 with Q_ij = y_i y_j K_ij.
    n = K.shape[0]
    for epoch in range(max_epochs):
        worst = 0.0
        for i in range(n):
            g = grad[i]
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= C:
                pg = max(g, 0.0)
            else:
                pg = g
            worst = max(worst, abs(pg))
            if pg != 0.0:
                new = min(max(alpha[i] - g / K[i, i], 0.0), C)
                delta = new - alpha[i]
                if delta != 0.0:
                    alpha[i] = new
                    s = delta * y[i]
                    for j in range(n):
                        grad[j] += s * y[j] * K[i, j]
        if worst <= tol:
            return epoch + 1, True
    return max_epochs, False


def _projected_gradient(alpha, grad, C):
    return np.where(alpha <= 0.0, np.minimum(grad, 0.0), np.where(alpha >= C, np.maximum(grad, 0.0), grad))


@numba.njit(cache=True)
def _gradient(K, y, alpha, grad):
    n = K.shape[0]
    for i in range(n):
        g = -1.0
        for j in range(n):
            g += y[i] * y[j] * K[i, j] * alpha[j]
        grad[i] = g


@numba.njit(cache=True)
def _kkt_worst(K, y, C, alpha):
    n = K.shape[0]
    worst = 0.0
    for i in range(n):
        g = -1.0
        for j in range(n):
            g += y[i] * y[j] * K[i, j] * alpha[j]
        if alpha[i] <= 0.0:
            pg = min(g, 0.0)
        elif alpha[i] >= C:
            pg = max(g, 0.0)
        else:
            pg = g
        worst = max(worst, abs(pg))
    return worst


@numba.njit(cache=True)
def _polish(K, y, C, tol, alpha, max_iter):
    # Active-set refinement of a coordinate-descent iterate. Each step solves
    # the stationarity equations exactly on the free set; a singular free
    # block has an affine set of solutions and the one nearest the current
    # point is taken (minimum-norm correction). Free variables pushed out of
    # the box are pinned to the bound they crossed; otherwise the bound
    # variable with the worst KKT violation is released. Returns the point
    # and whether it satisfies KKT to ``tol``.
    n = K.shape[0]
    out = alpha.copy()
    free = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        free[i] = 0.0 < out[i] < C
    idx = np.empty(n, dtype=np.int64)
    grad = np.empty(n)
    for _ in range(max_iter):
        nf = 0
        for i in range(n):
            if free[i]:
                idx[nf] = i
                nf += 1
        if nf > 0:
            Q = np.empty((nf, nf))
            rhs = np.empty(nf)
            for a in range(nf):
                i = idx[a]
                r = 1.0
                for j in range(n):
                    r -= y[i] * y[j] * K[i, j] * out[j]
                rhs[a] = r
                for b in range(nf):
                    Q[a, b] = y[i] * y[idx[b]] * K[i, idx[b]]
            step = np.linalg.lstsq(Q, rhs, rcond=1e-10)[0]
            pinned = False
            for a in range(nf):
                v = out[idx[a]] + step[a]
                if v <= 0.0 or v >= C:
                    out[idx[a]] = 0.0 if v <= 0.0 else C
                    free[idx[a]] = False
                    pinned = True
            if pinned:
                continue
            for a in range(nf):
                out[idx[a]] += step[a]
        _gradient(K, y, out, grad)
        worst, release = 0.0, -1
        for i in range(n):
            if free[i]:
                v = abs(grad[i])
            elif out[i] <= 0.0:
                v = -grad[i]
            else:
                v = grad[i]
            if v > worst:
                worst = v
                if not free[i]:
                    release = i
        if worst <= tol:
            return out, True
        if release < 0:
            return out, False
        free[release] = True
    return out, False


@numba.njit(cache=True)
def _solve_dual(K, y, C, tol, max_epochs, alpha):
    # Coordinate descent in growing chunks; after each chunk try active-set
    # refinement from the current iterate and stop once it satisfies KKT.
    n = K.shape[0]
    grad = np.empty(n)
    _gradient(K, y, alpha, grad)
    done = 0
    chunk = 1
    while done < max_epochs:
        epochs, converged = _dual_cd(K, y, C, tol, min(chunk, max_epochs - done), alpha, grad)
        done += epochs
        exact, ok = _polish(K, y, C, tol, alpha, n + 10)
        if ok:
            return exact, done, True
        if converged:
            return alpha, done, True
        chunk = min(2 * chunk, 2000)
    return alpha, done, False


def _check_training_set(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValidationError(f"features {X.shape} and labels {y.shape} do not match")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain non-finite values")
    if not np.all((y == 1) | (y == -1)):
        raise ValidationError("labels must be +1 or -1")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise TrainingError("training set must contain both classes")
    return X, y


@dataclass(frozen=True, eq=False)
class DualSolution:
    model: LinearModel
    alpha: np.ndarray
    epochs: int
    converged: bool


def solve_from_gram(K, X, y, config: SolverConfig, alpha0=None) -> DualSolution:
    """Solve the dual given the precomputed augmented Gram matrix of ``X``.

    Coordinate descent runs in growing chunks of epochs; after each chunk (and
    after convergence) the dual is solved exactly on the current set of free
    variables, and that solution is kept when its projected gradient is within
    tolerance. ``alpha0`` warm-starts the descent.
    """
    n = len(y)
    start = np.zeros(n) if alpha0 is None else np.clip(np.asarray(alpha0, dtype=np.float64), 0.0, config.C)
    alpha, epochs, converged = _solve_dual(np.ascontiguousarray(K), np.ascontiguousarray(y, dtype=np.float64),
                                           float(config.C), float(config.tol), int(config.max_epochs), start)
    if not converged:
        log.warning("dual coordinate descent stopped after %d epochs without reaching tol=%g",
                    epochs, config.tol)
    coef = alpha * y
    weights = coef @ X
    return DualSolution(LinearModel(weights, float(coef.sum())), alpha, epochs, converged)


def train_dual(X, y, config: SolverConfig = SolverConfig()) -> DualSolution:
    X, y = _check_training_set(X, y)
    return solve_from_gram(augmented_gram(X), X, y, config)


def train(X, y, config: SolverConfig = SolverConfig()) -> LinearModel:
    """Train on rows of ``X`` with labels ``y`` in {+1, -1}."""
    return train_dual(X, y, config).model


def decision(model: LinearModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise ValidationError(f"expected a vector of dimension {model.weights.shape[0]}, got shape {x.shape}")
    return float(x @ model.weights) + model.bias


def predict(model: LinearModel, X) -> np.ndarray:
    """Class predictions; a zero margin counts as +1."""
    return np.where(model.decision(X) >= 0.0, 1, -1)


def test_error(model: LinearModel, X, y) -> float:
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise ValidationError("test set is empty")
    if X.shape[1] != model.weights.shape[0]:
        raise ValidationError(f"expected dimension {model.weights.shape[0]}, got {X.shape[1]}")
    return float(np.mean(predict(model, X) != np.asarray(y)))


test_error.__test__ = False  # not a pytest test when imported into test modules


def primal_objective(model: LinearModel, X, y, C: float) -> float:
    margins = np.asarray(y) * model.decision(X)
    reg = 0.5 * (model.weights @ model.weights + model.bias ** 2)
    return float(reg + C * np.maximum(0.0, 1.0 - margins).sum())


def dual_objective(alpha, K, y) -> float:
    v = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * v @ K @ v)


def kkt_residual(alpha, K, y, C: float) -> float:
    """Largest absolute projected dual gradient (zero at the optimum)."""
    alpha = np.asarray(alpha)
    grad = np.asarray(y) * (K @ (alpha * y)) - 1.0
    return float(np.abs(_projected_gradient(alpha, grad, C)).max())

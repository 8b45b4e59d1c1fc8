"""Sigmoid (Platt) calibration of SVM margins on the validation set.

``p(+1 | x) = 1 / (1 + exp(A * f(x) + B))``, fitted by Newton's method with a
backtracking line search on the cross-entropy against smoothed targets
``t+ = (N+ + 1) / (N+ + 2)`` and ``t- = 1 / (N- + 2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ValidationError
from .svm import LinearModel

log = logging.getLogger(__name__)

EXP_CLAMP = 500.0
GRAD_TOL = 1e-10
MAX_NEWTON = 200


@dataclass(frozen=True)
class PlattParams:
    A: float
    B: float


@dataclass(frozen=True)
class PlattFit:
    params: PlattParams
    iterations: int
    objective_trace: np.ndarray
    degenerate: bool = False


@numba.njit(cache=True)
def _sigmoid_neg(z):
    # 1 / (1 + exp(z)), with z clamped
    z = min(max(z, -EXP_CLAMP), EXP_CLAMP)
    if z >= 0.0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


@numba.njit(cache=True)
def _softplus(z):
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@numba.njit(cache=True)
def _objective(A, B, f, t):
    total = 0.0
    for i in range(f.shape[0]):
        z = A * f[i] + B
        total += _softplus(z) - (1.0 - t[i]) * z
    return total


@numba.njit(cache=True)
def _derivatives(A, B, f, t):
    gA = gB = hAA = hAB = hBB = 0.0
    for i in range(f.shape[0]):
        p = _sigmoid_neg(A * f[i] + B)
        r = t[i] - p
        w = p * (1.0 - p)
        gA += r * f[i]
        gB += r
        hAA += w * f[i] * f[i]
        hAB += w * f[i]
        hBB += w
    return gA, gB, hAA, hAB, hBB


@numba.njit(cache=True)
def _newton(f, t, A, B, tol, max_iter):
    trace = np.empty(max_iter + 1)
    F = _objective(A, B, f, t)
    trace[0] = F
    it = 0
    while it < max_iter:
        gA, gB, hAA, hAB, hBB = _derivatives(A, B, f, t)
        done = math.sqrt(gA * gA + gB * gB) <= tol
        hAA += 1e-12
        hBB += 1e-12
        det = hAA * hBB - hAB * hAB
        dA = -(hBB * gA - hAB * gB) / det
        dB = -(hAA * gB - hAB * gA) / det
        slope = gA * dA + gB * dB
        step = 1.0
        accepted = False
        while step >= 1e-12:
            nA = A + step * dA
            nB = B + step * dB
            nF = _objective(nA, nB, f, t)
            if nF <= F + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        A, B, F = nA, nB, nF
        it += 1
        trace[it] = F
        if done:
            # one step past the tolerance settles (A, B) to rounding level
            break
    return A, B, it, trace[: it + 1]


@numba.njit(cache=True)
def _fit(f, positive, tol, max_iter):
    n = f.shape[0]
    n_pos = 0
    for i in range(n):
        if positive[i]:
            n_pos += 1
    n_neg = n - n_pos
    t = np.empty(n)
    for i in range(n):
        t[i] = (n_pos + 1.0) / (n_pos + 2.0) if positive[i] else 1.0 / (n_neg + 2.0)
    B0 = math.log((n_neg + 1.0) / (n_pos + 1.0))
    lo = hi = f[0]
    for i in range(n):
        lo = min(lo, f[i])
        hi = max(hi, f[i])
    if lo == hi:
        return 0.0, B0, 0, np.array([_objective(0.0, B0, f, t)]), True
    A, B, it, trace = _newton(f, t, 0.0, B0, tol, max_iter)
    return A, B, it, trace, False


@numba.njit(cache=True)
def _posteriors(A, B, f):
    out = np.empty(f.shape[0])
    for i in range(f.shape[0]):
        out[i] = _sigmoid_neg(A * f[i] + B)
    return out


def smoothed_targets(labels) -> np.ndarray:
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    return np.where(labels == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))


def objective_and_gradient(A: float, B: float, margins, targets) -> tuple[float, np.ndarray]:
    """Cross-entropy of the sigmoid fit and its gradient in (A, B)."""
    f = np.ascontiguousarray(margins, dtype=np.float64)
    t = np.ascontiguousarray(targets, dtype=np.float64)
    gA, gB, *_ = _derivatives(float(A), float(B), f, t)
    return float(_objective(float(A), float(B), f, t)), np.array([gA, gB])


def fit_sigmoid(margins, labels) -> PlattFit:
    f = np.ascontiguousarray(margins, dtype=np.float64)
    labels = np.asarray(labels)
    if len(f) == 0 or len(f) != len(labels):
        raise ValidationError("calibration needs a non-empty validation set with one label per margin")
    A, B, it, trace, degenerate = _fit(f, labels == 1, GRAD_TOL, MAX_NEWTON)
    if degenerate:
        log.warning("validation margins have zero variance; using the smoothed base rate")
    return PlattFit(PlattParams(float(A), float(B)), int(it), trace, bool(degenerate))


def fit_platt(model: LinearModel, X_val, y_val) -> PlattParams:
    return fit_sigmoid(model.decision(X_val), y_val).params


def sigmoid_posterior(params: PlattParams, margins) -> np.ndarray:
    """p(+1 | x) for an array of margins."""
    f = np.ascontiguousarray(margins, dtype=np.float64)
    return _posteriors(float(params.A), float(params.B), f.ravel()).reshape(f.shape)


@dataclass(frozen=True)
class CalibratedClassifier:
    model: LinearModel
    platt: PlattParams

    def prob_positive(self, X) -> np.ndarray:
        return sigmoid_posterior(self.platt, self.model.decision(X))

    def posterior(self, x, y: int) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.model.weights.shape:
            raise ValidationError(f"expected dimension {self.model.weights.shape[0]}, got shape {x.shape}")
        p = float(self.prob_positive(x[None, :])[0])
        return p if y == 1 else 1.0 - p


def calibrate(model: LinearModel, X_val, y_val) -> CalibratedClassifier:
    """Pair a freshly trained model with sigmoid parameters fitted to it."""
    return CalibratedClassifier(model, fit_platt(model, X_val, y_val))

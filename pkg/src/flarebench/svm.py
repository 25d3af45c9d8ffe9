"""Class-weighted soft-margin kernel SVM trained by sequential two-variable
dual optimization.

The solver repeatedly picks a maximal-violating pair (second-order working
set selection), updates the two dual variables analytically under the box
and equality constraints, and stops when no pair violates the KKT conditions
beyond ``kkt_tolerance``. Per-instance penalties are C * w_superclass, so
class weights enter only through the box constraint.

The full kernel matrix is cached when n <= cache threshold; beyond that rows
are recomputed on demand. Training is deterministic: pair selection breaks
ties by index, so identical (data, config) always yields the identical model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit

from .sampling import ClassWeights

KERNEL_CACHE_LIMIT = 20000
_TAU = 1e-12


class SvmError(ValueError):
    pass


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1000.0
    gamma: float = 0.01
    kernel: str = "rbf"
    kkt_tolerance: float = 1e-3
    # iteration budget is max_passes * n two-variable updates
    max_passes: int = 10
    class_weights: ClassWeights = field(default_factory=ClassWeights.unit)
    cache_limit: int = KERNEL_CACHE_LIMIT

    def __post_init__(self) -> None:
        if self.c <= 0 or self.gamma <= 0 or self.kkt_tolerance <= 0:
            raise SvmError("c, gamma and kkt_tolerance must be positive")
        if self.kernel not in ("rbf", "linear"):
            raise SvmError(f"unknown kernel {self.kernel!r}")


@dataclass(frozen=True)
class SvmModel:
    """Support vectors with their dual coefficients alpha_i * y_i and bias."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    config: SvmConfig
    iterations: int
    kkt_violation: float
    converged: bool

    def save(self, path) -> None:
        payload = {
            "kernel": self.config.kernel,
            "c": self.config.c,
            "gamma": self.config.gamma,
            "kkt_tolerance": self.config.kkt_tolerance,
            "max_passes": self.config.max_passes,
            "w_xm": self.config.class_weights.w_xm,
            "w_cbn": self.config.class_weights.w_cbn,
            "weight_mode": self.config.class_weights.mode,
            "bias": self.bias,
            "iterations": self.iterations,
            "kkt_violation": self.kkt_violation,
            "converged": self.converged,
            "dual_coef": [repr(float(v)) for v in self.dual_coef],
            "support_vectors": [
                [repr(float(v)) for v in row] for row in self.support_vectors
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SvmModel":
        with open(path) as fh:
            payload = json.load(fh)
        config = SvmConfig(
            c=payload["c"],
            gamma=payload["gamma"],
            kernel=payload["kernel"],
            kkt_tolerance=payload["kkt_tolerance"],
            max_passes=payload["max_passes"],
            class_weights=ClassWeights(
                payload["w_xm"], payload["w_cbn"], payload["weight_mode"]
            ),
        )
        return cls(
            support_vectors=np.array(
                [[float(v) for v in row] for row in payload["support_vectors"]]
            ).reshape(len(payload["dual_coef"]), -1),
            dual_coef=np.array([float(v) for v in payload["dual_coef"]]),
            bias=float(payload["bias"]),
            config=config,
            iterations=int(payload["iterations"]),
            kkt_violation=float(payload["kkt_violation"]),
            converged=bool(payload["converged"]),
        )


def kernel(x: np.ndarray, y: np.ndarray, config: SvmConfig) -> float:
    """Kernel value for a single pair of vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise SvmError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if config.kernel == "linear":
        return float(x @ y)
    d = x - y
    return float(np.exp(-config.gamma * (d @ d)))


def kernel_matrix(a: np.ndarray, b: np.ndarray, config: SvmConfig) -> np.ndarray:
    """Kernel values between the rows of ``a`` and the rows of ``b``."""
    if a.shape[1] != b.shape[1]:
        raise SvmError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if config.kernel == "linear":
        return a @ b.T
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-config.gamma * sq)


@njit(cache=True)
def _smo_cached(K, y, box, tol, max_iter):  # pragma: no cover - jitted
    """Two-variable dual ascent with a precomputed kernel matrix.

    Returns (alpha, grad, iterations, final max KKT violation). grad is the
    gradient of the minimization form 0.5 a'Qa - sum(a).
    """
    n = K.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    violation = np.inf
    while it < max_iter:
        # maximal violating pair: m = max grad_neg over the up-set,
        # M = min grad_neg over the low-set
        m = -np.inf
        i = -1
        M = np.inf
        for t in range(n):
            gn = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < box[t]) or (y[t] < 0 and alpha[t] > 0.0):
                if gn > m:
                    m = gn
                    i = t
            if (y[t] > 0 and alpha[t] > 0.0) or (y[t] < 0 and alpha[t] < box[t]):
                if gn < M:
                    M = gn
        violation = m - M
        if i < 0 or violation <= tol:
            break
        # second-order selection of the partner index
        Kii = K[i, i]
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0.0) or (y[t] < 0 and alpha[t] < box[t]):
                gn = -y[t] * grad[t]
                b = m - gn
                if b > 0.0:
                    a = Kii + K[t, t] - 2.0 * K[i, t]
                    if a <= 0.0:
                        a = _TAU
                    score = -(b * b) / a
                    if score < best:
                        best = score
                        j = t
        if j < 0:
            break
        old_i = alpha[i]
        old_j = alpha[j]
        Kij = K[i, j]
        quad = Kii + K[j, j] - 2.0 * Kij
        if quad <= 0.0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > box[i] - box[j]:
                if alpha[i] > box[i]:
                    alpha[i] = box[i]
                    alpha[j] = box[i] - diff
            else:
                if alpha[j] > box[j]:
                    alpha[j] = box[j]
                    alpha[i] = box[j] + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > box[i]:
                if alpha[i] > box[i]:
                    alpha[i] = box[i]
                    alpha[j] = total - box[i]
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > box[j]:
                if alpha[j] > box[j]:
                    alpha[j] = box[j]
                    alpha[i] = total - box[j]
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = total
        d_i = (alpha[i] - old_i) * y[i]
        d_j = (alpha[j] - old_j) * y[j]
        for t in range(n):
            grad[t] += y[t] * (K[i, t] * d_i + K[j, t] * d_j)
        it += 1
    return alpha, grad, it, violation


@njit(cache=True)
def _kernel_row(X, t, gamma, linear):  # pragma: no cover - jitted
    n, d = X.shape
    row = np.empty(n)
    if linear:
        for s in range(n):
            acc = 0.0
            for k in range(d):
                acc += X[t, k] * X[s, k]
            row[s] = acc
    else:
        for s in range(n):
            acc = 0.0
            for k in range(d):
                diff = X[t, k] - X[s, k]
                acc += diff * diff
            row[s] = np.exp(-gamma * acc)
    return row


@njit(cache=True)
def _smo_rows(X, y, box, tol, max_iter, gamma, linear):  # pragma: no cover - jitted
    """Same update scheme as _smo_cached, recomputing kernel rows on demand.

    Used when the full matrix would not fit the cache budget; two rows are
    evaluated per iteration.
    """
    n = X.shape[0]
    diag = np.empty(n)
    if linear:
        for t in range(n):
            acc = 0.0
            for k in range(X.shape[1]):
                acc += X[t, k] * X[t, k]
            diag[t] = acc
    else:
        for t in range(n):
            diag[t] = 1.0
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    violation = np.inf
    while it < max_iter:
        m = -np.inf
        i = -1
        M = np.inf
        for t in range(n):
            gn = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < box[t]) or (y[t] < 0 and alpha[t] > 0.0):
                if gn > m:
                    m = gn
                    i = t
            if (y[t] > 0 and alpha[t] > 0.0) or (y[t] < 0 and alpha[t] < box[t]):
                if gn < M:
                    M = gn
        violation = m - M
        if i < 0 or violation <= tol:
            break
        row_i = _kernel_row(X, i, gamma, linear)
        Kii = diag[i]
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0.0) or (y[t] < 0 and alpha[t] < box[t]):
                gn = -y[t] * grad[t]
                b = m - gn
                if b > 0.0:
                    a = Kii + diag[t] - 2.0 * row_i[t]
                    if a <= 0.0:
                        a = _TAU
                    score = -(b * b) / a
                    if score < best:
                        best = score
                        j = t
        if j < 0:
            break
        row_j = _kernel_row(X, j, gamma, linear)
        old_i = alpha[i]
        old_j = alpha[j]
        quad = Kii + diag[j] - 2.0 * row_i[j]
        if quad <= 0.0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > box[i] - box[j]:
                if alpha[i] > box[i]:
                    alpha[i] = box[i]
                    alpha[j] = box[i] - diff
            else:
                if alpha[j] > box[j]:
                    alpha[j] = box[j]
                    alpha[i] = box[j] + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > box[i]:
                if alpha[i] > box[i]:
                    alpha[i] = box[i]
                    alpha[j] = total - box[i]
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > box[j]:
                if alpha[j] > box[j]:
                    alpha[j] = box[j]
                    alpha[i] = total - box[j]
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = total
        d_i = (alpha[i] - old_i) * y[i]
        d_j = (alpha[j] - old_j) * y[j]
        for t in range(n):
            grad[t] += y[t] * (row_i[t] * d_i + row_j[t] * d_j)
        it += 1
    return alpha, grad, it, violation


def train(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    config: SvmConfig | None = None,
    seed: int = 0,
) -> SvmModel:
    """Solve the weighted dual and return the trained model.

    Labels are +1 (XM) / -1 (CBN). ``seed`` is accepted for interface
    uniformity with the stochastic pipeline stages; the solver itself is
    deterministic.
    """
    del seed
    config = config or SvmConfig()
    X = np.ascontiguousarray(X, dtype=float)
    yv = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != yv.size:
        raise SvmError("X must be (n, d) with one label per row")
    if not np.isfinite(X).all():
        raise SvmError("non-finite feature value in training data")
    if not np.all(np.abs(yv) == 1.0):
        raise SvmError("labels must be +1 or -1")
    if np.unique(yv).size < 2:
        raise SvmError("training data contains a single class")

    w = config.class_weights
    box = np.where(yv > 0, config.c * w.w_xm, config.c * w.w_cbn)
    max_iter = config.max_passes * X.shape[0]
    tol = config.kkt_tolerance

    if X.shape[0] <= config.cache_limit:
        K = kernel_matrix(X, X, config)
        alpha, grad, iters, violation = _smo_cached(K, yv, box, tol, max_iter)
    else:
        alpha, grad, iters, violation = _smo_rows(
            X, yv, box, tol, max_iter, config.gamma, config.kernel == "linear"
        )

    # bias from the gradient: grad_neg_t = y_t - u_t where u is the
    # biasless decision value; average over free vectors, midpoint of the
    # feasible interval otherwise
    grad_neg = -yv * grad
    free = (alpha > 0.0) & (alpha < box)
    if free.any():
        bias = float(np.mean(grad_neg[free]))
    else:
        up = (yv > 0) & (alpha < box) | (yv < 0) & (alpha > 0)
        low = (yv > 0) & (alpha > 0) | (yv < 0) & (alpha < box)
        hi = np.max(grad_neg[up]) if up.any() else 0.0
        lo = np.min(grad_neg[low]) if low.any() else 0.0
        bias = float((hi + lo) / 2.0)

    keep = alpha > 0.0
    model = SvmModel(
        support_vectors=X[keep],
        dual_coef=alpha[keep] * yv[keep],
        bias=bias,
        config=config,
        iterations=int(iters),
        kkt_violation=float(violation),
        converged=bool(violation <= tol),
    )
    _check_feasibility(alpha, yv, box)
    return model


def _check_feasibility(alpha: np.ndarray, y: np.ndarray, box: np.ndarray) -> None:
    if np.any(alpha < 0.0) or np.any(alpha > box):
        raise SvmError("solver produced an alpha outside the box constraints")
    total = float(np.sum(alpha))
    drift = abs(float(np.sum(alpha * y)))
    if total > 0 and drift > 1e-8 * total:
        raise SvmError(f"equality constraint drift {drift:.3e} exceeds tolerance")


def decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """f(x) = sum_i alpha_i y_i K(x_i, x) + b for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.support_vectors.shape[0] == 0:
        return np.full(X.shape[0], model.bias)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise SvmError(
            f"dimension mismatch: model has {model.support_vectors.shape[1]} "
            f"features, input has {X.shape[1]}"
        )
    K = kernel_matrix(X, model.support_vectors, model.config)
    return K @ model.dual_coef + model.bias


def predict(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """Class labels +1/-1; a decision value of exactly 0 goes to +1."""
    f = decision_values(model, X)
    return np.where(f >= 0.0, 1, -1)


def dual_objective(model_or_alpha, X=None, y=None, config=None) -> float:
    """Dual objective sum(a) - 0.5 a'Qa, for audits and oracle comparisons."""
    if isinstance(model_or_alpha, SvmModel):
        model = model_or_alpha
        coef = model.dual_coef  # alpha_i y_i
        K = kernel_matrix(model.support_vectors, model.support_vectors, model.config)
        alpha_sum = float(np.sum(np.abs(coef)))
        return alpha_sum - 0.5 * float(coef @ K @ coef)
    alpha = np.asarray(model_or_alpha, dtype=float)
    yv = np.asarray(y, dtype=float)
    K = kernel_matrix(X, X, config)
    coef = alpha * yv
    return float(np.sum(alpha)) - 0.5 * float(coef @ K @ coef)

"""Binary logistic regression with an L2 penalty, fitted by damped Newton steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, TrainingError


@dataclass(frozen=True, eq=False)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    input_names: tuple[str, ...]
    meta: dict | None = None

    def predict(self, inputs) -> np.ndarray:
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != len(self.coefficients):
            raise ContractError(f"expected {len(self.coefficients)} inputs, got {x.shape[1]}")
        return _sigmoid(x @ self.coefficients + self.intercept)

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "input_names": list(self.input_names),
            "meta": self.meta or {},
        }

    @classmethod
    def from_dict(cls, d) -> "LogisticModel":
        return cls(np.array(d["coefficients"], dtype=np.float64), float(d["intercept"]),
                   tuple(d["input_names"]), dict(d.get("meta", {})))


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_objective(beta, x, y, w, l2):
    """Weighted mean negative log-likelihood plus ``l2/2 * ||coef||^2``.

    ``beta`` is ``[intercept, coef...]``; the intercept is not penalized.
    """
    z = beta[0] + x @ beta[1:]
    # -log(sigmoid(z)) = logaddexp(0, -z); -log(1 - sigmoid(z)) = logaddexp(0, z)
    nll = np.where(y == 1, np.logaddexp(0.0, -z), np.logaddexp(0.0, z))
    return float(np.dot(w, nll) / w.sum() + 0.5 * l2 * np.dot(beta[1:], beta[1:]))


def logistic_gradient(beta, x, y, w, l2):
    z = beta[0] + x @ beta[1:]
    r = w * (_sigmoid(z) - y) / w.sum()
    g = np.empty_like(beta)
    g[0] = r.sum()
    g[1:] = x.T @ r + l2 * beta[1:]
    return g


def _hessian(beta, x, w, l2):
    z = beta[0] + x @ beta[1:]
    p = _sigmoid(z)
    s = w * p * (1 - p) / w.sum()
    xa = np.column_stack([np.ones(len(x)), x])
    h = xa.T @ (xa * s[:, None])
    h[1:, 1:] += l2 * np.eye(x.shape[1])
    return h


def train_logistic(inputs, labels, weights=None, l2: float = 1e-4, input_names=None,
                   tol: float = 1e-6, max_iter: int = 200) -> LogisticModel:
    """Maximize the penalized weighted log-likelihood.

    Stops when the gradient's max-norm is at most ``tol``. The penalty keeps
    the optimum finite even for perfectly separable inputs.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=np.float64)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (np.isfinite(x).all() and np.isfinite(w).all()):
        raise ContractError("logistic inputs and weights must be finite")
    if x.shape[0] != len(y) or len(w) != len(y):
        raise ContractError("inputs, labels and weights must have the same length")
    if not (w[y == 1].sum() > 0 and w[y == 0].sum() > 0):
        raise TrainingError("logistic regression needs both classes")
    if l2 <= 0:
        raise ContractError("l2 penalty must be positive")
    names = tuple(input_names) if input_names is not None else tuple(f"x{i}" for i in range(x.shape[1]))

    beta = np.zeros(x.shape[1] + 1)
    pos = w[y == 1].sum() / w.sum()
    beta[0] = np.log(pos / (1 - pos))
    f = logistic_objective(beta, x, y, w, l2)
    for it in range(max_iter):
        g = logistic_gradient(beta, x, y, w, l2)
        if np.max(np.abs(g)) <= tol:
            break
        h = _hessian(beta, x, w, l2)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta - t * step
            fc = logistic_objective(cand, x, y, w, l2)
            if fc <= f - 1e-4 * t * np.dot(g, step) or t < 1e-12:
                break
            t *= 0.5
        beta, f = cand, fc
    else:
        g = logistic_gradient(beta, x, y, w, l2)
        if np.max(np.abs(g)) > tol:
            raise TrainingError(f"logistic fit did not converge (|grad|={np.max(np.abs(g)):.2e})")
    grad_norm = float(np.max(np.abs(logistic_gradient(beta, x, y, w, l2))))
    return LogisticModel(beta[1:].copy(), float(beta[0]), names,
                         {"l2": l2, "iterations": it, "grad_max_norm": grad_norm})

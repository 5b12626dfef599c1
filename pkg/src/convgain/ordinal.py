"""Proportional-odds cumulative-logit regression fitted by maximum likelihood."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

N_LEVELS = 4  # ordinal labels 1..4, three thresholds


@dataclass(frozen=True)
class OrdinalModelFit:
    label: str
    thresholds: tuple[float, float, float]
    coefficients: dict[str, float]
    log_likelihood: float
    aic: float
    converged: bool
    gradient_norm: float
    diagnostics: str = ""


def _expand(params: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterized thresholds a1, a1+e^a2, a1+e^a3-style cumulative sums
    keep theta strictly increasing for any unconstrained params."""
    a = params[: N_LEVELS - 1]
    theta = np.empty(N_LEVELS - 1)
    theta[0] = a[0]
    theta[1] = a[0] + math.exp(a[1])
    theta[2] = a[0] + math.exp(a[1]) + math.exp(a[2])
    beta = params[N_LEVELS - 1 :]
    return theta, beta


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _nll_and_grad(
    params: np.ndarray, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    n, p = X.shape
    theta, beta = _expand(params, p)
    eta = X @ beta
    # cumulative probabilities gamma_c = P(y <= c) = sigmoid(theta_c - eta)
    gamma = np.ones((n, N_LEVELS))
    sig = np.empty((n, N_LEVELS - 1))
    for c in range(N_LEVELS - 1):
        sig[:, c] = _sigmoid(theta[c] - eta)
        gamma[:, c] = sig[:, c]
    gamma_prev = np.hstack([np.zeros((n, 1)), gamma[:, : N_LEVELS - 1]])
    probs = gamma - gamma_prev
    rows = np.arange(n)
    pk = np.clip(probs[rows, y - 1], 1e-300, None)
    nll = -float(np.log(pk).sum())

    # d p_k / d theta_c: density terms f_c = sig_c (1 - sig_c)
    f = sig * (1.0 - sig)
    grad_theta = np.zeros(N_LEVELS - 1)
    grad_eta = np.zeros(n)
    for c in range(N_LEVELS - 1):
        upper = y == (c + 1)  # theta_c is the upper cut of category c+1
        lower = y == (c + 2)  # and the lower cut of category c+2
        contrib = np.zeros(n)
        contrib[upper] = f[upper, c] / pk[upper]
        contrib[lower] = -f[lower, c] / pk[lower]
        grad_theta[c] = -float(contrib.sum())
        grad_eta += contrib  # d(theta_c - eta)/d eta = -1 flips the sign back
    grad_beta = X.T @ grad_eta

    # chain rule back to the unconstrained a-parameters
    grad_a = np.empty(N_LEVELS - 1)
    grad_a[0] = grad_theta.sum()
    grad_a[1] = (grad_theta[1] + grad_theta[2]) * math.exp(params[1])
    grad_a[2] = grad_theta[2] * math.exp(params[2])
    return nll, np.concatenate([grad_a, grad_beta])


def _newton_polish(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, grad_tol: float, max_iter: int = 60
) -> tuple[np.ndarray, float]:
    """Newton refinement (finite-difference Hessian of the analytic gradient)
    to push the gradient norm below the convergence tolerance."""

    def grad(v: np.ndarray) -> np.ndarray:
        return _nll_and_grad(v, X, y)[1]

    x = params.copy()
    g = grad(x)
    best_x, best_norm = x.copy(), float(np.linalg.norm(g))
    dim = x.size
    for _ in range(max_iter):
        if best_norm < grad_tol:
            break
        h = 1e-6
        hess = np.empty((dim, dim))
        for j in range(dim):
            step = np.zeros(dim)
            step[j] = h
            hess[:, j] = (grad(x + step) - grad(x - step)) / (2 * h)
        hess = (hess + hess.T) / 2.0
        try:
            delta = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            break
        trial = x - delta
        g_trial = grad(trial)
        norm = float(np.linalg.norm(g_trial))
        if not np.isfinite(norm):
            break
        x, g = trial, g_trial
        if norm < best_norm:
            best_x, best_norm = x.copy(), norm
        else:
            break
    return best_x, best_norm


def fit_ordinal(
    labels: list[int],
    predictors: dict[str, list[float]],
    label: str,
    grad_tol: float = 1e-8,
) -> OrdinalModelFit:
    """Fit P(y <= c) = sigmoid(theta_c - x.beta) by BFGS with analytic gradient.

    Predictors are z-scored internally; labels must be in 1..4 with n >= 20.
    """
    y = np.asarray(labels, dtype=int)
    if y.size < 20:
        raise ValueError("need at least 20 observations")
    if not np.all((y >= 1) & (y <= N_LEVELS)):
        raise ValueError("labels must lie in 1..4")
    names = sorted(predictors)
    cols = []
    for name in names:
        x = np.asarray(predictors[name], dtype=float)
        if x.size != y.size:
            raise ValueError(f"predictor {name!r} length mismatch")
        std = x.std()
        cols.append((x - x.mean()) / std if std > 0 else np.zeros_like(x))
    X = np.column_stack(cols) if cols else np.zeros((y.size, 0))
    p = X.shape[1]

    # start from the intercept-only closed form
    freqs = np.array([(y <= c + 1).mean() for c in range(N_LEVELS - 1)])
    freqs = np.clip(freqs, 1e-6, 1 - 1e-6)
    theta0 = np.log(freqs / (1 - freqs))
    a0 = np.array(
        [
            theta0[0],
            math.log(max(theta0[1] - theta0[0], 1e-6)),
            math.log(max(theta0[2] - theta0[1], 1e-6)),
        ]
    )
    x0 = np.concatenate([a0, np.zeros(p)])
    result = minimize(
        _nll_and_grad,
        x0,
        args=(X, y),
        jac=True,
        method="BFGS",
        options={"gtol": grad_tol, "maxiter": 2000},
    )
    params, gnorm = _newton_polish(result.x, X, y, grad_tol)
    nll, _ = _nll_and_grad(params, X, y)
    theta, beta = _expand(params, p)
    loglik = -nll
    k = (N_LEVELS - 1) + p
    aic = 2 * k - 2 * loglik
    converged = gnorm < grad_tol
    diagnostics = "" if converged else f"gradient norm {gnorm:.3e} above tolerance"
    return OrdinalModelFit(
        label=label,
        thresholds=tuple(float(t) for t in theta),
        coefficients={name: float(b) for name, b in zip(names, beta)},
        log_likelihood=loglik,
        aic=aic,
        converged=converged,
        gradient_norm=gnorm,
        diagnostics=diagnostics,
    )


def compare_models(fits: list[OrdinalModelFit]) -> list[tuple[str, float, float]]:
    """(label, AIC, delta-AIC vs best) sorted best first."""
    if not fits:
        return []
    best = min(fit.aic for fit in fits)
    return sorted(
        ((fit.label, fit.aic, fit.aic - best) for fit in fits), key=lambda t: t[1]
    )

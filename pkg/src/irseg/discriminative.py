"""Primal linear discriminative models: RR, SVC, GP.

All three operate on explicitly expanded feature matrices ``Phi`` (see
:mod:`irseg.expand`) and share the sigmoid prediction ``sigma(Phi w)``:

* ``rr_fit``  — ridge regression, closed form via an SPD factorization.
* ``svc_fit`` — squared-hinge SVM, ``1/2 |w|^2 + C sum max(0, 1-y m)^2``,
  solved by a damped Newton iteration on the active set (the objective is
  convex and continuously differentiable, so this converges quickly).
* ``gp_fit``  — Bayesian logistic regression with a Gaussian prior
  ``N(0, gamma I)``; the Laplace approximation keeps the posterior mode and
  the inverse Hessian ``Sigma_n``.  ``gp_predict`` integrates the sigmoid
  over the predictive Gaussian with the standard probit approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .errors import DataError, NumericalError, UsageError


@dataclass(frozen=True)
class LinearModel:
    kind: str                      # "rr" | "svc" | "gp"
    weights: np.ndarray            # (P,)
    hyper: dict
    sigma_n: np.ndarray | None = None   # (P, P); GP only

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]


def _check_design(phi, y=None):
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2:
        raise UsageError(f"design matrix must be 2-D, got shape {phi.shape}")
    if y is not None:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (phi.shape[0],):
            raise DataError(f"targets shape {y.shape} does not match "
                            f"{phi.shape[0]} rows")
        return phi, y
    return phi


# ---------------------------------------------------------------------------
# ridge regression

def rr_fit(phi, y, gamma: float) -> LinearModel:
    """Solve ``(Phi'Phi + gamma I) w = Phi'y``.

    ``gamma = 0`` is allowed when the normal matrix is nonsingular; a
    singular system raises :class:`NumericalError`.
    """
    phi, y = _check_design(phi, y)
    if gamma < 0:
        raise UsageError("gamma must be >= 0")
    p = phi.shape[1]
    normal = phi.T @ phi + gamma * np.eye(p)
    try:
        factor = cho_factor(normal)
    except LinAlgError as exc:
        raise NumericalError("ridge system is singular "
                             "(increase gamma or drop columns)") from exc
    w = cho_solve(factor, phi.T @ y)
    return LinearModel("rr", w, {"gamma": float(gamma)})


# ---------------------------------------------------------------------------
# squared-hinge SVC

def svc_objective(phi: np.ndarray, y: np.ndarray, C: float,
                  w: np.ndarray) -> float:
    slack = np.maximum(0.0, 1.0 - y * (phi @ w))
    return 0.5 * float(w @ w) + C * float(slack @ slack)


def svc_fit(phi, y, C: float, *, tol: float = 1e-10,
            max_iter: int = 100) -> LinearModel:
    """Minimize the squared-hinge objective with damped Newton steps.

    ``y`` must be in ``{-1, +1}``.  Convergence is declared when the gradient
    norm falls below ``tol`` relative to its value at the starting point, so
    the stopping rule is invariant to the overall scale of the features.
    """
    phi, y = _check_design(phi, y)
    if not np.isin(y, (-1.0, 1.0)).all():
        raise DataError("SVC targets must be -1 or +1")
    if C < 0:
        raise UsageError("C must be >= 0")
    n, p = phi.shape
    w = np.zeros(p)
    obj = svc_objective(phi, y, C, w)
    gref = None
    for _ in range(max_iter):
        margin = y * (phi @ w)
        active = margin < 1.0
        phi_a = phi[active]
        grad = w - 2.0 * C * phi_a.T @ (y[active] * (1.0 - margin[active]))
        gnorm = np.linalg.norm(grad)
        if gref is None:
            gref = gnorm
        if gnorm <= tol * max(1.0, gref):
            return LinearModel("svc", w, {"C": float(C)})
        hess = np.eye(p) + 2.0 * C * phi_a.T @ phi_a
        step = cho_solve(cho_factor(hess), -grad)
        dd = float(grad @ step)  # directional derivative, < 0 downhill
        t = 1.0
        for _ in range(60):
            cand = w + t * step
            cand_obj = svc_objective(phi, y, C, cand)
            if cand_obj <= obj + 1e-4 * t * dd:
                break
            t *= 0.5
        else:
            # flat to machine precision: accept the current iterate
            return LinearModel("svc", w, {"C": float(C)})
        stalled = obj - cand_obj <= 1e-14 * (1.0 + abs(obj))
        w, obj = cand, cand_obj
        if stalled:
            # progress below float64 resolution: this is the minimizer
            return LinearModel("svc", w, {"C": float(C)})
    raise NumericalError(f"SVC Newton did not converge in {max_iter} iterations "
                         f"(|grad| = {gnorm:.3e})")


# ---------------------------------------------------------------------------
# Bayesian logistic regression with Laplace approximation

def _log_posterior(phi, y, inv_gamma, w):
    m = phi @ w
    # y*m - log(1 + e^m), computed stably
    ll = float((y * m - np.logaddexp(0.0, m)).sum())
    return ll - 0.5 * inv_gamma * float(w @ w)


def gp_fit(phi, y, gamma: float, *, tol: float = 1e-10,
           max_iter: int = 100) -> LinearModel:
    """Find the posterior mode and Laplace covariance.

    ``y`` must be in ``{0, 1}``; ``gamma`` is the prior variance (> 0).
    With no data the prior itself is returned.  ``Sigma_n`` is the inverse of
    ``I/gamma + Phi' R Phi`` with ``R = diag(p(1-p))`` at the mode.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2:
        raise UsageError(f"design matrix must be 2-D, got shape {phi.shape}")
    if gamma <= 0:
        raise UsageError("prior variance gamma must be positive")
    n, p = phi.shape
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise DataError(f"targets shape {y.shape} does not match {n} rows")
    if n and not np.isin(y, (0.0, 1.0)).all():
        raise DataError("GP targets must be 0 or 1")
    inv_gamma = 1.0 / gamma
    w = np.zeros(p)
    if n == 0:
        return LinearModel("gp", w, {"gamma": float(gamma)},
                           sigma_n=gamma * np.eye(p))
    objective = _log_posterior(phi, y, inv_gamma, w)
    gref = None
    for _ in range(max_iter):
        pred = expit(phi @ w)
        grad = phi.T @ (y - pred) - inv_gamma * w
        gnorm = np.linalg.norm(grad)
        if gref is None:
            gref = gnorm
        if gnorm <= tol * max(1.0, gref):
            break
        hess = inv_gamma * np.eye(p) + (phi * (pred * (1.0 - pred))[:, None]).T @ phi
        step = cho_solve(cho_factor(hess), grad)
        dd = float(grad @ step)  # directional derivative, > 0 uphill
        t = 1.0
        for _ in range(60):
            cand = w + t * step
            cand_obj = _log_posterior(phi, y, inv_gamma, cand)
            if cand_obj >= objective + 1e-4 * t * dd:
                break
            t *= 0.5
        else:
            break
        stalled = cand_obj - objective <= 1e-14 * (1.0 + abs(objective))
        w, objective = cand, cand_obj
        if stalled:
            break
    else:
        raise NumericalError(
            f"posterior-mode Newton did not converge in {max_iter} iterations")
    pred = expit(phi @ w)
    hess = inv_gamma * np.eye(p) + (phi * (pred * (1.0 - pred))[:, None]).T @ phi
    sigma_n = cho_solve(cho_factor(hess), np.eye(p))
    sigma_n = 0.5 * (sigma_n + sigma_n.T)
    return LinearModel("gp", w, {"gamma": float(gamma)}, sigma_n=sigma_n)


def gp_gradient(phi, y, gamma: float, w) -> np.ndarray:
    """Analytic log-posterior gradient (exposed for verification)."""
    phi, y = _check_design(phi, y)
    w = np.asarray(w, dtype=np.float64)
    return phi.T @ (y - expit(phi @ w)) - w / gamma


# ---------------------------------------------------------------------------
# prediction

def predict_sigmoid(model: LinearModel, phi) -> np.ndarray:
    """``sigma(Phi w)`` for RR and SVC scores."""
    phi = _check_design(phi)
    if phi.shape[1] != model.n_features:
        raise DataError(f"design has {phi.shape[1]} columns, "
                        f"model expects {model.n_features}")
    return expit(phi @ model.weights)


def probit_sigmoid(mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """Approximate ``E[sigma(a)]`` for ``a ~ N(mu, var)``.

    Uses the probit matching ``kappa = (1 + pi var / 8)^{-1/2}`` and returns
    ``sigma(kappa mu)``.
    """
    kappa = 1.0 / np.sqrt(1.0 + np.pi * np.asarray(var) / 8.0)
    return expit(kappa * np.asarray(mu))


def gp_predict(model: LinearModel, phi) -> np.ndarray:
    """Posterior-averaged class probability under the Laplace posterior."""
    phi = _check_design(phi)
    if model.sigma_n is None:
        raise UsageError("model has no posterior covariance; not a GP fit")
    if phi.shape[1] != model.n_features:
        raise DataError(f"design has {phi.shape[1]} columns, "
                        f"model expects {model.n_features}")
    mu = phi @ model.weights
    var = np.einsum("np,pq,nq->n", phi, model.sigma_n, phi)
    return probit_sigmoid(mu, np.maximum(var, 0.0))

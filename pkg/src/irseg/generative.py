"""Generative per-pixel classifiers: GDA, naive Bayes, GMM, k-means.

All four models score pixels independently.  The Gaussian models share one
log-domain scoring path (Cholesky factorization, log-sum-exp normalization)
so posteriors stay finite even for strongly separated classes.  The
unsupervised models (GMM, k-means) are deterministic given their seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.special import logsumexp, softmax

from .errors import DataError, NumericalError, UsageError

log = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError(f"expected a non-empty N x d matrix, got shape {X.shape}")
    return X


def _class_indices(y, n_rows: int) -> tuple[np.ndarray, int]:
    y = np.asarray(y)
    if y.shape != (n_rows,):
        raise DataError(f"labels shape {y.shape} does not match {n_rows} rows")
    y = y.astype(np.int64)
    classes = np.unique(y)
    k = len(classes)
    if k < 2:
        raise DataError("training labels contain a single class")
    if not np.array_equal(classes, np.arange(k)):
        raise DataError(f"labels must be 0..K-1, got classes {classes.tolist()}")
    return y, k


def gaussian_scores(means: np.ndarray, covariances: np.ndarray,
                    X: np.ndarray) -> np.ndarray:
    """Per-class ``-0.5 log|Sigma_k| - 0.5 (x-mu)^T Sigma_k^-1 (x-mu)``.

    This is the Gaussian log-density without its ``2 pi`` constant; the
    constant cancels in posterior normalization and is omitted from the
    lattice energies as well.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    k = means.shape[0]
    out = np.empty((n, k), dtype=np.float64)
    for j in range(k):
        try:
            chol = cholesky(covariances[j], lower=True)
        except LinAlgError as exc:
            raise NumericalError(
                f"covariance of class {j} is not positive definite") from exc
        sol = solve_triangular(chol, (X - means[j]).T, lower=True)
        maha = np.einsum("ij,ij->j", sol, sol)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        out[:, j] = -0.5 * logdet - 0.5 * maha
    return out


@dataclass(frozen=True)
class GaussianClassModel:
    """Class-conditional Gaussians with priors.

    ``kind`` records which fit produced the model ("gda", "nbc", "gmm");
    naive Bayes simply stores diagonal covariances.
    """

    means: np.ndarray           # (K, d)
    covariances: np.ndarray     # (K, d, d)
    priors: np.ndarray          # (K,)
    kind: str
    gamma_cov: float = 0.0

    def __post_init__(self):
        k, d = self.means.shape
        if self.covariances.shape != (k, d, d):
            raise UsageError("covariance stack shape mismatch")
        if self.priors.shape != (k,) or not np.isclose(self.priors.sum(), 1.0):
            raise UsageError("priors must be a length-K simplex vector")

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def class_scores(self, X: np.ndarray) -> np.ndarray:
        return gaussian_scores(self.means, self.covariances, X)

    def posterior(self, X: np.ndarray) -> np.ndarray:
        """``p(class | x)`` rows, each summing to one."""
        scores = self.class_scores(X) + np.log(self.priors)
        return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))

    def log_likelihood(self, X: np.ndarray) -> float:
        """Total mixture log-likelihood (with the 2 pi constant)."""
        d = self.n_features
        scores = self.class_scores(X) - 0.5 * d * _LOG_2PI + np.log(self.priors)
        return float(logsumexp(scores, axis=1).sum())

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.posterior(X), axis=1)


# ---------------------------------------------------------------------------
# supervised fits

def fit_gda(X, y, gamma_cov: float = 0.0) -> GaussianClassModel:
    """Gaussian discriminant analysis with uniform priors.

    Per-class sample mean and unbiased covariance, plus ``gamma_cov`` on the
    diagonal.  Requires every class to contribute at least two samples.
    """
    X = _as_matrix(X)
    y, k = _class_indices(y, X.shape[0])
    if gamma_cov < 0:
        raise UsageError("gamma_cov must be >= 0")
    d = X.shape[1]
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    for j in range(k):
        members = X[y == j]
        if members.shape[0] < 2:
            raise DataError(f"class {j} has fewer than 2 samples")
        means[j] = members.mean(axis=0)
        diff = members - means[j]
        covs[j] = diff.T @ diff / (members.shape[0] - 1)
        covs[j][np.diag_indices(d)] += gamma_cov
    priors = np.full(k, 1.0 / k)
    return GaussianClassModel(means, covs, priors, "gda", gamma_cov)


def fit_nbc(X, y, variance_floor_scale: float = 1e-9) -> GaussianClassModel:
    """Naive Bayes: diagonal per-class covariances, uniform priors.

    Per-class feature variances are floored at
    ``variance_floor_scale * Var(feature)`` (pooled over all samples) so a
    feature that is constant within one class cannot collapse the density.
    """
    X = _as_matrix(X)
    y, k = _class_indices(y, X.shape[0])
    d = X.shape[1]
    floor = variance_floor_scale * X.var(axis=0)
    means = np.empty((k, d))
    covs = np.zeros((k, d, d))
    for j in range(k):
        members = X[y == j]
        if members.shape[0] < 2:
            raise DataError(f"class {j} has fewer than 2 samples")
        means[j] = members.mean(axis=0)
        var = members.var(axis=0, ddof=1)
        covs[j][np.diag_indices(d)] = np.maximum(var, floor)
    priors = np.full(k, 1.0 / k)
    return GaussianClassModel(means, covs, priors, "nbc")


# ---------------------------------------------------------------------------
# Gaussian mixture via EM

@dataclass(frozen=True)
class GmmFit:
    model: GaussianClassModel
    log_likelihoods: tuple[float, ...]
    n_iter: int
    converged: bool


def _kmeans_pp_seed(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centers proportionally to distance."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:  # all points identical: duplicate the point
            centers[j:] = centers[0]
            break
        centers[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
    return centers


def fit_gmm(X, n_components: int = 2, gamma_cov: float = 0.0, *,
            seed: int = 0, max_iter: int = 200, tol: float = 1e-8) -> GmmFit:
    """Fit a Gaussian mixture by EM.

    The M-step uses the responsibility-weighted (biased) covariance
    ``sum_i r_ik x_i x_i^T / N_k - mu_k mu_k^T`` plus ``gamma_cov`` on the
    diagonal.  Components whose responsibility mass collapses are reseeded
    from a random sample.  Deterministic for a fixed seed.
    """
    X = _as_matrix(X)
    n, d = X.shape
    k = n_components
    if k < 1:
        raise UsageError("n_components must be >= 1")
    if gamma_cov < 0:
        raise UsageError("gamma_cov must be >= 0")
    rng = np.random.default_rng(seed)

    pooled = np.cov(X.T, ddof=0).reshape(d, d) + 1e-12 * np.eye(d)
    means = _kmeans_pp_seed(X, k, rng)
    covs = np.repeat(pooled[None], k, axis=0).copy()
    for j in range(k):
        covs[j][np.diag_indices(d)] += gamma_cov
    priors = np.full(k, 1.0 / k)

    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # E-step
        scores = (gaussian_scores(means, covs, X) - 0.5 * d * _LOG_2PI
                  + np.log(priors))
        norm = logsumexp(scores, axis=1, keepdims=True)
        resp = np.exp(scores - norm)
        history.append(float(norm.sum()))

        # M-step
        mass = resp.sum(axis=0)
        collapsed = mass < 1e-8 * n
        for j in np.flatnonzero(collapsed):
            log.warning("GMM component %d collapsed; reseeding", j)
            means[j] = X[rng.integers(n)]
            covs[j] = pooled.copy()
            covs[j][np.diag_indices(d)] += gamma_cov
            priors[j] = 1.0 / k
            mass[j] = np.nan
        if collapsed.any():
            priors /= priors.sum()
            continue
        priors = mass / n
        means = (resp.T @ X) / mass[:, None]
        for j in range(k):
            second = (resp[:, j][:, None] * X).T @ X / mass[j]
            cov = second - np.outer(means[j], means[j])
            cov = 0.5 * (cov + cov.T)
            cov[np.diag_indices(d)] += gamma_cov
            covs[j] = cov

        if len(history) >= 2 and history[-1] - history[-2] < tol:
            converged = True
            break

    model = GaussianClassModel(means, covs, priors, "gmm", gamma_cov)
    # final log-likelihood under the converged parameters
    history.append(model.log_likelihood(X))
    return GmmFit(model, tuple(history), it, converged)


# ---------------------------------------------------------------------------
# k-means

@dataclass(frozen=True)
class KMeansModel:
    """Lloyd's algorithm on per-feature standardized inputs.

    ``feature_mean``/``feature_scale`` reproduce the training normalization
    ``(x - mean) / scale`` where the scale is the feature *variance* (the
    normalization the segmentation stack historically used; it differs from
    z-scoring but k-means only needs a consistent metric).
    """

    centers: np.ndarray        # (K, d) in standardized space
    feature_mean: np.ndarray   # (d,)
    feature_scale: np.ndarray  # (d,)

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=np.float64))
                - self.feature_mean) / self.feature_scale

    def distances_sq(self, X: np.ndarray) -> np.ndarray:
        Z = self._standardize(X)
        diff = Z[:, None, :] - self.centers[None, :, :]
        return np.einsum("nkd,nkd->nk", diff, diff)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Nearest-center assignment; ties go to the lower cluster index."""
        return np.argmin(self.distances_sq(X), axis=1)

    def posterior(self, X: np.ndarray) -> np.ndarray:
        """Soft assignments from distances.

        For two clusters: ``p_k = 1 - d_k^2 / (d_1^2 + d_2^2)``, which sums
        to one.  For more clusters that identity no longer normalizes, so a
        softmax over negative squared distances is used instead.  A pixel
        coinciding with every center gets a uniform posterior.
        """
        d2 = self.distances_sq(X)
        if self.n_clusters == 2:
            total = d2.sum(axis=1, keepdims=True)
            flat = total[:, 0] <= 0
            with np.errstate(invalid="ignore", divide="ignore"):
                post = 1.0 - d2 / total
            post[flat] = 0.5
            return post
        return softmax(-d2, axis=1)


def fit_kmeans(X, n_clusters: int = 2, *, seed: int = 0,
               max_iter: int = 300) -> KMeansModel:
    """Fit k-means with k-means++ seeding; deterministic for a fixed seed.

    Empty clusters are reseeded to the sample farthest from its assigned
    center.  Stops when assignments no longer change.
    """
    X = _as_matrix(X)
    n, d = X.shape
    k = n_clusters
    if k < 1 or k > n:
        raise UsageError(f"n_clusters must be in [1, {n}]")
    mean = X.mean(axis=0)
    scale = np.maximum(X.var(axis=0), 1e-12)
    Z = (X - mean) / scale

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_seed(Z, k, rng)
    assign = np.full(n, -1)
    for _ in range(max_iter):
        diff = Z[:, None, :] - centers[None, :, :]
        d2 = np.einsum("nkd,nkd->nk", diff, diff)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = Z[assign == j]
            if members.shape[0] == 0:
                farthest = np.argmax(d2[np.arange(n), assign])
                centers[j] = Z[farthest]
                assign[farthest] = j
            else:
                centers[j] = members.mean(axis=0)
    return KMeansModel(centers, mean, scale)

"""Binary Markov random field segmentation on the pixel lattice.

Labels live on spins ``{-1, +1}`` (clear / cloud).  The configuration energy
being *maximized* is::

    E(y) = sum_i [ -1/2 log|S_k| - 1/2 (x_i-mu_k)' S_k^-1 (x_i-mu_k) ]
         + beta * sum_{cliques (i,j)} y_i y_j

with each pairwise clique counted once.  The per-pixel conditional energy
adds the full neighbor sum ``psi_i = y_i * beta * sum_{j in N(i)} y_j``, so a
raster-order argmax relabeling (:func:`map_sweep`) is exact coordinate ascent
on ``E`` and terminates at a single-flip local maximum.

Cliques of order 1 couple the 4-neighborhood, order 2 the 8-neighborhood.
Posterior maps are the per-pixel softmax of the two conditional energies at
the final labeling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import softmax

from .errors import DataError, NumericalError, UsageError
from .generative import _as_matrix, _class_indices, gaussian_scores

log = logging.getLogger(__name__)

_CLIQUE_OFFSETS = {
    1: ((-1, 0), (0, -1), (0, 1), (1, 0)),
    2: ((-1, 0), (0, -1), (0, 1), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1)),
}


@dataclass(frozen=True)
class MrfModel:
    """Class-conditional Gaussians plus the clique coupling strength."""

    means: np.ndarray         # (2, d)
    covariances: np.ndarray   # (2, d, d)
    beta: float
    clique_order: int = 1
    gamma_cov: float = 0.0

    def __post_init__(self):
        if self.means.shape[0] != 2:
            raise UsageError("MRF is binary: exactly two class models required")
        if self.beta < 0:
            raise UsageError("beta must be >= 0")
        if self.clique_order not in _CLIQUE_OFFSETS:
            raise UsageError("clique_order must be 1 (4-neighbor) or 2 (8-neighbor)")

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        return _CLIQUE_OFFSETS[self.clique_order]

    def likelihoods(self, image_features: np.ndarray) -> np.ndarray:
        """Per-pixel class log-likelihood grid, shape (rows, cols, 2)."""
        img = np.asarray(image_features, dtype=np.float64)
        if img.ndim != 3:
            raise UsageError("image features must have shape (rows, cols, d)")
        rows, cols, d = img.shape
        flat = gaussian_scores(self.means, self.covariances,
                               img.reshape(-1, d))
        return flat.reshape(rows, cols, 2)


def fit_supervised(X, y, beta: float, clique_order: int = 1,
                   gamma_cov: float = 0.0) -> MrfModel:
    """Pooled per-class mean and unbiased covariance from labeled pixels.

    ``y`` uses {0, 1}; 0 maps to spin -1 (clear), 1 to +1 (cloud).
    """
    X = _as_matrix(X)
    y, k = _class_indices(y, X.shape[0])
    if k != 2:
        raise DataError("supervised MRF requires exactly two classes")
    if gamma_cov < 0:
        raise UsageError("gamma_cov must be >= 0")
    d = X.shape[1]
    means = np.empty((2, d))
    covs = np.empty((2, d, d))
    for j in range(2):
        members = X[y == j]
        if members.shape[0] < 2:
            raise DataError(f"class {j} has fewer than 2 samples")
        means[j] = members.mean(axis=0)
        diff = members - means[j]
        covs[j] = diff.T @ diff / (members.shape[0] - 1)
        covs[j][np.diag_indices(d)] += gamma_cov
    return MrfModel(means, covs, beta, clique_order, gamma_cov)


# ---------------------------------------------------------------------------
# lattice state

class LatticeState:
    """Mutable spin lattice with cached likelihoods and neighbor sums."""

    def __init__(self, spins: np.ndarray, likelihoods: np.ndarray,
                 beta: float, offsets):
        self.spins = spins.astype(np.int8)
        self.lik = np.asarray(likelihoods, dtype=np.float64)
        if self.lik.shape != self.spins.shape + (2,):
            raise UsageError("likelihood grid shape mismatch")
        self.beta = float(beta)
        self.offsets = tuple(offsets)
        self.nbsum = self._neighbor_sums()

    def _neighbor_sums(self) -> np.ndarray:
        s = self.spins.astype(np.float64)
        total = np.zeros_like(s)
        for dr, dc in self.offsets:
            shifted = np.zeros_like(s)
            src = s[max(0, -dr): s.shape[0] - max(0, dr),
                    max(0, -dc): s.shape[1] - max(0, dc)]
            shifted[max(0, dr): s.shape[0] + min(0, dr),
                    max(0, dc): s.shape[1] + min(0, dc)] = src
            total += shifted
        return total

    def pixel_energies(self) -> np.ndarray:
        """Conditional energies of both spin choices, shape (rows, cols, 2).

        Index 0 is spin -1 (clear), index 1 is spin +1 (cloud).
        """
        coupling = self.beta * self.nbsum
        return np.stack((self.lik[..., 0] - coupling,
                         self.lik[..., 1] + coupling), axis=-1)

    def total_energy(self) -> float:
        """Likelihood sum plus clique sum, each clique counted once."""
        plus = self.spins > 0
        lik_term = np.where(plus, self.lik[..., 1], self.lik[..., 0]).sum()
        clique_term = 0.5 * self.beta * (self.spins * self.nbsum).sum()
        return float(lik_term + clique_term)

    def labels01(self) -> np.ndarray:
        return (self.spins > 0).astype(np.uint8)

    def posterior(self) -> np.ndarray:
        """Softmax over the two conditional energies; column 1 = cloud."""
        return softmax(self.pixel_energies(), axis=-1)

    def _flip(self, i: int, j: int, new_spin: int) -> None:
        delta = int(new_spin) - int(self.spins[i, j])
        self.spins[i, j] = new_spin
        rows, cols = self.spins.shape
        for dr, dc in self.offsets:
            r, c = i + dr, j + dc
            if 0 <= r < rows and 0 <= c < cols:
                self.nbsum[r, c] += delta


def ml_init(model: MrfModel, likelihoods: np.ndarray) -> LatticeState:
    """Likelihood-only argmax labeling (the coupling-free start state)."""
    spins = np.where(likelihoods[..., 1] > likelihoods[..., 0], 1, -1)
    return LatticeState(spins.astype(np.int8), likelihoods, model.beta,
                        model.offsets)


def random_init(model: MrfModel, likelihoods: np.ndarray,
                rng: np.random.Generator) -> LatticeState:
    spins = np.where(rng.random(likelihoods.shape[:2]) < 0.5, -1, 1)
    return LatticeState(spins.astype(np.int8), likelihoods, model.beta,
                        model.offsets)


def map_sweep(state: LatticeState) -> int:
    """One raster-order pass of per-pixel argmax relabeling.

    Neighbor sums reflect flips made earlier in the same pass (Gauss-Seidel
    style).  Energy ties keep the current spin.  Returns the flip count.
    """
    rows, cols = state.spins.shape
    spins, lik, nbsum, beta = state.spins, state.lik, state.nbsum, state.beta
    flips = 0
    for i in range(rows):
        for j in range(cols):
            coupling = beta * nbsum[i, j]
            e_minus = lik[i, j, 0] - coupling
            e_plus = lik[i, j, 1] + coupling
            s = spins[i, j]
            if e_plus > e_minus:
                new = 1
            elif e_plus < e_minus:
                new = -1
            else:
                new = s
            if new != s:
                state._flip(i, j, new)
                flips += 1
    return flips


def map_converge(model: MrfModel, image_features: np.ndarray,
                 max_sweeps: int = 100,
                 init: LatticeState | None = None) -> LatticeState:
    """Iterate :func:`map_sweep` from the ML labeling until no spin changes.

    Each flip strictly increases the total energy, so termination is
    guaranteed; ``max_sweeps`` is a safety valve.
    """
    state = init if init is not None else ml_init(
        model, model.likelihoods(image_features))
    for _ in range(max_sweeps):
        if map_sweep(state) == 0:
            return state
    raise NumericalError(f"MAP sweeps did not converge within {max_sweeps} passes")


# ---------------------------------------------------------------------------
# simulated annealing

@dataclass(frozen=True)
class SaSchedule:
    """Annealing knobs.

    ``t0=None`` presamples the start temperature as the standard deviation of
    the per-pixel flip energy differences at the initial state.
    """

    t0: float | None = None
    alpha: float = 0.75
    max_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise UsageError("alpha must be in (0, 1)")
        if self.max_steps < 1:
            raise UsageError("max_steps must be >= 1")
        if self.t0 is not None and self.t0 <= 0:
            raise UsageError("t0 must be positive when given")


@dataclass(frozen=True)
class SaResult:
    state: LatticeState
    energy: float
    accepted: int
    final_temperature: float


def _flip_energies(state: LatticeState) -> np.ndarray:
    """Conditional energy each pixel would have after flipping its spin."""
    energies = state.pixel_energies()
    plus = state.spins > 0
    return np.where(plus, energies[..., 0], energies[..., 1])


def sa_optimize(model: MrfModel, likelihoods: np.ndarray,
                schedule: SaSchedule = SaSchedule(),
                init: LatticeState | None = None) -> SaResult:
    """Maximize the lattice energy by annealed stochastic pixel flips.

    Pixels are sampled with probability proportional to how attractive their
    flip is (flip-state energy above the image minimum), a flip is accepted
    outright when it does not lower the energy and with probability
    ``exp(-dE / T)`` otherwise, and ``T`` cools geometrically.  The
    best-energy state visited is returned.  Deterministic for a fixed seed.
    """
    state = init if init is not None else ml_init(model, likelihoods)
    rng = np.random.default_rng(schedule.seed)
    rows, cols = state.spins.shape
    n = rows * cols

    flip_e = _flip_energies(state)
    current = np.where(state.spins > 0,
                       state.pixel_energies()[..., 1],
                       state.pixel_energies()[..., 0])
    if schedule.t0 is None:
        spread = float(np.std(np.abs(current - flip_e)))
        temperature = spread if spread > 0 else 1.0
    else:
        temperature = schedule.t0

    total = state.total_energy()
    best_total = total
    best_spins = state.spins.copy()
    accepted = 0

    for _ in range(schedule.max_steps):
        flip_e = _flip_energies(state)
        weights = (flip_e - flip_e.min()).reshape(-1)
        mass = weights.sum()
        if mass > 0:
            cdf = np.cumsum(weights)
            idx = int(np.searchsorted(cdf, rng.random() * mass, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        i, j = divmod(idx, cols)

        coupling = state.beta * state.nbsum[i, j]
        s = int(state.spins[i, j])
        e_cur = state.lik[i, j, (s + 1) // 2] + s * coupling
        e_new = state.lik[i, j, (1 - s + 1) // 2] - s * coupling
        delta = e_cur - e_new  # positive when the flip lowers the energy
        if delta <= 0 or rng.random() < np.exp(-delta / temperature):
            state._flip(i, j, -s)
            total -= delta
            accepted += 1
            if total > best_total:
                best_total = total
                best_spins = state.spins.copy()
        temperature *= schedule.alpha

    best = LatticeState(best_spins, state.lik, state.beta, state.offsets)
    return SaResult(best, best_total, accepted, temperature)


# ---------------------------------------------------------------------------
# unsupervised fitting (iterated conditional modes)

@dataclass(frozen=True)
class IcmFit:
    model: MrfModel
    states: tuple[LatticeState, ...]
    energies: tuple[float, ...]
    n_iter: int


def _pooled_stats(images: list[np.ndarray], states: list[LatticeState],
                  gamma_cov: float) -> tuple[np.ndarray, np.ndarray] | None:
    d = images[0].shape[2]
    means = np.empty((2, d))
    covs = np.empty((2, d, d))
    flat_x = np.concatenate([img.reshape(-1, d) for img in images])
    flat_s = np.concatenate([st.spins.reshape(-1) for st in states])
    for j, spin in enumerate((-1, 1)):
        members = flat_x[flat_s == spin]
        if members.shape[0] < 2:
            return None
        means[j] = members.mean(axis=0)
        diff = members - means[j]
        covs[j] = diff.T @ diff / (members.shape[0] - 1)
        covs[j][np.diag_indices(d)] += gamma_cov
    return means, covs


def icm_fit(images: list[np.ndarray], beta: float = 1.0, clique_order: int = 1,
            gamma_cov: float = 1.0, *, seed: int = 0, max_iter: int = 30,
            inference: str = "sweep",
            schedule: SaSchedule | None = None) -> IcmFit:
    """Unsupervised MRF fit by iterated conditional modes.

    Starting from uniformly random spins, alternate (a) pooled per-class
    Gaussian statistics over all images under the current labeling and
    (b) a full MAP relabeling of each image, until the summed total energy
    stops increasing.  ``inference`` selects sweeps or simulated annealing
    for step (b).  The best-energy iteration is returned.
    """
    if not images:
        raise DataError("icm_fit needs at least one image")
    images = [np.asarray(img, dtype=np.float64) for img in images]
    if any(img.ndim != 3 for img in images):
        raise UsageError("image features must have shape (rows, cols, d)")
    if inference not in ("sweep", "sa"):
        raise UsageError(f"unknown inference {inference!r}")
    rng = np.random.default_rng(seed)

    # bootstrap: random labeling, no model yet
    proto = MrfModel(np.zeros((2, images[0].shape[2])),
                     np.stack([np.eye(images[0].shape[2])] * 2),
                     beta, clique_order, gamma_cov)
    states = [LatticeState(
        np.where(rng.random(img.shape[:2]) < 0.5, -1, 1).astype(np.int8),
        np.zeros(img.shape[:2] + (2,)), beta, proto.offsets)
        for img in images]

    stats = _pooled_stats(images, states, gamma_cov)
    if stats is None:
        raise NumericalError("random initialization produced an empty class")
    model = replace(proto, means=stats[0], covariances=stats[1])

    best: tuple[float, MrfModel, list[LatticeState]] | None = None
    energies: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        new_states = []
        for img in images:
            lik = model.likelihoods(img)
            if inference == "sa":
                result = sa_optimize(
                    model, lik,
                    schedule or SaSchedule(seed=seed + it))
                new_states.append(result.state)
            else:
                new_states.append(map_converge(model, img))
        energy = sum(st.total_energy() for st in new_states)
        energies.append(energy)
        if best is not None and energy <= best[0]:
            break
        best = (energy, model, new_states)
        stats = _pooled_stats(images, new_states, gamma_cov)
        if stats is None:
            log.warning("ICM labeling collapsed to one class; stopping")
            break
        model = replace(model, means=stats[0], covariances=stats[1])

    assert best is not None
    return IcmFit(best[1], tuple(best[2]), tuple(energies), it)

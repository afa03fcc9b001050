import numpy as np
import pytest

from _oracles import (PAIR_OFFSETS, best_single_flip_gain, enumerate_map,
                      lattice_energy)
from irseg.errors import DataError, NumericalError, UsageError
from irseg.generative import fit_gda
from irseg.mrf import (IcmFit, LatticeState, MrfModel, SaResult, SaSchedule,
                       fit_supervised, icm_fit, map_converge, map_sweep,
                       ml_init, random_init, sa_optimize)

OFFSETS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))


def tiny_model(beta=1.0, clique_order=1, d=1):
    return MrfModel(np.array([[0.0] * d, [1.0] * d]),
                    np.stack([np.eye(d)] * 2), beta, clique_order)


def random_lik(shape, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal(shape + (2,))


# ---------------------------------------------------------------------------
# energies

def test_two_by_two_coupling_energies():
    lik = np.zeros((2, 2, 2))
    beta = 0.7
    aligned = LatticeState(np.ones((2, 2), dtype=np.int8), lik, beta, OFFSETS_4)
    assert aligned.total_energy() == pytest.approx(4 * beta)
    checker = LatticeState(np.array([[1, -1], [-1, 1]], dtype=np.int8),
                           lik, beta, OFFSETS_4)
    assert checker.total_energy() == pytest.approx(-4 * beta)
    rows = LatticeState(np.array([[1, 1], [-1, -1]], dtype=np.int8),
                        lik, beta, OFFSETS_4)
    assert rows.total_energy() == pytest.approx(0.0)


def test_pixel_energies_against_manual_neighbor_sums():
    lik = random_lik((3, 4), 0)
    spins = np.where(np.random.default_rng(1).random((3, 4)) < 0.5, -1, 1)
    beta = 0.6
    state = LatticeState(spins.astype(np.int8), lik, beta, OFFSETS_4)
    energies = state.pixel_energies()
    for i in range(3):
        for j in range(4):
            nb = sum(spins[i + dr, j + dc] for dr, dc in OFFSETS_4
                     if 0 <= i + dr < 3 and 0 <= j + dc < 4)
            assert energies[i, j, 0] == pytest.approx(lik[i, j, 0] - beta * nb)
            assert energies[i, j, 1] == pytest.approx(lik[i, j, 1] + beta * nb)


def test_total_energy_matches_reference_for_both_orders():
    for order in (1, 2):
        model = tiny_model(beta=0.9, clique_order=order)
        lik = random_lik((4, 5), 7)
        rng = np.random.default_rng(8)
        state = random_init(model, lik, rng)
        expected = lattice_energy(state.spins, lik, 0.9, PAIR_OFFSETS[order])
        assert state.total_energy() == pytest.approx(expected, abs=1e-9)


def test_posterior_is_energy_softmax():
    lik = random_lik((3, 3), 5)
    state = LatticeState(np.ones((3, 3), dtype=np.int8), lik, 0.4, OFFSETS_4)
    post = state.posterior()
    np.testing.assert_allclose(post.sum(axis=-1), 1.0)
    e = state.pixel_energies()
    manual = np.exp(e[..., 1]) / (np.exp(e[..., 0]) + np.exp(e[..., 1]))
    np.testing.assert_allclose(post[..., 1], manual, atol=1e-12)


# ---------------------------------------------------------------------------
# MAP sweeps

def test_ml_init_is_the_likelihood_argmax():
    lik = random_lik((5, 5), 2)
    state = ml_init(tiny_model(beta=1.3), lik)
    expected = np.where(lik[..., 1] > lik[..., 0], 1, -1)
    np.testing.assert_array_equal(state.spins, expected)
    np.testing.assert_array_equal(state.labels01(), (expected > 0))


def test_zero_beta_fixed_point_is_the_ml_labeling():
    model = tiny_model(beta=0.0)
    lik = random_lik((6, 7), 3)
    state = ml_init(model, lik)
    assert map_sweep(state) == 0
    converged = map_converge(model, np.zeros((6, 7, 1)),
                             init=ml_init(model, lik))
    np.testing.assert_array_equal(converged.spins,
                                  np.where(lik[..., 1] > lik[..., 0], 1, -1))


def test_sweeps_never_lower_the_energy():
    model = tiny_model(beta=0.8)
    lik = random_lik((8, 8), 4)
    state = random_init(model, lik, np.random.default_rng(9))
    prev = state.total_energy()
    for _ in range(50):
        flips = map_sweep(state)
        cur = state.total_energy()
        assert cur >= prev - 1e-12
        if flips == 0:
            break
        assert cur > prev
        prev = cur
    assert map_sweep(state) == 0


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("beta", [0.3, 1.2])
def test_converged_state_is_single_flip_optimal_and_below_global(order, beta):
    model = tiny_model(beta=beta, clique_order=order)
    lik = random_lik((3, 3), 42, scale=1.5)
    state = map_converge(model, np.zeros((3, 3, 1)),
                         init=ml_init(model, lik))
    pairs = PAIR_OFFSETS[order]
    gain = best_single_flip_gain(state.spins, lik, beta, pairs)
    assert gain <= 1e-9
    e_conv = state.total_energy()
    e_best, _ = enumerate_map(lik, beta, pairs)
    assert e_best >= e_conv - 1e-9


def test_map_converge_safety_valve():
    model = tiny_model(beta=0.5)
    with pytest.raises(NumericalError, match="did not converge"):
        map_converge(model, np.zeros((3, 3, 1)), max_sweeps=0)


# ---------------------------------------------------------------------------
# model construction

def test_fit_supervised_shares_gda_statistics():
    rng = np.random.default_rng(6)
    X = np.concatenate([rng.normal(0, 1, size=(20, 2)),
                        rng.normal(5, 1, size=(20, 2))])
    y = np.repeat([0, 1], 20)
    mrf = fit_supervised(X, y, beta=0.7, gamma_cov=0.5)
    gda = fit_gda(X, y, gamma_cov=0.5)
    np.testing.assert_allclose(mrf.means, gda.means)
    np.testing.assert_allclose(mrf.covariances, gda.covariances)
    assert mrf.beta == 0.7 and mrf.clique_order == 1


def test_fit_supervised_validation():
    X = np.arange(12, dtype=np.float64).reshape(6, 2)
    with pytest.raises(DataError, match="exactly two classes"):
        fit_supervised(X, [0, 0, 1, 1, 2, 2], beta=1.0)
    with pytest.raises(DataError, match="fewer than 2 samples"):
        fit_supervised(X[:3], [0, 1, 1], beta=1.0)
    with pytest.raises(UsageError, match="gamma_cov"):
        fit_supervised(X, [0, 0, 0, 1, 1, 1], beta=1.0, gamma_cov=-1.0)


def test_model_validation_and_offsets():
    assert len(tiny_model(clique_order=1).offsets) == 4
    assert len(tiny_model(clique_order=2).offsets) == 8
    with pytest.raises(UsageError, match="clique_order"):
        tiny_model(clique_order=3)
    with pytest.raises(UsageError, match="beta"):
        tiny_model(beta=-0.1)
    with pytest.raises(UsageError, match="binary"):
        MrfModel(np.zeros((3, 1)), np.stack([np.eye(1)] * 3), 1.0)
    with pytest.raises(UsageError, match="rows, cols, d"):
        tiny_model().likelihoods(np.zeros((4, 4)))


def test_likelihood_grid_shape():
    model = tiny_model(d=2)
    img = np.random.default_rng(0).normal(size=(4, 6, 2))
    lik = model.likelihoods(img)
    assert lik.shape == (4, 6, 2)
    from irseg.generative import gaussian_scores
    flat = gaussian_scores(model.means, model.covariances, img.reshape(-1, 2))
    np.testing.assert_allclose(lik, flat.reshape(4, 6, 2))


# ---------------------------------------------------------------------------
# simulated annealing

def test_sa_is_deterministic_and_consistent():
    model = tiny_model(beta=0.5)
    lik = random_lik((6, 6), 11)
    sched = SaSchedule(t0=2.0, alpha=0.9, max_steps=300, seed=3)
    a = sa_optimize(model, lik, sched)
    b = sa_optimize(model, lik, sched)
    assert np.array_equal(a.state.spins, b.state.spins)
    assert a.energy == b.energy and a.accepted == b.accepted
    assert a.energy == pytest.approx(a.state.total_energy(), abs=1e-9)
    assert a.final_temperature == pytest.approx(2.0 * 0.9 ** 300)


def test_sa_never_returns_below_its_start():
    model = tiny_model(beta=0.6)
    lik = random_lik((6, 6), 12)
    start_energy = ml_init(model, lik).total_energy()
    result = sa_optimize(model, lik, SaSchedule(max_steps=200, seed=1))
    assert result.energy >= start_energy - 1e-9
    assert isinstance(result, SaResult)


def test_sa_schedule_validation():
    with pytest.raises(UsageError, match="alpha"):
        SaSchedule(alpha=1.0)
    with pytest.raises(UsageError, match="alpha"):
        SaSchedule(alpha=0.0)
    with pytest.raises(UsageError, match="max_steps"):
        SaSchedule(max_steps=0)
    with pytest.raises(UsageError, match="t0"):
        SaSchedule(t0=0.0)


# ---------------------------------------------------------------------------
# unsupervised fitting

def two_level_images(seed=0, n=2, shape=(8, 8)):
    rng = np.random.default_rng(seed)
    images, masks = [], []
    for _ in range(n):
        mask = np.zeros(shape, dtype=bool)
        mask[2:6, 2:6] = True
        img = 10.0 * mask + 0.1 * rng.standard_normal(shape)
        images.append(img[..., None])
        masks.append(mask)
    return images, masks


def test_icm_recovers_two_level_images():
    images, masks = two_level_images()
    fit = icm_fit(images, beta=0.5, gamma_cov=0.01, seed=0)
    assert isinstance(fit, IcmFit)
    total = agree = 0
    for state, mask in zip(fit.states, masks):
        labels = state.labels01().astype(bool)
        agree += (labels == mask).sum()
        total += mask.size
    fraction = agree / total
    assert max(fraction, 1.0 - fraction) >= 0.99
    en = np.asarray(fit.energies)
    assert en[-1] <= en.max()
    if len(en) >= 3:
        assert np.all(np.diff(en[:-1]) > 0)


def test_icm_deterministic_per_seed():
    images, _ = two_level_images(seed=3)
    a = icm_fit(images, beta=0.4, seed=5)
    b = icm_fit(images, beta=0.4, seed=5)
    assert a.energies == b.energies
    for sa_state, sb_state in zip(a.states, b.states):
        assert np.array_equal(sa_state.spins, sb_state.spins)


def test_icm_with_annealed_inference():
    images, _ = two_level_images(seed=4, n=1, shape=(6, 6))
    fit = icm_fit(images, beta=0.3, seed=2, inference="sa",
                  schedule=SaSchedule(max_steps=150, seed=7))
    assert len(fit.states) == 1
    assert fit.n_iter >= 1


def test_icm_validation():
    with pytest.raises(DataError, match="at least one image"):
        icm_fit([])
    with pytest.raises(UsageError, match="rows, cols, d"):
        icm_fit([np.zeros((4, 4))])
    with pytest.raises(UsageError, match="unknown inference"):
        icm_fit([np.zeros((4, 4, 1))], inference="exact")

import numpy as np
import pytest

import bbgp


@pytest.fixture
def problem():
    truth = bbgp.Hyperparameters(np.array([0.3, 0.3]), 1.0, 0.1, 0.0)
    x, y = bbgp.synth_gp(80, 2, truth, seed=3)
    return x, y, truth


def test_kernel_matrix_is_symmetric_with_noise_diagonal(problem):
    x, _, hp = problem
    k = bbgp.kernel_matrix(x, hp)
    assert k.shape == (80, 80)
    assert np.allclose(k, k.T)
    assert np.allclose(np.diag(k), hp.signal_variance + hp.noise_variance)


def test_exact_lml_matches_numpy(problem):
    x, y, hp = problem
    k = bbgp.kernel_matrix(x, hp)
    _, logdet = np.linalg.slogdet(k)
    r = y - hp.mean
    expected = -0.5 * r @ np.linalg.solve(k, r) - 0.5 * logdet - 0.5 * len(y) * np.log(2 * np.pi)
    assert bbgp.exact_lml(x, y, hp) == pytest.approx(expected, rel=1e-10)
    assert bbgp.exact_lml_grad(x, y, hp).shape == (5,)


def test_estimate_is_bias_bounded(problem):
    x, y, hp = problem
    est = bbgp.estimate_lml(x, y, hp, bbgp.BBGPConfig(epsilon=0.5, seed=1))
    assert est["converged"]
    assert est["bias_bound"] <= 0.5
    assert est["logdet_lower"] <= est["logdet_upper"]
    assert est["quad_lower"] <= est["quad_upper"]
    assert est["gradient"].shape == (5,)
    again = bbgp.estimate_lml(x, y, hp, bbgp.BBGPConfig(epsilon=0.5, seed=1))
    assert again["value"] == est["value"]


def test_probes_are_rademacher():
    z = bbgp.rademacher_probes(50, 3, seed=2)
    assert z.shape == (50, 3)
    assert set(np.unique(z)) <= {-1.0, 1.0}


def test_fit_improves_the_likelihood(problem):
    x, y, _ = problem
    init = bbgp.Hyperparameters.initial(2)
    result = bbgp.fit(x, y, bbgp.BBGPConfig(seed=0), steps=40)
    assert len(result["trace"]) == 40
    assert bbgp.exact_lml(x, y, result["hp"]) > bbgp.exact_lml(x, y, init)
    exact = bbgp.fit_exact(x, y, steps=40)
    assert exact["hp"].noise_variance > 0


def test_predict_mean_interpolates_training_data(problem):
    x, y, hp = problem
    pred = bbgp.predict_mean(x, y, x[:5], hp)
    assert np.sqrt(np.mean((pred - y[:5]) ** 2)) < 0.5


def test_validate_bounds_passes():
    checks = bbgp.validate_bounds(instances=8)
    assert len(checks) == 4
    assert all(c["failed"] == 0 for c in checks)


def test_invalid_hyperparameters_raise():
    with pytest.raises(ValueError):
        bbgp.Hyperparameters(np.array([-1.0]), 1.0, 0.1)

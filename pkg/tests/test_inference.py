import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plumeinv import experiments
from plumeinv.errors import ConfigError, InvalidInputError
from plumeinv.inference import (
    ChainConfig,
    InitConfig,
    ParameterLayout,
    Priors,
    Sampler,
    StepSizeAdapter,
    Trace,
    adapt_step_size,
    grad_and_metric,
    mmala_step,
)
from plumeinv.inference.gibbs import beta_posterior, sigma2_posterior
from plumeinv.inference.mmala import CallableTarget, proposal_logpdf, regularised_metric
from plumeinv.plume import DispersionSpec

SMALL_INIT = InitConfig(grid_points=8, rate_points=21, lhs_samples=16)


def _truth_theta(model, data):
    t = data.truth
    disp = [t[k] for k in ("a_H", "b_H", "a_V", "b_V")][: model.layout.n_dispersion]
    return model.layout.pack([t["s"]], [(t["x"], t["y"])], disp)


def _beta_sensor(data):
    return np.array([data.truth["beta"][sid] for sid in data.array.ids])


# ----------------------------------------------------------------- layout


def test_layout_names_per_mode():
    assert ParameterLayout(1, "draxler").names == ("log_s", "x", "y", "log_a_H", "log_b_H", "log_a_V", "log_b_V")
    assert ParameterLayout(1, "smith-scale").constrained_names == ("s", "x", "y", "a_H", "a_V")
    two = ParameterLayout(2, "fixed")
    assert two.constrained_names == ("s_1", "x_1", "y_1", "s_2", "x_2", "y_2")
    np.testing.assert_array_equal(two.rate_index(), [0, 3])
    with pytest.raises(ConfigError):
        ParameterLayout(1, "other")
    with pytest.raises(InvalidInputError):
        ParameterLayout(0, "fixed")


@given(st.floats(1e-8, 1.0), st.floats(-50, 150), st.floats(-50, 150),
       st.lists(st.floats(0.05, 5.0), min_size=4, max_size=4))
def test_transform_round_trip(s, x, y, disp):
    lay = ParameterLayout(1, "draxler")
    theta = lay.pack([s], [(x, y)], disp)
    np.testing.assert_allclose(lay.to_constrained(theta), [s, x, y, *disp], rtol=1e-12)


def test_pack_rejects_bad_values():
    lay = ParameterLayout(1, "draxler")
    with pytest.raises(InvalidInputError):
        lay.pack([0.0], [(1, 1)], [1, 1, 1, 1])
    with pytest.raises(InvalidInputError):
        lay.pack([1.0], [(1, 1)], [1, 1])


def test_briggs_fixed_has_three_parameters(level_m):
    cfg, data, _ = level_m
    model = experiments.inversion_model(cfg, data, DispersionSpec("Briggs", asc_class="C"), estimate=False)
    assert model.layout.size == 3 and model.layout.dispersion_mode == "fixed"
    with pytest.raises(ConfigError):
        experiments.inversion_model(cfg, data, DispersionSpec("Briggs", asc_class="C"), estimate=True)


def test_prior_validation():
    with pytest.raises(ConfigError):
        Priors(sigma2_shape=0.0)
    with pytest.raises(ConfigError):
        Priors(box=(1, 1, 0, 5))
    with pytest.raises(ConfigError):
        Priors(location_sd=(1.0, 1.0))


# ------------------------------------------------------------- densities


def test_density_outside_box_is_minus_infinity(level_m):
    _, data, model = level_m
    theta = _truth_theta(model, data)
    theta[1] = -5.0
    beta_obs = model.expand_beta(_beta_sensor(data))
    assert model.density(theta, beta_obs, 1e-6) == -math.inf
    assert model.log_posterior(theta, _beta_sensor(data), 1e-6) == -math.inf


def test_log_likelihood_matches_direct_formula(level_m):
    _, data, model = level_m
    theta = _truth_theta(model, data)
    beta = _beta_sensor(data)
    r = model.d - model.expand_beta(beta) - model.signal(theta)
    expected = -0.5 * r.size * math.log(2 * math.pi * 2e-6) - 0.5 * r @ r / 2e-6
    assert model.log_likelihood(theta, beta, 2e-6) == pytest.approx(expected, rel=1e-12)


def test_signal_at_truth_matches_noise_free_data(level_m):
    _, data, model = level_m
    resid = model.residual(_truth_theta(model, data), _beta_sensor(data))
    # only the simulated measurement noise remains
    assert resid.var() == pytest.approx(data.truth["sigma2"], rel=0.1)


def test_gradient_matches_finite_differences(level_m):
    _, data, model = level_m
    theta = _truth_theta(model, data) + np.array([0.05, 1.0, -1.0, 0.02, -0.03, 0.01, 0.02])
    beta_obs = model.expand_beta(_beta_sensor(data))
    _, grad = model.value_and_grad(theta, beta_obs, 1e-6)
    for k in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[k]))
        e = np.zeros_like(theta)
        e[k] = h
        fd = (model.density(theta + e, beta_obs, 1e-6) - model.density(theta - e, beta_obs, 1e-6)) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-5, abs=1e-6 * abs(grad).max())


def test_hessian_is_symmetric(level_m):
    _, data, model = level_m
    H = model.hessian(_truth_theta(model, data), model.expand_beta(_beta_sensor(data)), 1e-6)
    np.testing.assert_allclose(H, H.T, rtol=1e-10, atol=1e-6 * abs(H).max())


# ------------------------------------------------------------------ gibbs


def test_sigma2_posterior_parameters():
    shape, scale = sigma2_posterior(np.array([1.0, -2.0, 3.0]), 2.0, 0.5)
    assert shape == 3.5 and scale == 0.5 + 7.0


def test_beta_posterior_closed_form():
    resid = np.array([1.0, 1.2, 0.8, 2.0, 2.2])
    idx = np.array([0, 0, 0, 1, 1])
    mean, var = beta_posterior(resid, idx, 2, 0.04, np.array([0.0, 2.0]), np.array([1.0, 0.0]))
    prec = 3 / 0.04 + 1.0
    assert var[0] == pytest.approx(1 / prec)
    assert mean[0] == pytest.approx((3.0 / 0.04) / prec)
    # zero prior variance pins the background
    assert mean[1] == 2.0 and var[1] == 0.0


# ------------------------------------------------------------------ mmala


def _gauss_target(prec):
    return CallableTarget(lambda th: (-0.5 * th @ prec @ th, -prec @ th), lambda th: -prec)


def test_regularised_metric_floors_eigenvalues():
    H = np.array([[2.0, 0.0], [0.0, -3.0]])  # log-density curvature with one convex direction
    G = regularised_metric(H, floor=1e-3)
    np.testing.assert_allclose(np.linalg.eigvalsh(G), [1e-3, 3.0])


def test_metric_falls_back_to_identity_on_bad_hessian():
    target = CallableTarget(lambda th: (0.0, np.zeros(2)), lambda th: np.full((2, 2), np.nan))
    geom = grad_and_metric(target, np.zeros(2))
    assert geom.fallback
    np.testing.assert_array_equal(geom.metric, np.eye(2))


def test_proposal_density_normalises():
    prec = np.array([[2.0, 0.5], [0.5, 1.0]])
    geom = grad_and_metric(_gauss_target(prec), np.array([0.3, -0.2]))
    g = np.linspace(-8, 8, 321)
    xx, yy = np.meshgrid(g, g)
    dens = np.exp([proposal_logpdf(np.array([a, b]), geom, 0.7) for a, b in zip(xx.ravel(), yy.ravel())])
    assert dens.sum() * (g[1] - g[0]) ** 2 == pytest.approx(1.0, rel=1e-6)


def test_mmala_samples_correlated_gaussian():
    prec = np.linalg.inv(np.array([[1.0, 0.6], [0.6, 0.5]]))
    target = _gauss_target(prec)
    rng = np.random.default_rng(0)
    geom = grad_and_metric(target, np.array([1.0, -1.0]))
    draws, n_acc = [], 0
    for _ in range(20000):
        geom, acc, _ = mmala_step(target, geom, 1.2, rng)
        n_acc += acc
        draws.append(geom.theta)
    draws = np.array(draws[1000:])
    np.testing.assert_allclose(draws.mean(0), 0.0, atol=0.05)
    np.testing.assert_allclose(np.cov(draws.T), [[1.0, 0.6], [0.6, 0.5]], rtol=0.08, atol=0.03)
    assert 0.3 < n_acc / 20000 < 1.0


def test_small_steps_are_nearly_always_accepted():
    prec = np.array([[4.0, 1.0], [1.0, 2.0]])
    target = _gauss_target(prec)
    rng = np.random.default_rng(1)
    geom = grad_and_metric(target, np.array([1.0, -1.0]))
    probs = []
    for _ in range(50):
        geom, _, p = mmala_step(target, geom, 1e-4, rng)
        probs.append(p)
    assert min(probs) > 0.99


def test_step_size_adaptation_direction_and_freeze():
    assert adapt_step_size(1.0, [1.0], 1) > 1.0
    assert adapt_step_size(1.0, [0.0], 1) < 1.0
    assert adapt_step_size(1.0, [0.57], 5) == pytest.approx(1.0)
    ad = StepSizeAdapter(1.0, burn_in=3)
    for _ in range(3):
        ad.update(0.0)
    frozen = ad.step
    assert ad.frozen and frozen < 1.0
    assert ad.update(1.0) == frozen
    back = StepSizeAdapter.from_state(ad.state_dict())
    assert back.step == ad.step and back.iteration == ad.iteration


# ----------------------------------------------------------------- chain


def test_chain_is_deterministic_and_resumable(level_m, tmp_path):
    _, _, model = level_m
    cfg = ChainConfig(n_iter=12, burn_in=6, seed=5)
    full = Sampler.start(model, cfg, SMALL_INIT).run()
    again = Sampler.start(model, cfg, SMALL_INIT).run()
    np.testing.assert_array_equal(full.theta, again.theta)
    np.testing.assert_array_equal(full.sigma2, again.sigma2)

    first = Sampler.start(model, cfg, SMALL_INIT)
    head = first.run(5)
    first.save_checkpoint(tmp_path / "ckpt.json")
    tail = Sampler.resume(model, cfg, tmp_path / "ckpt.json").run()
    joined = Trace.concatenate(head, tail)
    np.testing.assert_array_equal(joined.theta, full.theta)
    np.testing.assert_array_equal(joined.beta, full.beta)
    np.testing.assert_array_equal(joined.step_size, full.step_size)


def test_trace_csv_round_trip(level_m, tmp_path):
    _, _, model = level_m
    trace = Sampler.start(model, ChainConfig(n_iter=4, burn_in=2, seed=1), SMALL_INIT).run()
    trace.to_csv(tmp_path / "t.csv")
    back = Trace.from_csv(tmp_path / "t.csv", model.layout.size, burn_in=2)
    np.testing.assert_array_equal(back.theta, trace.theta)
    np.testing.assert_array_equal(back.accepted, trace.accepted)
    assert back.names == trace.names and back.sensor_ids == trace.sensor_ids
    assert len(back.post_burn_in()) == 2


def test_initialisation_lands_near_truth(level_m):
    _, data, model = level_m
    sampler = Sampler.start(model, ChainConfig(n_iter=1, burn_in=0, seed=3), InitConfig())
    s, x, y = model.layout.to_constrained(sampler.state.theta)[:3]
    assert abs(x - data.truth["x"]) < 10 and abs(y - data.truth["y"]) < 10
    assert s == pytest.approx(data.truth["s"], rel=0.5)

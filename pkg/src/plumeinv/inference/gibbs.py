"""Exact conjugate updates for the noise variance and per-sensor backgrounds."""

import numpy as np


def sigma2_posterior(residual, shape, scale):
    """Inv-Gamma parameters of the noise variance given residuals d - beta - A s."""
    residual = np.asarray(residual, dtype=float)
    return shape + 0.5 * residual.size, scale + 0.5 * float(np.dot(residual, residual))


def draw_sigma2(residual, shape, scale, rng):
    """Draw sigma^2 ~ Inv-Gamma(n/2 + a, b + sum(residual^2)/2)."""
    post_shape, post_scale = sigma2_posterior(residual, shape, scale)
    return post_scale / rng.gamma(post_shape)


def beta_posterior(signal_free, sensor_index, n_sensors, sigma2, prior_mean, prior_var):
    """Mean and variance of each sensor's background given ``signal_free = d - A s``.

    A sensor's background is shared by all its observations, so its update
    uses the per-sensor count and residual sum. A zero prior variance pins
    the background to its prior mean.
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_var = np.asarray(prior_var, dtype=float)
    counts = np.bincount(sensor_index, minlength=n_sensors).astype(float)
    sums = np.bincount(sensor_index, weights=signal_free, minlength=n_sensors)
    mean = prior_mean.copy()
    var = np.zeros(n_sensors)
    free = prior_var > 0
    if np.isinf(sigma2):
        mean[free] = prior_mean[free]
        var[free] = prior_var[free]
        return mean, var
    precision = counts[free] / sigma2 + 1.0 / prior_var[free]
    var[free] = 1.0 / precision
    mean[free] = var[free] * (sums[free] / sigma2 + prior_mean[free] / prior_var[free])
    return mean, var


def draw_beta(signal_free, sensor_index, n_sensors, sigma2, prior_mean, prior_var, rng):
    """Draw per-sensor backgrounds from their Gaussian full conditional."""
    mean, var = beta_posterior(signal_free, sensor_index, n_sensors, sigma2, prior_mean, prior_var)
    return mean + np.sqrt(var) * rng.standard_normal(n_sensors)


def gibbs_sigma2(model, theta, beta_sensor, rng, signal=None):
    resid = model.residual(theta, beta_sensor, signal)
    return draw_sigma2(resid, model.priors.sigma2_shape, model.priors.sigma2_scale, rng)


def gibbs_beta(model, theta, sigma2, rng, signal=None):
    if signal is None:
        signal = model.signal(theta)
    return draw_beta(model.d - signal, model.sensor_index, model.n_sensors, sigma2,
                     model.beta_mean, model.beta_var, rng)

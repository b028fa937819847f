"""Starting values: coarse grid search, then a Latin hypercube refinement."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from plumeinv.errors import InferenceError


@dataclass(frozen=True)
class InitConfig:
    """Settings for :func:`initialize`.

    Attributes:
        grid_points: nodes per horizontal axis of the location grid.
        rate_bounds: (min, max) of the log-spaced emission-rate grid in kg/s.
        rate_points: number of emission-rate grid values.
        lhs_samples: Latin hypercube size for the refinement stage.
        lhs_log_rate: half-width of the refinement box in log emission rate.
        lhs_log_dispersion: half-width in each log dispersion parameter.
        step_size: initial M-MALA step size.
    """

    grid_points: int = 23
    rate_bounds: tuple = (1e-6, 1e-1)
    rate_points: int = 51
    lhs_samples: int = 256
    lhs_log_rate: float = 1.0
    lhs_log_dispersion: float = 0.5
    step_size: float = 1.0


def latin_hypercube(n, lower, upper, rng):
    """``n`` Latin hypercube points in the box [lower, upper]."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    sampler = qmc.LatinHypercube(d=lower.size, seed=rng)
    return qmc.scale(sampler.random(n), lower, upper)


def _centre_by_sensor(values, sensor_index, counts):
    means = np.bincount(sensor_index, weights=values, minlength=counts.size) / np.maximum(counts, 1)
    return values - means[sensor_index]


def profiled_rss(model, signals):
    """Residual sum of squares with each sensor's background profiled out.

    ``signals`` is (n_candidates, n_obs); returns (n_candidates,).
    """
    si, counts = model.sensor_index, model.counts
    d_c = _centre_by_sensor(model.d, si, counts)
    out = np.empty(signals.shape[0])
    for k, sig in enumerate(signals):
        r = d_c - _centre_by_sensor(sig, si, counts)
        out[k] = r @ r
    return out


def profiled_loglik(rss, n_obs):
    """Gaussian log-likelihood at the profiled noise variance rss / n."""
    with np.errstate(divide="ignore"):
        return -0.5 * n_obs * (np.log(2 * np.pi * rss / n_obs) + 1.0)


def grid_search(model, config: InitConfig):
    """Stage one: best (location, rate) for each source on a coarse grid.

    Dispersion parameters are held at 1.0 (or at their fixed values). With
    several sources the search is greedy: each source is fitted to what the
    previously placed ones leave unexplained.

    Returns:
        (rates, locations, grid spacing (dx, dy), best log-likelihood)
    """
    lay = model.layout
    x0, x1, y0, y1 = model.priors.box
    xs = np.linspace(x0, x1, config.grid_points)
    ys = np.linspace(y0, y1, config.grid_points)
    rates = np.geomspace(*config.rate_bounds, config.rate_points)
    si, counts = model.sensor_index, model.counts
    d_c = _centre_by_sensor(model.d, si, counts)
    disp = np.zeros(lay.n_dispersion)

    chosen_rates, chosen_locs = [], []
    explained = np.zeros(model.n_obs)
    best_ll = -math.inf
    for _ in range(lay.n_sources):
        target = d_c - _centre_by_sensor(explained, si, counts)
        best = (-math.inf, None, None, None)
        for x in xs:
            for y in ys:
                unit = _unit_signal(model, (x, y), disp)
                if not np.all(np.isfinite(unit)):
                    continue
                u_c = _centre_by_sensor(unit, si, counts)
                # RSS(s) = |t|^2 - 2 s t.u + s^2 |u|^2 on the whole rate grid
                rss = target @ target - 2 * rates * (target @ u_c) + rates**2 * (u_c @ u_c)
                k = int(np.argmin(rss))
                ll = profiled_loglik(max(rss[k], 1e-300), model.n_obs)
                if math.isfinite(ll) and ll > best[0]:
                    best = (ll, rates[k], (x, y), unit)
        if best[1] is None:
            raise InferenceError("grid search found no finite likelihood value")
        best_ll = best[0]
        chosen_rates.append(best[1])
        chosen_locs.append(best[2])
        explained = explained + best[1] * best[3]
    spacing = (xs[1] - xs[0], ys[1] - ys[0])
    return np.asarray(chosen_rates), np.asarray(chosen_locs), spacing, best_ll


def _unit_signal(model, xy, log_dispersion):
    """Unit-rate response of a single source at ``xy``."""
    lay = model.layout
    values = tuple(np.exp(log_dispersion))
    draxler = values if lay.dispersion_mode == "draxler" else None
    scale = values if lay.dispersion_mode == "smith-scale" else None
    return np.asarray(model.forward.unit_response(np, xy, draxler=draxler, scale=scale))


def initialize(model, config: InitConfig, rng):
    """Starting state for the sampler.

    Stage one is :func:`grid_search`; stage two scatters a Latin hypercube
    over every theta coordinate around that optimum and keeps the point with
    the highest profiled log-likelihood plus log prior. Backgrounds and the
    noise variance start at their profiled values.

    Returns:
        (theta, beta per sensor, sigma2)
    """
    lay = model.layout
    rates, locs, (dx, dy), _ = grid_search(model, config)
    centre = lay.pack(rates, locs, np.ones(lay.n_dispersion))
    half = np.empty(lay.size)
    half[lay.rate_index()] = config.lhs_log_rate
    xi, yi = lay.location_index()
    half[xi] = dx
    half[yi] = dy
    half[lay.dispersion_index()] = config.lhs_log_dispersion
    x0, x1, y0, y1 = model.priors.box
    lower, upper = centre - half, centre + half
    lower[xi], upper[xi] = np.maximum(lower[xi], x0), np.minimum(upper[xi], x1)
    lower[yi], upper[yi] = np.maximum(lower[yi], y0), np.minimum(upper[yi], y1)
    candidates = np.vstack([centre, latin_hypercube(config.lhs_samples, lower, upper, rng)])

    signals = model.signals(candidates)
    rss = profiled_rss(model, signals)
    score = profiled_loglik(rss, model.n_obs)
    prior = np.array([float(model.log_prior_theta(c, np)) for c in candidates])
    score = np.where(np.isfinite(score) & np.isfinite(prior), score + prior, -np.inf)
    if not np.any(np.isfinite(score)):
        raise InferenceError("no finite starting point found in the Latin hypercube stage")
    best = int(np.argmax(score))
    theta = candidates[best]
    signal = signals[best]
    free = model.d - signal
    beta = np.bincount(model.sensor_index, weights=free, minlength=model.n_sensors) / np.maximum(model.counts, 1)
    fixed = model.beta_var == 0
    beta[fixed] = model.beta_mean[fixed]
    resid = free - beta[model.sensor_index]
    sigma2 = max(float(resid @ resid) / model.n_obs, 1e-12)
    return theta, beta, sigma2

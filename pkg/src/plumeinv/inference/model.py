"""Posterior of the plume inversion in unconstrained coordinates.

The M-MALA block ``theta`` holds, per source, ``log s``, ``x`` and ``y``,
followed by the log of every free dispersion parameter. Positivity of the
emission rate and dispersion parameters follows from the log transform; the
change-of-variables Jacobian enters the density, not the proposal.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from scipy.special import ndtr

from plumeinv.errors import ConfigError, InvalidInputError
from plumeinv.sensing import ForwardModel, Observations

DRAXLER_NAMES = ("a_H", "b_H", "a_V", "b_V")
SMITH_SCALE_NAMES = ("a_H", "a_V")
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Priors:
    """Prior hyperparameters.

    These defaults are generic starting points, not calibrated values; every
    field is meant to be set from the run configuration.

    Attributes:
        sigma2_shape, sigma2_scale: Inv-Gamma(a, b) prior on the noise variance.
        beta_mean, beta_var: per-sensor background prior N(mean, var); scalars
            broadcast to every sensor.
        log_rate_mean, log_rate_sd: Gaussian prior on log emission rate.
        box: (x_min, x_max, y_min, y_max) domain of the source location.
        location_mean, location_sd: optional Gaussian on (x, y), truncated to
            ``box``; uniform over the box when ``location_sd`` is None.
        log_dispersion_mean, log_dispersion_sd: Gaussian prior on the log of
            each free dispersion parameter.
    """

    sigma2_shape: float = 2.0
    sigma2_scale: float = 2.0
    beta_mean: object = 1.93
    beta_var: object = 0.01
    log_rate_mean: float = math.log(1e-3)
    log_rate_sd: float = 2.0
    box: Tuple[float, float, float, float] = (0.0, 110.0, 0.0, 110.0)
    location_mean: Optional[Tuple[float, float]] = None
    location_sd: Optional[Tuple[float, float]] = None
    log_dispersion_mean: float = 0.0
    log_dispersion_sd: float = 1.0

    def __post_init__(self):
        if not (self.sigma2_shape > 0 and self.sigma2_scale > 0):
            raise ConfigError("Inv-Gamma shape and scale must be positive")
        if not (self.log_rate_sd > 0 and self.log_dispersion_sd > 0):
            raise ConfigError("prior scales must be positive")
        x0, x1, y0, y1 = self.box
        if not (x1 > x0 and y1 > y0):
            raise ConfigError(f"degenerate domain box {self.box}")
        if np.any(np.asarray(self.beta_var, dtype=float) < 0):
            raise ConfigError("background prior variances must be >= 0")
        if self.location_sd is not None:
            if self.location_mean is None or min(self.location_sd) <= 0:
                raise ConfigError("a Gaussian location prior needs a mean and positive scales")

    def beta_prior(self, n_sensors):
        mean = np.broadcast_to(np.asarray(self.beta_mean, dtype=float), (n_sensors,)).copy()
        var = np.broadcast_to(np.asarray(self.beta_var, dtype=float), (n_sensors,)).copy()
        return mean, var


@dataclass(frozen=True)
class ParameterLayout:
    """Positions and transforms of the M-MALA block."""

    n_sources: int
    dispersion_mode: str  # "draxler", "smith-scale" or "fixed"
    names: Tuple[str, ...] = field(init=False)
    constrained_names: Tuple[str, ...] = field(init=False)
    log_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_sources < 1:
            raise InvalidInputError("need at least one source")
        if self.dispersion_mode not in ("draxler", "smith-scale", "fixed"):
            raise ConfigError(f"unknown dispersion mode {self.dispersion_mode!r}")
        names, cnames, logs = [], [], []
        for i in range(self.n_sources):
            suffix = "" if self.n_sources == 1 else f"_{i + 1}"
            for base, is_log in (("s", True), ("x", False), ("y", False)):
                cnames.append(base + suffix)
                names.append(("log_" if is_log else "") + base + suffix)
                logs.append(is_log)
        disp = {"draxler": DRAXLER_NAMES, "smith-scale": SMITH_SCALE_NAMES, "fixed": ()}[self.dispersion_mode]
        for p in disp:
            cnames.append(p)
            names.append("log_" + p)
            logs.append(True)
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "constrained_names", tuple(cnames))
        object.__setattr__(self, "log_mask", np.asarray(logs))

    @property
    def size(self):
        return len(self.names)

    @property
    def n_dispersion(self):
        return self.size - 3 * self.n_sources

    def rate_index(self):
        return np.arange(self.n_sources) * 3

    def location_index(self):
        base = np.arange(self.n_sources) * 3
        return base + 1, base + 2

    def dispersion_index(self):
        return np.arange(3 * self.n_sources, self.size)

    def to_constrained(self, theta, xp=np):
        return xp.where(self.log_mask, xp.exp(theta), theta)

    def to_unconstrained(self, values, xp=np):
        values = xp.asarray(values, dtype=float)
        if np.any(np.asarray(values)[self.log_mask] <= 0):
            raise InvalidInputError("log-transformed parameters must be positive")
        safe = xp.where(self.log_mask, values, 1.0)
        return xp.where(self.log_mask, xp.log(safe), values)

    def pack(self, rates, locations, dispersion=()):
        """Unconstrained vector from rates (n_src,), locations (n_src, 2) and dispersion values."""
        rates = np.atleast_1d(np.asarray(rates, dtype=float))
        locations = np.asarray(locations, dtype=float).reshape(-1, 2)
        values = []
        for i in range(self.n_sources):
            values += [rates[i], locations[i, 0], locations[i, 1]]
        values += list(np.asarray(dispersion, dtype=float).reshape(-1))
        if len(values) != self.size:
            raise InvalidInputError(f"expected {self.size} parameter values, got {len(values)}")
        return self.to_unconstrained(np.asarray(values))


def dispersion_mode_for(forward: ForwardModel, estimate_dispersion: bool):
    if not estimate_dispersion:
        return "fixed"
    if forward.dispersion.scheme == "Draxler":
        return "draxler"
    if forward.dispersion.scheme == "Smith":
        return "smith-scale"
    raise ConfigError("dispersion parameters can only be estimated for the Draxler or Smith schemes")


class InversionModel:
    """Likelihood, priors and derivatives for one dataset.

    Args:
        forward: plume responses for the sensor array and wind record. Its
            ``rows`` must match the observation index map.
        obs: measurements.
        priors: prior hyperparameters.
        n_sources: number of sources in the M-MALA block.
        estimate_dispersion: sample the Draxler parameters (or Smith scale
            multipliers) instead of holding the scheme fixed.
    """

    def __init__(self, forward: ForwardModel, obs: Observations, priors: Priors,
                 n_sources=1, estimate_dispersion=True):
        if forward.rows.shape != obs.rows.shape or not np.array_equal(forward.rows, obs.rows):
            raise InvalidInputError("forward model rows do not match the observation layout")
        self.forward = forward
        self.obs = obs
        self.priors = priors
        self.layout = ParameterLayout(n_sources, dispersion_mode_for(forward, estimate_dispersion))
        self.d = np.asarray(obs.d, dtype=float)
        self.n_obs = obs.n_obs
        self.sensor_index = obs.sensor_index
        self.n_sensors = obs.n_sensors
        self.counts = obs.per_sensor_counts()
        self.beta_mean, self.beta_var = priors.beta_prior(obs.n_sensors)
        self._loc_norm = self._location_normaliser()

        self._density = jax.jit(self.theta_log_density)
        self._value_and_grad = jax.jit(jax.value_and_grad(self.theta_log_density))
        self._hessian = jax.jit(jax.hessian(self.theta_log_density))
        self._predict = jax.jit(self._mean_signal)
        self._batched_predict = jax.jit(jax.vmap(self._mean_signal))

    # ---------------------------------------------------------------- pieces

    def _location_normaliser(self):
        p = self.priors
        if p.location_sd is None:
            x0, x1, y0, y1 = p.box
            return -math.log(x1 - x0) - math.log(y1 - y0)
        total = 0.0
        for (lo, hi), mu, sd in zip(((p.box[0], p.box[1]), (p.box[2], p.box[3])), p.location_mean, p.location_sd):
            mass = ndtr((hi - mu) / sd) - ndtr((lo - mu) / sd)
            if mass <= 0:
                raise ConfigError("location prior puts no mass inside the domain box")
            total -= math.log(mass)
        return total

    def split(self, theta, xp=jnp):
        """(rates, xy pairs, draxler tuple or None, smith scale or None) from theta."""
        lay = self.layout
        rates = xp.exp(theta[lay.rate_index()])
        xi, yi = lay.location_index()
        xys = [(theta[i], theta[j]) for i, j in zip(xi, yi)]
        draxler = scale = None
        if lay.dispersion_mode == "draxler":
            draxler = tuple(xp.exp(theta[k]) for k in lay.dispersion_index())
        elif lay.dispersion_mode == "smith-scale":
            scale = tuple(xp.exp(theta[k]) for k in lay.dispersion_index())
        return rates, xys, draxler, scale

    def coupling(self, theta, xp=jnp):
        _, xys, draxler, scale = self.split(theta, xp)
        return self.forward.coupling(xp, xys, draxler=draxler, scale=scale)

    def _mean_signal(self, theta):
        rates, xys, draxler, scale = self.split(theta, jnp)
        A = self.forward.coupling(jnp, xys, draxler=draxler, scale=scale)
        return A @ rates

    def signal(self, theta):
        """Plume contribution A(theta) s at every observation."""
        return np.asarray(self._predict(jnp.asarray(theta)))

    def signals(self, thetas):
        return np.asarray(self._batched_predict(jnp.asarray(thetas)))

    def log_prior_theta(self, theta, xp=jnp):
        """Log prior density of the M-MALA block, Jacobian of the log transform included."""
        p, lay = self.priors, self.layout
        total = 0.0
        for k in lay.rate_index():
            total = total + _lognormal_logpdf(xp, xp.exp(theta[k]), p.log_rate_mean, p.log_rate_sd) + theta[k]
        xi, yi = lay.location_index()
        x0, x1, y0, y1 = p.box
        inside = True
        for i, j in zip(xi, yi):
            x, y = theta[i], theta[j]
            inside = inside & (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
            if p.location_sd is not None:
                total = total + _normal_logpdf(x, p.location_mean[0], p.location_sd[0])
                total = total + _normal_logpdf(y, p.location_mean[1], p.location_sd[1])
            total = total + self._loc_norm
        for k in lay.dispersion_index():
            total = total + _lognormal_logpdf(xp, xp.exp(theta[k]), p.log_dispersion_mean, p.log_dispersion_sd) + theta[k]
        return xp.where(inside, total, -xp.inf)

    def theta_log_density(self, theta, beta_obs, sigma2):
        """log p(theta | beta, sigma2, d) up to a constant."""
        resid = self.d - beta_obs - self._mean_signal(theta)
        return -0.5 * jnp.sum(resid * resid) / sigma2 + self.log_prior_theta(theta)

    # --------------------------------------------------------------- public

    def expand_beta(self, beta_sensor):
        return np.asarray(beta_sensor, dtype=float)[self.sensor_index]

    def log_likelihood(self, theta, beta_sensor, sigma2, signal=None):
        """Gaussian log-likelihood log N(d; A s + beta, sigma2 I), constants included."""
        if signal is None:
            signal = self.signal(theta)
        resid = self.d - self.expand_beta(beta_sensor) - signal
        return float(-0.5 * self.n_obs * (LOG_2PI + math.log(sigma2)) - 0.5 * np.dot(resid, resid) / sigma2)

    def log_prior(self, theta, beta_sensor, sigma2):
        a, b = self.priors.sigma2_shape, self.priors.sigma2_scale
        lp = float(self.log_prior_theta(jnp.asarray(theta)))
        lp += a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(sigma2) - b / sigma2
        beta_sensor = np.asarray(beta_sensor, dtype=float)
        free = self.beta_var > 0
        dev = beta_sensor[free] - self.beta_mean[free]
        lp += float(np.sum(-0.5 * (LOG_2PI + np.log(self.beta_var[free])) - 0.5 * dev * dev / self.beta_var[free]))
        return lp

    def log_posterior(self, theta, beta_sensor, sigma2):
        """Joint log posterior (unnormalised) in unconstrained theta coordinates.

        Non-finite values are returned as ``-inf`` rather than raised.
        """
        try:
            val = self.log_likelihood(theta, beta_sensor, sigma2) + self.log_prior(theta, beta_sensor, sigma2)
        except (ValueError, OverflowError, FloatingPointError):
            return -math.inf
        return val if math.isfinite(val) else -math.inf

    def density(self, theta, beta_obs, sigma2):
        return float(self._density(jnp.asarray(theta), jnp.asarray(beta_obs), sigma2))

    def value_and_grad(self, theta, beta_obs, sigma2):
        val, grad = self._value_and_grad(jnp.asarray(theta), jnp.asarray(beta_obs), sigma2)
        return float(val), np.asarray(grad)

    def hessian(self, theta, beta_obs, sigma2):
        return np.asarray(self._hessian(jnp.asarray(theta), jnp.asarray(beta_obs), sigma2))

    def residual(self, theta, beta_sensor, signal=None):
        if signal is None:
            signal = self.signal(theta)
        return self.d - self.expand_beta(beta_sensor) - signal

    def misspecification_flag(self, constrained):
        """True when a sampled Draxler exponent exceeds one."""
        if self.layout.dispersion_mode != "draxler":
            return False
        names = self.layout.constrained_names
        return bool(max(constrained[names.index("b_H")], constrained[names.index("b_V")]) > 1)


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - 0.5 * LOG_2PI


def _lognormal_logpdf(xp, x, mean, sd):
    logx = xp.log(x)
    return _normal_logpdf(logx, mean, sd) - logx


def theta_from_truth(layout: ParameterLayout, rates: Sequence[float], locations, dispersion=()):
    return layout.pack(rates, locations, dispersion)

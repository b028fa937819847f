"""Ornstein-Uhlenbeck wind simulation and rolling direction variability."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from plumeinv.errors import ConfigError, InvalidInputError, StabilityError

SPEED_FLOOR = 0.1  # m/s
GAMMA_FLOOR = 1e-4  # rad
GAMMA_CEIL = math.pi / 2 - 0.1  # rad, keeps tan(gamma) finite and positive
WIND_CSV_HEADER = ("t", "speed", "direction", "gamma_h", "gamma_v")


@dataclass(frozen=True)
class OUParams:
    """Euler-Maruyama OU discretisation.

    Attributes:
        mean: level the process reverts to.
        std: stationary standard deviation xi (same units as ``mean``).
        rate: mean-reversion rate Theta in 1/s.
        dt: time step in seconds.
    """

    mean: float
    std: float
    rate: float
    dt: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.mean, self.std, self.rate, self.dt)):
            raise InvalidInputError("OU parameters must be finite")
        if self.std < 0 or self.rate <= 0 or self.dt <= 0:
            raise InvalidInputError("OU parameters need std >= 0, rate > 0, dt > 0")


def simulate_ou(params: OUParams, n_steps: int, seed=None, initial=None) -> np.ndarray:
    """Simulate an OU path of ``n_steps`` samples.

    The deviation ``eta`` from the mean follows
    ``eta[t+1] = eta[t] - rate*dt*eta[t] + nu_t * std * sqrt(2*dt*rate)``
    with standard normal ``nu_t``; the first sample is ``initial`` (the mean
    when omitted).

    Raises:
        StabilityError: rate * dt >= 1.
    """
    if n_steps < 1:
        raise InvalidInputError("n_steps must be >= 1")
    decay = params.rate * params.dt
    if decay >= 1:
        raise StabilityError(f"rate*dt = {decay} must be < 1 for a stable discretisation")
    rng = np.random.default_rng(seed)
    eta0 = 0.0 if initial is None else float(initial) - params.mean
    noise = rng.standard_normal(n_steps - 1) * (params.std * math.sqrt(2.0 * params.dt * params.rate))
    phi = 1.0 - decay
    path = np.empty(n_steps)
    path[0] = eta0
    if n_steps > 1:
        path[1:], _ = lfilter([1.0], [1.0, -phi], noise, zi=[phi * eta0])
    return path + params.mean


def stationary_variance(params: OUParams) -> float:
    """Exact stationary variance of the discretised recursion (xi^2 as dt -> 0)."""
    k = params.rate * params.dt
    return params.std**2 / (1.0 - 0.5 * k)


def window_samples(window, dt):
    return max(1, math.ceil(window / dt - 1e-9))


def rolling_direction_std(direction, window=60.0, dt=1.0) -> np.ndarray:
    """Centred rolling standard deviation of a direction series, in radians.

    Angles (degrees) are unwrapped before the moments are taken so that the
    0/360 crossing does not inflate the spread. Each output uses the
    ``ceil(window/dt)`` samples centred on it, truncated at the series ends.
    """
    direction = np.asarray(direction, dtype=float)
    if direction.ndim != 1 or direction.size == 0:
        raise InvalidInputError("direction series must be a non-empty 1-D array")
    if not np.all(np.isfinite(direction)):
        raise InvalidInputError("direction series must be finite")
    if not (dt > 0 and window >= dt):
        raise InvalidInputError("need dt > 0 and window >= dt")
    unwrapped = np.unwrap(direction, period=360.0)
    centred = unwrapped - unwrapped.mean()
    k = window_samples(window, dt)
    n = centred.size
    idx = np.arange(n)
    lo = np.clip(idx - (k - 1) // 2, 0, n)
    hi = np.clip(idx + k // 2 + 1, 0, n)
    c1 = np.concatenate([[0.0], np.cumsum(centred)])
    c2 = np.concatenate([[0.0], np.cumsum(centred * centred)])
    count = hi - lo
    mean = (c1[hi] - c1[lo]) / count
    var = (c2[hi] - c2[lo]) / count - mean * mean
    return np.deg2rad(np.sqrt(np.maximum(var, 0.0)))


def clip_gamma(gamma):
    return np.clip(gamma, GAMMA_FLOOR, GAMMA_CEIL)


@dataclass(frozen=True)
class WindRecord:
    """Wind time series at a single anemometer.

    ``direction`` is in degrees (mathematical convention, blowing towards);
    ``gamma_h``/``gamma_v`` are rolling direction standard deviations in rad.
    """

    t: np.ndarray
    speed: np.ndarray
    direction: np.ndarray
    gamma_h: np.ndarray
    gamma_v: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f), dtype=float) for f in WIND_CSV_HEADER]
        n = arrays[0].size
        if any(a.ndim != 1 or a.size != n for a in arrays) or n == 0:
            raise InvalidInputError("wind series must be non-empty 1-D arrays of equal length")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidInputError("wind series must be finite")
        if np.any(arrays[1] <= 0) or np.any(arrays[3] <= 0) or np.any(arrays[4] <= 0):
            raise InvalidInputError("wind speed and direction variability must be positive")
        for name, a in zip(WIND_CSV_HEADER, arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.t.size

    def __eq__(self, other):
        if not isinstance(other, WindRecord):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in WIND_CSV_HEADER)

    def subset(self, index):
        return WindRecord(*(getattr(self, f)[index] for f in WIND_CSV_HEADER))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(WIND_CSV_HEADER)
            for row in zip(*(getattr(self, f) for f in WIND_CSV_HEADER)):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        from plumeinv.sensing import read_numeric_csv

        cols = read_numeric_csv(path, WIND_CSV_HEADER)
        return cls(*(cols[f] for f in WIND_CSV_HEADER))


@dataclass(frozen=True)
class WindScenario:
    """Settings for a synthetic wind record.

    Attributes:
        speed_mean, speed_std, speed_rate: OU settings for wind speed (m/s, 1/s).
        direction_mean: centre of the direction range (degrees).
        coverage: width of the direction range (degrees), in (0, 360].
        direction_std, direction_rate: OU settings before rescaling to ``coverage``.
        gamma_v_mean: target mean of the vertical variability series (rad).
        duration, dt: record length and step (s).
        window: rolling-window length for the variability series (s).
    """

    speed_mean: float = 6.0
    speed_std: float = 0.5
    speed_rate: float = 0.1
    direction_mean: float = 0.0
    coverage: float = 140.0
    direction_std: float = 30.0
    direction_rate: float = 0.05
    gamma_v_mean: float = 0.1
    vertical_std: float = 5.0
    vertical_rate: float = 0.2
    duration: float = 100.0
    dt: float = 1.0
    window: float = 60.0


def synthesize_wind(scenario: WindScenario, seed=None) -> WindRecord:
    """Simulate a wind record whose direction spans exactly ``coverage`` degrees.

    Speed and direction are independent OU paths. The direction path is
    affinely rescaled so its range is ``[mean - coverage/2, mean + coverage/2]``.
    Vertical variability is synthetic: the rolling spread of a third,
    independent OU path rescaled to the configured mean.
    """
    if not 0 < scenario.coverage <= 360:
        raise ConfigError(f"direction coverage must lie in (0, 360], got {scenario.coverage}")
    n = int(round(scenario.duration / scenario.dt))
    if n < 2:
        raise ConfigError("wind record needs at least two samples")
    seeds = np.random.SeedSequence(seed).spawn(3)
    dt = scenario.dt
    speed = simulate_ou(OUParams(scenario.speed_mean, scenario.speed_std, scenario.speed_rate, dt), n, seeds[0])
    speed = np.maximum(speed, SPEED_FLOOR)

    raw = simulate_ou(OUParams(0.0, scenario.direction_std, scenario.direction_rate, dt), n, seeds[1])
    span = raw.max() - raw.min()
    unit = (raw - raw.min()) / span if span > 0 else np.full(n, 0.5)
    direction = scenario.direction_mean + scenario.coverage * (unit - 0.5)

    gamma_h = clip_gamma(rolling_direction_std(direction, scenario.window, dt))
    vert = simulate_ou(OUParams(0.0, scenario.vertical_std, scenario.vertical_rate, dt), n, seeds[2])
    spread = rolling_direction_std(vert, scenario.window, dt)
    if spread.mean() > 0:
        spread = spread * (scenario.gamma_v_mean / spread.mean())
    else:
        spread = np.full(n, scenario.gamma_v_mean)
    gamma_v = clip_gamma(spread)
    t = np.arange(n) * dt
    return WindRecord(t, speed, direction, gamma_h, gamma_v)

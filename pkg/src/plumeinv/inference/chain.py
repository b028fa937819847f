"""M-MALA-within-Gibbs chain: state, trace and driver.

Each iteration updates, in order, the M-MALA block theta (emission rates,
locations and free dispersion parameters), the per-sensor backgrounds and
the noise variance. All randomness comes from a single seeded numpy
generator whose state is stored in checkpoints, so a resumed chain
reproduces an uninterrupted one exactly.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jax.numpy as jnp
import numpy as np

from plumeinv.errors import InferenceError
from plumeinv.inference.gibbs import draw_beta, draw_sigma2
from plumeinv.inference.init import InitConfig, initialize
from plumeinv.inference.mmala import METRIC_FLOOR, StepSizeAdapter, grad_and_metric, mmala_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 2000
    burn_in: int = 1000
    seed: int = 0
    step_size: float = 1.0
    target_accept: float = 0.57
    adapt_window: int = 1
    adapt_gain: float = 1.0
    metric_floor: float = METRIC_FLOOR

    def __post_init__(self):
        if self.n_iter < 1 or not 0 <= self.burn_in < self.n_iter:
            raise ValueError(f"need n_iter >= 1 and 0 <= burn_in < n_iter (got {self.n_iter}, {self.burn_in})")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")


@dataclass
class ChainState:
    """Current values of every sampled quantity.

    ``theta`` is in unconstrained coordinates; ``beta`` holds one background
    per sensor (expanded over time by the model).
    """

    theta: np.ndarray
    sigma2: float
    beta: np.ndarray
    step_size: float
    iteration: int = 0

    def to_dict(self):
        return {"theta": self.theta.tolist(), "sigma2": self.sigma2, "beta": self.beta.tolist(),
                "step_size": self.step_size, "iteration": self.iteration}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.asarray(doc["theta"], dtype=float), float(doc["sigma2"]),
                   np.asarray(doc["beta"], dtype=float), float(doc["step_size"]), int(doc["iteration"]))


@dataclass
class Trace:
    """Stored chain history; ``theta`` is on the constrained scale."""

    names: tuple
    sensor_ids: tuple
    theta: np.ndarray
    sigma2: np.ndarray
    beta: np.ndarray
    log_posterior: np.ndarray
    log_likelihood: np.ndarray
    accepted: np.ndarray
    accept_prob: np.ndarray
    step_size: np.ndarray
    metric_fallbacks: int = 0
    burn_in: int = 0

    def __len__(self):
        return self.theta.shape[0]

    def column(self, name):
        return self.theta[:, self.names.index(name)]

    def post_burn_in(self, burn_in=None):
        b = self.burn_in if burn_in is None else burn_in
        return self.slice(slice(b, None))

    def slice(self, sl):
        return Trace(self.names, self.sensor_ids, self.theta[sl], self.sigma2[sl], self.beta[sl],
                     self.log_posterior[sl], self.log_likelihood[sl], self.accepted[sl],
                     self.accept_prob[sl], self.step_size[sl], self.metric_fallbacks, 0)

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted)) if len(self) else float("nan")

    @staticmethod
    def concatenate(first, second):
        out = Trace(first.names, first.sensor_ids,
                    *(np.concatenate([getattr(first, f), getattr(second, f)]) for f in _ARRAY_FIELDS),
                    metric_fallbacks=first.metric_fallbacks + second.metric_fallbacks,
                    burn_in=first.burn_in)
        return out

    def header(self):
        return (["iteration", *self.names, "sigma2", *(f"beta_{s}" for s in self.sensor_ids),
                 "log_posterior", "log_likelihood", "accepted", "accept_prob", "step_size"])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for i in range(len(self)):
                row = [i, *(repr(float(v)) for v in self.theta[i]), repr(float(self.sigma2[i])),
                       *(repr(float(v)) for v in self.beta[i]), repr(float(self.log_posterior[i])),
                       repr(float(self.log_likelihood[i])), int(self.accepted[i]),
                       repr(float(self.accept_prob[i])), repr(float(self.step_size[i]))]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, n_params, burn_in=0):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.asarray([[float(v) for v in r] for r in reader if r], dtype=float)
        names = tuple(header[1:1 + n_params])
        beta_cols = [h for h in header if h.startswith("beta_")]
        sensor_ids = tuple(h[len("beta_"):] for h in beta_cols)
        nb = len(beta_cols)
        rows = rows.reshape(-1, len(header))
        c = 1 + n_params
        return cls(names, sensor_ids, rows[:, 1:c], rows[:, c], rows[:, c + 1:c + 1 + nb],
                   rows[:, c + 1 + nb], rows[:, c + 2 + nb], rows[:, c + 3 + nb].astype(bool),
                   rows[:, c + 4 + nb], rows[:, c + 5 + nb], burn_in=burn_in)


_ARRAY_FIELDS = ("theta", "sigma2", "beta", "log_posterior", "log_likelihood", "accepted",
                 "accept_prob", "step_size")


class _ThetaTarget:
    """The theta full conditional at fixed backgrounds and noise variance."""

    def __init__(self, model, beta_sensor, sigma2):
        self.model = model
        self.beta_obs = jnp.asarray(model.expand_beta(beta_sensor))
        self.sigma2 = float(sigma2)

    def value_and_grad(self, theta):
        return self.model.value_and_grad(theta, self.beta_obs, self.sigma2)

    def hessian(self, theta):
        return self.model.hessian(theta, self.beta_obs, self.sigma2)


class Sampler:
    """Resumable M-MALA-within-Gibbs sampler for one :class:`InversionModel`."""

    def __init__(self, model, config: ChainConfig, state: ChainState, rng=None, adapter=None):
        self.model = model
        self.config = config
        self.state = state
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.adapter = adapter or StepSizeAdapter(
            state.step_size, config.burn_in, config.adapt_window, config.target_accept, config.adapt_gain)
        self.fallbacks = 0

    @classmethod
    def start(cls, model, config: ChainConfig, init: Optional[InitConfig] = None, state=None):
        """Seeded sampler, initialised by grid search + Latin hypercube unless ``state`` is given."""
        rng = np.random.default_rng(config.seed)
        if state is None:
            init = init or InitConfig(step_size=config.step_size)
            theta, beta, sigma2 = initialize(model, init, rng)
            state = ChainState(theta, sigma2, beta, config.step_size)
        lp = model.log_posterior(state.theta, state.beta, state.sigma2)
        if not math.isfinite(lp):
            raise InferenceError(f"log posterior is not finite at the initial state: {state.to_dict()}")
        return cls(model, config, state, rng)

    def step(self):
        """One sweep: M-MALA on theta, then backgrounds, then noise variance."""
        model, st, rng = self.model, self.state, self.rng
        target = _ThetaTarget(model, st.beta, st.sigma2)
        geom = grad_and_metric(target, st.theta, self.config.metric_floor)
        self.fallbacks += int(geom.fallback)
        new, accepted, prob = mmala_step(target, geom, st.step_size, rng, self.config.metric_floor)
        self.fallbacks += int(accepted and new.fallback)
        theta = new.theta
        signal = model.signal(theta)
        beta = draw_beta(model.d - signal, model.sensor_index, model.n_sensors, st.sigma2,
                         model.beta_mean, model.beta_var, rng)
        resid = model.d - beta[model.sensor_index] - signal
        sigma2 = draw_sigma2(resid, model.priors.sigma2_shape, model.priors.sigma2_scale, rng)
        used_step = st.step_size
        step = self.adapter.update(prob)
        self.state = ChainState(theta, sigma2, beta, step, st.iteration + 1)
        loglik = model.log_likelihood(theta, beta, sigma2, signal=signal)
        logpost = loglik + model.log_prior(theta, beta, sigma2)
        return accepted, prob, used_step, loglik, logpost, signal

    def run(self, n_iter=None, progress_every=0) -> Trace:
        n_iter = self.config.n_iter - self.state.iteration if n_iter is None else n_iter
        lay = self.model.layout
        rec = {f: [] for f in _ARRAY_FIELDS}
        start_fallbacks = self.fallbacks
        for i in range(n_iter):
            accepted, prob, used_step, loglik, logpost, _ = self.step()
            st = self.state
            rec["theta"].append(lay.to_constrained(st.theta))
            rec["sigma2"].append(st.sigma2)
            rec["beta"].append(st.beta)
            rec["log_posterior"].append(logpost)
            rec["log_likelihood"].append(loglik)
            rec["accepted"].append(accepted)
            rec["accept_prob"].append(prob)
            rec["step_size"].append(used_step)
            if progress_every and (i + 1) % progress_every == 0:
                recent = np.mean(rec["accepted"][-progress_every:])
                log.info("iteration %d: acceptance %.2f, step %.3g", st.iteration, recent, st.step_size)
        arrays = {f: np.asarray(v) for f, v in rec.items()}
        if n_iter == 0:
            arrays["theta"] = np.zeros((0, lay.size))
            arrays["beta"] = np.zeros((0, self.model.n_sensors))
        return Trace(lay.constrained_names, tuple(self.model.obs.sensor_ids),
                     arrays["theta"], arrays["sigma2"], arrays["beta"], arrays["log_posterior"],
                     arrays["log_likelihood"], arrays["accepted"].astype(bool), arrays["accept_prob"],
                     arrays["step_size"], self.fallbacks - start_fallbacks, self.config.burn_in)

    def checkpoint(self):
        return {"state": self.state.to_dict(), "rng": self.rng.bit_generator.state,
                "adapter": self.adapter.state_dict(), "fallbacks": self.fallbacks}

    def save_checkpoint(self, path):
        Path(path).write_text(json.dumps(self.checkpoint(), indent=1))

    @classmethod
    def resume(cls, model, config: ChainConfig, checkpoint):
        if isinstance(checkpoint, (str, Path)):
            checkpoint = json.loads(Path(checkpoint).read_text())
        rng = np.random.default_rng()
        rng.bit_generator.state = checkpoint["rng"]
        adapter = StepSizeAdapter.from_state(checkpoint["adapter"])
        obj = cls(model, config, ChainState.from_dict(checkpoint["state"]), rng, adapter)
        obj.fallbacks = int(checkpoint.get("fallbacks", 0))
        return obj


def run_chain(model, config: ChainConfig, init: Optional[InitConfig] = None, state=None) -> Trace:
    """Initialise (unless ``state`` is given) and run a full chain."""
    return Sampler.start(model, config, init, state).run()

"""Manifold MALA with a Hessian metric.

The metric is the negative Hessian of the log density with its eigenvalues
clamped from below, evaluated at the current point only (no metric-derivative
drift). The proposal is therefore asymmetric and both proposal densities
enter the acceptance ratio.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

METRIC_FLOOR = 1e-6
TARGET_ACCEPT = 0.57


@dataclass(frozen=True)
class LocalGeometry:
    """Log density, gradient and metric at one point."""

    theta: np.ndarray
    logp: float
    grad: np.ndarray
    metric: np.ndarray
    chol: np.ndarray  # lower Cholesky factor of ``metric``
    fallback: bool = False

    @property
    def finite(self):
        return math.isfinite(self.logp) and bool(np.all(np.isfinite(self.grad)))

    def natural_gradient(self):
        return cho_solve((self.chol, True), self.grad)


class CallableTarget:
    """Adapter turning plain functions into an M-MALA target."""

    def __init__(self, value_and_grad, hessian):
        self.value_and_grad = value_and_grad
        self.hessian = hessian


def regularised_metric(hessian, floor=METRIC_FLOOR):
    """Symmetric positive-definite metric from a Hessian of the log density."""
    neg = -0.5 * (hessian + hessian.T)
    vals, vecs = np.linalg.eigh(neg)
    vals = np.maximum(vals, floor)
    metric = (vecs * vals) @ vecs.T
    return 0.5 * (metric + metric.T)


def grad_and_metric(target, theta, floor=METRIC_FLOOR) -> LocalGeometry:
    """Gradient and clamped negative-Hessian metric of ``target`` at ``theta``.

    Falls back to the identity metric (``fallback=True``) when the Hessian is
    non-finite or the clamped metric cannot be factorised.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    logp, grad = target.value_and_grad(theta)
    logp = float(logp)
    grad = np.asarray(grad, dtype=float)
    eye = np.eye(n)
    if not (math.isfinite(logp) and np.all(np.isfinite(grad))):
        return LocalGeometry(theta, -math.inf, grad, eye, eye, fallback=False)
    try:
        hess = np.asarray(target.hessian(theta), dtype=float)
        if not np.all(np.isfinite(hess)):
            raise np.linalg.LinAlgError("non-finite Hessian")
        metric = regularised_metric(hess, floor)
        chol = np.linalg.cholesky(metric)
    except np.linalg.LinAlgError:
        return LocalGeometry(theta, logp, grad, eye, eye, fallback=True)
    return LocalGeometry(theta, logp, grad, metric, chol)


def proposal_mean(geom: LocalGeometry, step):
    return geom.theta + 0.5 * step * geom.natural_gradient()


def proposal_logpdf(x, geom: LocalGeometry, step):
    """log N(x; theta + step/2 G^-1 grad, step G^-1) with G the metric at ``geom``."""
    diff = np.asarray(x) - proposal_mean(geom, step)
    n = diff.size
    half_logdet = float(np.sum(np.log(np.diag(geom.chol))))
    w = geom.chol.T @ diff
    return half_logdet - 0.5 * n * math.log(2.0 * math.pi * step) - 0.5 * float(w @ w) / step


def mmala_step(target, geom: LocalGeometry, step, rng, floor=METRIC_FLOOR):
    """One Metropolis-Hastings step with the manifold Langevin proposal.

    Returns:
        (geometry at the new state, accepted, acceptance probability)
    """
    z = rng.standard_normal(geom.theta.size)
    log_u = math.log(rng.uniform())
    if not geom.finite:
        return geom, False, 0.0
    proposal = proposal_mean(geom, step) + math.sqrt(step) * solve_triangular(geom.chol.T, z, lower=False)
    if not np.all(np.isfinite(proposal)):
        return geom, False, 0.0
    new = grad_and_metric(target, proposal, floor)
    if not new.finite:
        return geom, False, 0.0
    log_ratio = (new.logp - geom.logp
                 + proposal_logpdf(geom.theta, new, step)
                 - proposal_logpdf(proposal, geom, step))
    if not math.isfinite(log_ratio):
        return geom, False, 0.0
    accept_prob = math.exp(min(0.0, log_ratio))
    if log_u < log_ratio:
        return new, True, accept_prob
    return geom, False, accept_prob


def adapt_step_size(step, accept_window, iteration, target=TARGET_ACCEPT, gain=1.0, decay=0.6):
    """Robbins-Monro update of the step size on the log scale.

    ``accept_window`` holds recent acceptance probabilities (or indicators);
    the step grows when their mean exceeds ``target`` and shrinks otherwise,
    with a gain decaying as ``iteration ** -decay``.
    """
    rate = float(np.mean(accept_window))
    return step * math.exp(gain * (max(iteration, 1) ** -decay) * (rate - target))


class StepSizeAdapter:
    """Stateful wrapper around :func:`adapt_step_size`, frozen after burn-in."""

    def __init__(self, step, burn_in, window=1, target=TARGET_ACCEPT, gain=1.0, decay=0.6):
        self.step = float(step)
        self.burn_in = int(burn_in)
        self.window = int(window)
        self.target = target
        self.gain = gain
        self.decay = decay
        self.history = []
        self.iteration = 0

    @property
    def frozen(self):
        return self.iteration >= self.burn_in

    def update(self, accept_prob):
        self.iteration += 1
        if self.iteration > self.burn_in:
            return self.step
        self.history.append(float(accept_prob))
        self.history = self.history[-self.window:]
        self.step = adapt_step_size(self.step, self.history, self.iteration, self.target, self.gain, self.decay)
        return self.step

    def state_dict(self):
        return {"step": self.step, "burn_in": self.burn_in, "window": self.window, "target": self.target,
                "gain": self.gain, "decay": self.decay, "history": list(self.history),
                "iteration": self.iteration}

    @classmethod
    def from_state(cls, state):
        obj = cls(state["step"], state["burn_in"], state["window"], state["target"], state["gain"], state["decay"])
        obj.history = list(state["history"])
        obj.iteration = int(state["iteration"])
        return obj

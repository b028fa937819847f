"""Posterior summaries, effective sample size and model-comparison scores."""

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np
from scipy.stats import gaussian_kde

QUANTILES = (2.5, 25.0, 50.0, 75.0, 97.5)


def effective_sample_size(x) -> float:
    """ESS from the autocorrelation sum truncated by Geyer's initial monotone sequence."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = xc @ xc / n
    if var <= 0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (n * var)
    # sums of adjacent autocorrelation pairs, kept while positive and non-increasing
    total = 0.0
    prev = math.inf
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = max(2.0 * total - 1.0, 1e-12)
    return float(min(n / tau, n))


@dataclass
class ParameterSummary:
    name: str
    mean: float
    median: float
    sd: float
    q2_5: float
    q25: float
    q75: float
    q97_5: float
    ess: float

    def covers(self, value):
        return self.q2_5 <= value <= self.q97_5


@dataclass
class Summary:
    parameters: Dict[str, ParameterSummary]
    n_samples: int
    acceptance_rate: float
    metric_fallbacks: int = 0
    misspecification_flag: bool = False
    bic: Optional[float] = None
    rmse: Optional[float] = None

    def __getitem__(self, name):
        return self.parameters[name]

    def to_rows(self):
        return [asdict(p) for p in self.parameters.values()]

    def to_csv(self, path):
        rows = self.to_rows()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            for r in rows:
                writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})

    def to_json(self, path):
        doc = {
            "n_samples": self.n_samples,
            "acceptance_rate": self.acceptance_rate,
            "metric_fallbacks": self.metric_fallbacks,
            "misspecification_flag": self.misspecification_flag,
            "bic": self.bic,
            "rmse": self.rmse,
            "parameters": self.to_rows(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def summarize_samples(name, x) -> ParameterSummary:
    x = np.asarray(x, dtype=float)
    q = np.percentile(x, QUANTILES)
    return ParameterSummary(name, float(x.mean()), float(q[2]), float(x.std()), float(q[0]), float(q[1]),
                            float(q[3]), float(q[4]), effective_sample_size(x))


def summarize(trace, burn_in=None) -> Summary:
    """Posterior summaries over the samples after ``burn_in``.

    Covers every M-MALA parameter, the noise variance and each sensor's
    background. Quantiles are permutation invariant; ESS is not.
    """
    b = trace.burn_in if burn_in is None else burn_in
    if not 0 <= b < len(trace):
        raise ValueError(f"burn-in {b} leaves no samples out of {len(trace)}")
    post = trace.slice(slice(b, None))
    params = {}
    for i, name in enumerate(trace.names):
        params[name] = summarize_samples(name, post.theta[:, i])
    params["sigma2"] = summarize_samples("sigma2", post.sigma2)
    for j, sid in enumerate(trace.sensor_ids):
        params[f"beta_{sid}"] = summarize_samples(f"beta_{sid}", post.beta[:, j])
    flag = False
    if "b_H" in trace.names and "b_V" in trace.names:
        flag = bool(params["b_H"].mean > 1 or params["b_V"].mean > 1)
    return Summary(params, len(post), post.acceptance_rate, trace.metric_fallbacks, flag)


def parameter_count(n_theta, n_sensors):
    """Free parameters for BIC: the M-MALA block, the noise variance and one background per sensor."""
    return n_theta + 1 + n_sensors


def bic_value(max_loglik, k, n_obs):
    return k * math.log(n_obs) - 2.0 * max_loglik


def bic(trace, n_obs, k) -> float:
    """k ln(n_obs) - 2 max log-likelihood over the trace (priors excluded)."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    n_obs = getattr(n_obs, "n_obs", n_obs)
    return bic_value(float(np.max(trace.log_likelihood)), k, n_obs)


def rmse_value(d, d_hat) -> float:
    d = np.asarray(d, dtype=float)
    return float(np.sqrt(np.mean((d - np.asarray(d_hat, dtype=float)) ** 2)))


def posterior_mean_prediction(trace, model, burn_in=None):
    """A(theta_bar) s_bar + beta_bar with every quantity at its posterior mean."""
    b = trace.burn_in if burn_in is None else burn_in
    post = trace.slice(slice(b, None))
    theta = model.layout.to_unconstrained(post.theta.mean(axis=0))
    return model.signal(theta) + model.expand_beta(post.beta.mean(axis=0))


def rmse(trace, model, burn_in=None) -> float:
    """Root-mean-square residual of the posterior-mean fit in PPM."""
    return rmse_value(model.d, posterior_mean_prediction(trace, model, burn_in))


def box_whisker_rows(samples, label, run=""):
    """Quartiles and Tukey whiskers (furthest samples within 1.5 IQR) for a box plot."""
    x = np.asarray(samples, dtype=float)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    inside = x[(x >= q1 - 1.5 * iqr) & (x <= q3 + 1.5 * iqr)]
    return {
        "run": run,
        "parameter": label,
        "whisker_low": float(inside.min()),
        "q25": float(q1),
        "median": float(med),
        "q75": float(q3),
        "whisker_high": float(inside.max()),
        "mean": float(x.mean()),
    }


BOX_FIELDS = ("run", "parameter", "whisker_low", "q25", "median", "q75", "whisker_high", "mean")


def write_box_whisker(path, trace, run="", burn_in=None, truth=None):
    b = trace.burn_in if burn_in is None else burn_in
    post = trace.slice(slice(b, None))
    rows = [box_whisker_rows(post.theta[:, i], n, run) for i, n in enumerate(trace.names)]
    rows.append(box_whisker_rows(post.sigma2, "sigma2", run))
    with open(path, "w", newline="") as fh:
        fields = list(BOX_FIELDS) + (["truth"] if truth is not None else [])
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            if truth is not None:
                r["truth"] = truth.get(r["parameter"], "")
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return rows


def location_density_grid(trace, x_name="x", y_name="y", n=60, burn_in=None, pad=0.1):
    """Kernel density of the posterior source location on an n x n grid.

    Returns:
        (xs, ys, density) with density[i, j] at (xs[j], ys[i]).
    """
    b = trace.burn_in if burn_in is None else burn_in
    post = trace.slice(slice(b, None))
    x, y = post.column(x_name), post.column(y_name)
    span_x = max(x.max() - x.min(), 1e-9)
    span_y = max(y.max() - y.min(), 1e-9)
    xs = np.linspace(x.min() - pad * span_x, x.max() + pad * span_x, n)
    ys = np.linspace(y.min() - pad * span_y, y.max() + pad * span_y, n)
    gx, gy = np.meshgrid(xs, ys)
    try:
        kde = gaussian_kde(np.vstack([x, y]))
        dens = kde(np.vstack([gx.ravel(), gy.ravel()])).reshape(n, n)
    except (np.linalg.LinAlgError, ValueError):
        # too few distinct samples for a kernel estimate: bin them instead
        dx, dy = xs[1] - xs[0], ys[1] - ys[0]
        ex = np.concatenate([xs - 0.5 * dx, [xs[-1] + 0.5 * dx]])
        ey = np.concatenate([ys - 0.5 * dy, [ys[-1] + 0.5 * dy]])
        counts, _, _ = np.histogram2d(y, x, bins=[ey, ex])
        dens = counts / (counts.sum() * dx * dy)
    return xs, ys, dens


def write_density_grid(path, trace, **kw):
    xs, ys, dens = location_density_grid(trace, **kw)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "density"])
        for i, yv in enumerate(ys):
            for j, xv in enumerate(xs):
                writer.writerow([repr(float(xv)), repr(float(yv)), repr(float(dens[i, j]))])

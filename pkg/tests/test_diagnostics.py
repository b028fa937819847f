import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import gaussian_mle_loglik
from plumeinv import diagnostics
from plumeinv.inference import Trace


def _trace(theta, names=("s", "x", "y"), n_sensors=2, loglik=None, burn_in=0, seed=0):
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    rng = np.random.default_rng(seed)
    return Trace(tuple(names), tuple(f"P{j}" for j in range(n_sensors)), theta,
                 rng.uniform(1e-6, 2e-6, n), rng.normal(1.93, 0.01, (n, n_sensors)),
                 np.zeros(n), np.zeros(n) if loglik is None else np.asarray(loglik, dtype=float),
                 np.arange(n) % 2 == 0, np.full(n, 0.5), np.ones(n), burn_in=burn_in)


# ------------------------------------------------------------------- BIC


def test_bic_formula():
    assert diagnostics.bic_value(-10.0, 3, 100) == pytest.approx(3 * math.log(100) + 20.0)
    assert diagnostics.parameter_count(7, 36) == 44


def test_bic_uses_trace_maximum():
    tr = _trace(np.zeros((4, 3)), loglik=[-5.0, -2.0, -7.0, -3.0])
    assert diagnostics.bic(tr, 50, 6) == pytest.approx(6 * math.log(50) + 4.0)

    class Obs:
        n_obs = 50

    assert diagnostics.bic(tr, Obs(), 6) == diagnostics.bic(tr, 50, 6)
    with pytest.raises(ValueError):
        diagnostics.bic(tr.slice(slice(0, 0)), 50, 6)


def test_bic_matches_linear_gaussian_closed_form(rng):
    n = 200
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.normal(size=n)])
    y = X @ [1.0, 2.0, -0.5] + rng.normal(0, 0.3, n)
    ll, _, rss = gaussian_mle_loglik(y, X)
    k = 4  # three coefficients and the variance
    closed = n * math.log(rss / n) + n * (math.log(2 * math.pi) + 1) + k * math.log(n)
    assert diagnostics.bic_value(ll, k, n) == pytest.approx(closed, rel=1e-12)


def test_bic_prefers_the_true_model(rng):
    n = 300
    x = rng.normal(size=n)
    y = 1.0 + 0.8 * x + rng.normal(0, 0.5, n)
    X1 = np.column_stack([np.ones(n), x])
    X2 = np.column_stack([X1, rng.normal(size=(n, 3))])
    b1 = diagnostics.bic_value(gaussian_mle_loglik(y, X1)[0], 3, n)
    b2 = diagnostics.bic_value(gaussian_mle_loglik(y, X2)[0], 6, n)
    assert b1 < b2


# ------------------------------------------------------------------ RMSE


def test_rmse_examples():
    d = np.array([1.0, 2.0, 3.0])
    assert diagnostics.rmse_value(d, d) == 0.0
    assert diagnostics.rmse_value(d, d + 0.25) == pytest.approx(0.25)
    assert diagnostics.rmse_value(d, d - 3.0) == pytest.approx(3.0)


def test_rmse_hand_fixture():
    d = np.array([2.0, 2.1, 1.9, 2.5, 3.0, 1.95, 2.2, 2.05, 2.4, 1.8])
    d_hat = np.array([2.0, 2.0, 2.0, 2.3, 3.2, 2.0, 2.0, 2.0, 2.4, 2.0])
    # squared errors: 0, .01, .01, .04, .04, .0025, .04, .0025, 0, .04 -> sum .185
    assert diagnostics.rmse_value(d, d_hat) == pytest.approx(math.sqrt(0.0185), rel=1e-12)


# ------------------------------------------------------------- summaries


def test_constant_trace_summary():
    tr = _trace(np.tile([1e-3, 50.0, 40.0], (20, 1)))
    s = diagnostics.summarize(tr)
    assert s["x"].mean == 50.0 and s["x"].sd == 0.0
    assert s["x"].q2_5 == s["x"].q97_5 == 50.0
    assert s["x"].ess == 20
    assert s.n_samples == 20 and s.acceptance_rate == 0.5
    assert set(s.parameters) == {"s", "x", "y", "sigma2", "beta_P0", "beta_P1"}


def test_iid_ess_close_to_sample_size(rng):
    x = rng.normal(size=20000)
    assert diagnostics.effective_sample_size(x) == pytest.approx(20000, rel=0.1)


def test_ar1_ess_matches_theory(rng):
    rho, n = 0.8, 100000
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    expected = n * (1 - rho) / (1 + rho)
    assert diagnostics.effective_sample_size(x) == pytest.approx(expected, rel=0.15)


@given(st.integers(0, 2**32 - 1))
def test_reversal_keeps_quantiles(seed):
    theta = np.random.default_rng(seed).normal(size=(50, 3))
    a = diagnostics.summarize(_trace(theta))
    b = diagnostics.summarize(_trace(theta[::-1]))
    for name in ("s", "x", "y"):
        for q in ("q2_5", "q25", "median", "q75", "q97_5"):
            assert getattr(a[name], q) == pytest.approx(getattr(b[name], q), rel=1e-12, abs=1e-15)
        assert a[name].mean == pytest.approx(b[name].mean, rel=1e-12, abs=1e-15)


def test_burn_in_is_respected_and_validated():
    theta = np.vstack([np.full((10, 3), 100.0), np.zeros((10, 3))])
    assert diagnostics.summarize(_trace(theta, burn_in=10))["x"].mean == 0.0
    with pytest.raises(ValueError):
        diagnostics.summarize(_trace(theta), burn_in=20)


def test_misspecification_flag():
    names = ("s", "x", "y", "a_H", "b_H", "a_V", "b_V")
    ok = np.tile([1e-3, 1, 1, 1, 0.8, 1, 0.8], (5, 1))
    bad = np.tile([1e-3, 1, 1, 1, 1.3, 1, 0.8], (5, 1))
    assert not diagnostics.summarize(_trace(ok, names)).misspecification_flag
    assert diagnostics.summarize(_trace(bad, names)).misspecification_flag


def test_covers():
    p = diagnostics.summarize_samples("x", np.linspace(0, 1, 1001))
    assert p.covers(0.5) and not p.covers(0.99)


# ---------------------------------------------------------------- outputs


def test_summary_files(tmp_path, rng):
    s = diagnostics.summarize(_trace(rng.normal(size=(30, 3))))
    s.bic, s.rmse = 12.5, 0.01
    s.to_csv(tmp_path / "s.csv")
    s.to_json(tmp_path / "s.json")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert [r["name"] for r in rows][:3] == ["s", "x", "y"]
    assert float(rows[1]["mean"]) == pytest.approx(s["x"].mean, rel=1e-15)
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["bic"] == 12.5


def test_box_whisker_rows_use_tukey_whiskers():
    x = np.concatenate([np.arange(1.0, 11.0), [100.0]])
    row = diagnostics.box_whisker_rows(x, "x")
    assert row["whisker_high"] == 10.0 and row["whisker_low"] == 1.0
    assert row["median"] == 6.0


def test_box_whisker_file_with_truth(tmp_path, rng):
    tr = _trace(rng.normal(size=(40, 3)))
    diagnostics.write_box_whisker(tmp_path / "b.csv", tr, run="M", truth={"x": 0.0})
    rows = list(csv.DictReader(open(tmp_path / "b.csv")))
    assert [r["parameter"] for r in rows] == ["s", "x", "y", "sigma2"]
    assert rows[1]["truth"] == "0.0" and rows[0]["truth"] == ""
    assert all(r["run"] == "M" for r in rows)


def test_density_grid_integrates_to_about_one(tmp_path, rng):
    theta = np.column_stack([np.ones(2000), rng.normal(50, 1, 2000), rng.normal(40, 2, 2000)])
    xs, ys, dens = diagnostics.location_density_grid(_trace(theta), n=80, pad=0.5)
    mass = dens.sum() * (xs[1] - xs[0]) * (ys[1] - ys[0])
    assert mass == pytest.approx(1.0, abs=0.05)
    i, j = np.unravel_index(np.argmax(dens), dens.shape)
    assert abs(xs[j] - 50) < 1 and abs(ys[i] - 40) < 2
    diagnostics.write_density_grid(tmp_path / "d.csv", _trace(theta), n=10)
    assert len(list(csv.DictReader(open(tmp_path / "d.csv")))) == 100


def test_density_grid_survives_identical_samples():
    theta = np.tile([1e-3, 50.0, 40.0], (5, 1))
    xs, ys, dens = diagnostics.location_density_grid(_trace(theta), n=11)
    assert np.all(np.isfinite(dens))
    assert dens.sum() * (xs[1] - xs[0]) * (ys[1] - ys[0]) == pytest.approx(1.0)

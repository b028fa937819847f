import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plumeinv.errors import ConfigError, InvalidInputError, StabilityError
from plumeinv.wind import (
    GAMMA_CEIL,
    GAMMA_FLOOR,
    OUParams,
    WindRecord,
    WindScenario,
    rolling_direction_std,
    simulate_ou,
    stationary_variance,
    synthesize_wind,
)


def test_unstable_step_rejected():
    with pytest.raises(StabilityError):
        simulate_ou(OUParams(0.0, 1.0, rate=1.0, dt=1.0), 10)
    with pytest.raises(StabilityError):
        simulate_ou(OUParams(0.0, 1.0, rate=0.5, dt=3.0), 10)


def test_invalid_ou_parameters():
    with pytest.raises(InvalidInputError):
        OUParams(0.0, -1.0, 0.1)
    with pytest.raises(InvalidInputError):
        OUParams(0.0, 1.0, 0.0)
    with pytest.raises(InvalidInputError):
        OUParams(np.nan, 1.0, 0.1)
    with pytest.raises(InvalidInputError):
        simulate_ou(OUParams(0.0, 1.0, 0.1), 0)


def test_ou_starts_at_initial_value():
    path = simulate_ou(OUParams(3.0, 1.0, 0.1), 5, seed=1, initial=7.5)
    assert path[0] == 7.5
    assert simulate_ou(OUParams(3.0, 1.0, 0.1), 1, seed=1)[0] == 3.0


def test_ou_recursion_matches_explicit_loop():
    p = OUParams(2.0, 0.7, 0.15, 0.5)
    path = simulate_ou(p, 200, seed=4, initial=1.0)
    noise = np.random.default_rng(4).standard_normal(199) * p.std * math.sqrt(2 * p.dt * p.rate)
    eta = [1.0 - p.mean]
    for nu in noise:
        eta.append(eta[-1] - p.rate * p.dt * eta[-1] + nu)
    np.testing.assert_allclose(path, np.array(eta) + p.mean, rtol=0, atol=1e-12)


def test_ou_zero_noise_decays_to_mean():
    path = simulate_ou(OUParams(1.0, 0.0, 0.2), 200, seed=0, initial=5.0)
    assert path[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(path) <= 0)


def test_stationary_variance_limit():
    p = OUParams(0.0, 2.0, 0.01, 0.01)
    assert stationary_variance(p) == pytest.approx(4.0, rel=1e-4)
    assert stationary_variance(OUParams(0.0, 2.0, 0.5)) == pytest.approx(4.0 / 0.75)


def test_ou_sample_variance_close_to_stationary():
    p = OUParams(0.0, 1.5, 0.1)
    path = simulate_ou(p, 200_000, seed=3)
    assert path[1000:].var() == pytest.approx(stationary_variance(p), rel=0.05)


# ------------------------------------------------------- rolling variability


def test_rolling_std_constant_series_is_zero():
    np.testing.assert_array_equal(rolling_direction_std(np.full(50, 123.0), 10.0), 0.0)


def test_rolling_std_handles_north_wrap():
    wrapped = np.array([358.0, 2.0] * 30)
    flat = np.array([-2.0, 2.0] * 30)
    np.testing.assert_allclose(rolling_direction_std(wrapped, 10.0), rolling_direction_std(flat, 10.0), atol=1e-12)
    assert rolling_direction_std(wrapped, 10.0)[30] == pytest.approx(math.radians(2.0), rel=1e-3)


def test_rolling_std_matches_brute_force(rng):
    d = np.cumsum(rng.normal(0, 3, 80))
    got = rolling_direction_std(d, window=7.0, dt=1.0)
    for i in (0, 3, 40, 79):
        lo, hi = max(0, i - 3), min(80, i + 4)
        assert got[i] == pytest.approx(math.radians(d[lo:hi].std()), rel=1e-9)


def test_rolling_std_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        rolling_direction_std(np.array([]))
    with pytest.raises(InvalidInputError):
        rolling_direction_std(np.array([1.0, np.nan]))
    with pytest.raises(InvalidInputError):
        rolling_direction_std(np.ones(5), window=0.5, dt=1.0)


# -------------------------------------------------------------- synthesis


@given(st.floats(5.0, 360.0), st.integers(0, 2**32 - 1))
def test_direction_spans_exact_coverage(coverage, seed):
    rec = synthesize_wind(WindScenario(coverage=coverage, duration=120.0), seed=seed)
    assert rec.direction.max() - rec.direction.min() == pytest.approx(coverage, rel=1e-12)
    assert rec.direction.mean() == pytest.approx(0.0, abs=coverage / 2)
    assert np.all(rec.speed >= 0.1)
    assert np.all((rec.gamma_h >= GAMMA_FLOOR) & (rec.gamma_h <= GAMMA_CEIL))
    assert np.all((rec.gamma_v >= GAMMA_FLOOR) & (rec.gamma_v <= GAMMA_CEIL))


def test_vertical_variability_hits_target_mean():
    rec = synthesize_wind(WindScenario(gamma_v_mean=0.07, duration=600.0), seed=2)
    assert rec.gamma_v.mean() == pytest.approx(0.07, rel=1e-9)


@pytest.mark.parametrize("coverage", [0.0, -10.0, 361.0])
def test_coverage_out_of_range(coverage):
    with pytest.raises(ConfigError):
        synthesize_wind(WindScenario(coverage=coverage))


def test_wind_is_deterministic_per_seed():
    a = synthesize_wind(WindScenario(), seed=9)
    assert a == synthesize_wind(WindScenario(), seed=9)
    assert a != synthesize_wind(WindScenario(), seed=10)


def test_wind_csv_round_trip(tmp_path):
    rec = synthesize_wind(WindScenario(duration=50.0), seed=1)
    rec.to_csv(tmp_path / "wind.csv")
    assert WindRecord.from_csv(tmp_path / "wind.csv") == rec


def test_wind_record_validation():
    ok = np.ones(3)
    with pytest.raises(InvalidInputError):
        WindRecord(ok, ok, ok, ok, np.ones(2))
    with pytest.raises(InvalidInputError):
        WindRecord(ok, np.zeros(3), ok, ok, ok)
    with pytest.raises(InvalidInputError):
        WindRecord(ok, ok, np.array([1.0, np.inf, 1.0]), ok, ok)

import pytest

from plumeinv import experiments
from plumeinv.config import (
    CHILBOLTON_MODELS,
    FACTORS,
    ScenarioConfig,
    apply_scale,
)
from plumeinv.errors import ConfigError


def test_defaults_describe_level_m():
    cfg = ScenarioConfig()
    assert cfg.coverage == 140
    assert cfg.dispersion_truth == (1.0, 1.0, 1.0, 1.0)
    assert cfg.emission_rate == 0.00039
    assert cfg.layout == "grid"
    assert (cfg.source.x, cfg.source.y, cfg.source.z) == (50, 50, 5)
    assert cfg.atmosphere.gas_density == 0.656 and cfg.atmosphere.n_refl == 3


def test_level_lookup():
    cfg = ScenarioConfig().with_levels(wdc="L", ser="H", sl="L")
    assert cfg.coverage == 60 and cfg.emission_rate == 0.00078 and cfg.layout == "line"
    assert ScenarioConfig().with_levels(wdc="H").coverage == 360
    assert ScenarioConfig().with_levels(sl="H").layout == "s.line"


def test_yaml_round_trip(tmp_path):
    cfg = ScenarioConfig().updated(seed=7, sampler={"n_iter": 300, "burn_in": 100})
    cfg.save(tmp_path / "c.yaml")
    back = ScenarioConfig.load(tmp_path / "c.yaml")
    assert back == cfg and back.digest() == cfg.digest()
    assert back.digest() != ScenarioConfig().digest()


def test_partial_yaml_fills_defaults():
    cfg = ScenarioConfig.from_yaml("seed: 3\nlevels:\n  dts: H\n")
    assert cfg.seed == 3 and cfg.levels.dts == "H" and cfg.levels.wdc == "M"
    assert ScenarioConfig.from_yaml("") == ScenarioConfig()


@pytest.mark.parametrize("text, path", [
    ("sampler:\n  n_iter: -5\n", "sampler.n_iter"),
    ("levels:\n  wdc: X\n", "levels.wdc"),
    ("noise:\n  bogus: 1\n", "noise.bogus"),
    ("sampler:\n  n_iter: 10\n  burn_in: 20\n", "sampler"),
    ("source:\n  z: 5000\n", "<root>"),
])
def test_invalid_values_name_their_field(text, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        ScenarioConfig.from_yaml(text)


def test_yaml_syntax_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="YAML"):
        ScenarioConfig.from_yaml("a: [1, 2")
    with pytest.raises(ConfigError):
        ScenarioConfig.from_yaml("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "missing.yaml")


def test_estimating_briggs_is_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig().updated(inversion={"scheme": "Briggs", "estimate": True})
    ScenarioConfig().updated(inversion={"scheme": "Briggs", "estimate": False})


def test_main_effects_configs_are_thirteen_distinct():
    runs = experiments.main_effects_configs(ScenarioConfig())
    assert len(runs) == 13
    names = [n for n, _ in runs]
    assert names[0] == "M" and len(set(names)) == 13
    digests = {c.digest() for _, c in runs}
    assert len(digests) == 13
    for name, c in runs[1:]:
        factor, level = name.split("-")
        assert factor in FACTORS
        others = [f for f in FACTORS if f != factor]
        assert getattr(c.levels, factor) == level
        assert all(getattr(c.levels, f) == "M" for f in others)


def test_fourteen_field_models():
    assert len(CHILBOLTON_MODELS) == 14
    assert sum(m.startswith("briggs:") for m in CHILBOLTON_MODELS) == 6
    assert sum(m.startswith("smith:") for m in CHILBOLTON_MODELS) == 6
    assert {"est-smith", "est-draxler"} <= set(CHILBOLTON_MODELS)
    with pytest.raises(ConfigError):
        ScenarioConfig().updated(chilbolton={"models": ["briggs:Z"]})


def test_misspec_runs_cover_each_wrong_value():
    cfg = ScenarioConfig().updated(misspec={"wrong": {"a_H": [0.5, 2.0]}})
    runs = experiments.misspec_runs(cfg)
    assert [r[0] for r in runs] == ["truth", "est.", "a_H=0.5", "a_H=2"]
    assert runs[2][1] == (0.5, 0.8, 1.0, 0.8) and runs[1][1] is None


def test_scale_presets():
    cfg = ScenarioConfig()
    assert apply_scale(cfg, None) is cfg
    ci = apply_scale(cfg, "ci")
    assert (ci.sampler.n_iter, ci.sampler.burn_in) == (200, 100)
    full = apply_scale(cfg, "full")
    assert (full.sampler.n_iter, full.sampler.burn_in) == (20000, 10000)
    assert full.chilbolton.iterations[1] == (10000, 4000)
    assert full.chilbolton.iterations[2] == (5000, 1000)
    with pytest.raises(ConfigError):
        apply_scale(cfg, "huge")


def test_seed_derivation_is_stable_and_distinct():
    a = experiments.derive_seeds(0)
    assert a == experiments.derive_seeds(0)
    assert len(set(a)) == 3
    assert a != experiments.derive_seeds(1)

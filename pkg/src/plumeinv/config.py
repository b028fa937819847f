"""Run configuration: scenario factors, level tables, priors and sampler settings.

Configs are YAML files validated by pydantic. Every field has a default, so
an empty file describes the level-M scenario. Values marked "placeholder"
below are shipped defaults chosen for this package, not published ones.
"""

import hashlib
import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from plumeinv.errors import ConfigError

Level = Literal["L", "M", "H"]
FACTORS = ("wdc", "dpv", "ser", "dts", "ops", "sl")
LEVELS = ("L", "M", "H")
LAYOUTS = ("grid", "line", "s.line")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FactorLevels(_Strict):
    """The level of each of the six simulation factors."""

    wdc: Level = "M"
    dpv: Level = "M"
    ser: Level = "M"
    dts: Level = "M"
    ops: Level = "M"
    sl: Level = "M"


class LevelTables(_Strict):
    """Values behind each factor level.

    Published: WDC 60/140/360 degrees, the three DPV cases (a_H, b_H, a_V,
    b_V), SER 0.000195/0.00039/0.00078 kg/s, M levels of DTS (50 m) and OPS
    (100), the three layouts. Placeholders: DTS 25/100 m and OPS 50/200.
    """

    wdc: Dict[Level, float] = {"L": 60.0, "M": 140.0, "H": 360.0}
    dpv: Dict[Level, Tuple[float, float, float, float]] = {
        "L": (1.4, 0.9, 1.2, 0.95),
        "M": (1.0, 1.0, 1.0, 1.0),
        "H": (0.9, 0.8, 0.7, 0.85),
    }
    ser: Dict[Level, float] = {"L": 0.000195, "M": 0.00039, "H": 0.00078}
    dts: Dict[Level, float] = {"L": 25.0, "M": 50.0, "H": 100.0}
    ops: Dict[Level, int] = {"L": 50, "M": 100, "H": 200}
    sl: Dict[Level, Literal["grid", "line", "s.line"]] = {"L": "line", "M": "grid", "H": "s.line"}

    @model_validator(mode="after")
    def _complete(self):
        for name in FACTORS:
            table = getattr(self, name)
            missing = [lv for lv in LEVELS if lv not in table]
            if missing:
                raise ValueError(f"{name} table lacks levels {missing}")
        for lv, v in self.wdc.items():
            if not 0 < v <= 360:
                raise ValueError(f"wdc.{lv}: coverage must lie in (0, 360]")
        for lv, v in self.dpv.items():
            if min(v) <= 0:
                raise ValueError(f"dpv.{lv}: dispersion parameters must be positive")
        for name in ("ser", "dts", "ops"):
            for lv, v in getattr(self, name).items():
                if v <= 0:
                    raise ValueError(f"{name}.{lv}: must be positive")
        return self


class SourceConfig(_Strict):
    x: float = 50.0
    y: float = 50.0
    z: float = 5.0
    half_width: float = Field(0.0, ge=0)
    half_height: float = Field(0.0, ge=0)


class AtmosphereConfig(_Strict):
    abl_height: float = Field(1000.0, gt=0)
    n_refl: int = Field(3, ge=0)
    gas_density: float = Field(0.656, gt=0)


class WindConfig(_Strict):
    """OU wind settings; coverage and duration come from the WDC and OPS levels."""

    speed_mean: float = Field(6.0, gt=0)
    speed_std: float = Field(0.5, ge=0)
    speed_rate: float = Field(0.1, gt=0)
    direction_mean: float = 0.0
    direction_std: float = Field(30.0, gt=0)
    direction_rate: float = Field(0.05, gt=0)
    gamma_v_mean: float = Field(0.1, gt=0)
    vertical_std: float = Field(5.0, gt=0)
    vertical_rate: float = Field(0.2, gt=0)
    dt: float = Field(1.0, gt=0)
    window: float = Field(60.0, gt=0)


class SensorConfig(_Strict):
    """Layout geometry; sensors sit in the plane ``source.x + DTS``."""

    y_range: Tuple[float, float] = (20.0, 80.0)
    z_range: Tuple[float, float] = (1.0, 11.0)
    line_height: float = 5.0
    grid_shape: Tuple[int, int] = (6, 6)
    line_count: int = 36
    sparse_count: int = 6


class NoiseConfig(_Strict):
    noise_var: float = Field(1e-6, gt=0)
    background_mean: float = 1.93
    background_var: float = Field(1e-4, ge=0)


class PriorConfig(_Strict):
    """Prior hyperparameters (all placeholders).

    ``sigma2_scale`` defaults to 1e-6 so the Inv-Gamma prior is centred on
    the simulated noise level rather than dominating it.
    """

    sigma2_shape: float = Field(2.0, gt=0)
    sigma2_scale: float = Field(1e-6, gt=0)
    beta_mean: float = 1.93
    beta_var: float = Field(0.01, ge=0)
    log_rate_mean: float = math.log(1e-3)
    log_rate_sd: float = Field(2.0, gt=0)
    box: Tuple[float, float, float, float] = (0.0, 110.0, 0.0, 110.0)
    location_mean: Optional[Tuple[float, float]] = None
    location_sd: Optional[Tuple[float, float]] = None
    log_dispersion_mean: float = 0.0
    log_dispersion_sd: float = Field(1.0, gt=0)

    @field_validator("box")
    @classmethod
    def _box(cls, v):
        if not (v[1] > v[0] and v[3] > v[2]):
            raise ValueError("box must be (x_min, x_max, y_min, y_max) with max > min")
        return v


class SamplerConfig(_Strict):
    n_iter: int = Field(2000, ge=1)
    burn_in: int = Field(1000, ge=0)
    step_size: float = Field(1.0, gt=0)
    target_accept: float = Field(0.57, gt=0, lt=1)
    grid_points: int = Field(23, ge=2)
    rate_points: int = Field(51, ge=2)
    rate_bounds: Tuple[float, float] = (1e-6, 1e-1)
    lhs_samples: int = Field(256, ge=1)

    @model_validator(mode="after")
    def _burn(self):
        if self.burn_in >= self.n_iter:
            raise ValueError("burn_in must be smaller than n_iter")
        return self


class MisspecConfig(_Strict):
    """Bias study: truth and the wrong values each parameter is fixed at.

    The a values are 0.5x and 2x truth; the b values are placeholders.
    """

    truth: Tuple[float, float, float, float] = (1.0, 0.8, 1.0, 0.8)
    wrong: Dict[str, List[float]] = {
        "a_H": [0.5, 2.0],
        "b_H": [0.6, 1.0],
        "a_V": [0.5, 2.0],
        "b_V": [0.6, 1.0],
    }

    @field_validator("wrong")
    @classmethod
    def _names(cls, v):
        bad = set(v) - {"a_H", "b_H", "a_V", "b_V"}
        if bad:
            raise ValueError(f"unknown dispersion parameters {sorted(bad)}")
        if any(x <= 0 for vals in v.values() for x in vals):
            raise ValueError("misspecified values must be positive")
        return v


CHILBOLTON_MODELS = tuple(
    [f"briggs:{c}" for c in "ABCDEF"] + [f"smith:{c}" for c in "ABCDEF"] + ["est-smith", "est-draxler"]
)


class ChilboltonConfig(_Strict):
    """Field-data inversion.

    ``data_dir`` holds the intermediate CSV layout; when it is None a
    synthetic Chilbolton-like fixture is generated under the output
    directory. Iteration defaults follow the two single-source releases.
    """

    data_dir: Optional[str] = None
    release: Literal[1, 2] = 1
    models: List[str] = list(CHILBOLTON_MODELS)
    aggregation: float = Field(60.0, gt=0)
    source: SourceConfig = SourceConfig(x=0.0, y=0.0, z=0.0, half_width=1.0, half_height=0.0)
    box: Tuple[float, float, float, float] = (-40.0, 40.0, -40.0, 40.0)
    est_smith_class: Literal["A", "B", "C", "D", "E", "F"] = "B"
    iterations: Dict[int, Tuple[int, int]] = {1: (10000, 4000), 2: (5000, 1000)}

    @field_validator("models")
    @classmethod
    def _models(cls, v):
        bad = [m for m in v if m not in CHILBOLTON_MODELS]
        if bad:
            raise ValueError(f"unknown models {bad}; choose from {list(CHILBOLTON_MODELS)}")
        return v


class InversionConfig(_Strict):
    """Wind-sigma scheme used by the inversion.

    With ``estimate`` the Draxler parameters (or the Smith scale
    multipliers) are sampled; otherwise Draxler is held at the DPV truth and
    Smith/Briggs at the tabulated class.
    """

    scheme: Literal["Draxler", "Smith", "Briggs"] = "Draxler"
    asc_class: Literal["A", "B", "C", "D", "E", "F"] = "B"
    estimate: bool = True

    @model_validator(mode="after")
    def _estimable(self):
        if self.estimate and self.scheme == "Briggs":
            raise ValueError("Briggs coefficients cannot be estimated; set estimate: false")
        return self


class ScenarioConfig(_Strict):
    """Everything a command needs; see the module docstring."""

    name: str = "level-M"
    levels: FactorLevels = FactorLevels()
    tables: LevelTables = LevelTables()
    source: SourceConfig = SourceConfig()
    atmosphere: AtmosphereConfig = AtmosphereConfig()
    wind: WindConfig = WindConfig()
    sensors: SensorConfig = SensorConfig()
    noise: NoiseConfig = NoiseConfig()
    priors: PriorConfig = PriorConfig()
    sampler: SamplerConfig = SamplerConfig()
    misspec: MisspecConfig = MisspecConfig()
    chilbolton: ChilboltonConfig = ChilboltonConfig()
    inversion: InversionConfig = InversionConfig()
    seed: int = Field(0, ge=0)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _source_below_lid(self):
        if self.source.z >= self.atmosphere.abl_height:
            raise ValueError("source height must be below the boundary-layer height")
        return self

    # ---------------------------------------------------------- level values

    def level_value(self, factor):
        return getattr(self.tables, factor)[getattr(self.levels, factor)]

    @property
    def coverage(self):
        return self.level_value("wdc")

    @property
    def dispersion_truth(self):
        return tuple(self.level_value("dpv"))

    @property
    def emission_rate(self):
        return self.level_value("ser")

    @property
    def distance(self):
        return self.level_value("dts")

    @property
    def n_times(self):
        return int(self.level_value("ops"))

    @property
    def layout(self):
        return self.level_value("sl")

    def with_levels(self, **levels):
        return self.model_copy(update={"levels": self.levels.model_copy(update=levels)})

    def updated(self, **sections):
        """Copy with whole sections or nested fields replaced, re-validated."""
        doc = self.to_dict()
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(doc.get(key), dict):
                doc[key] = {**doc[key], **value}
            else:
                doc[key] = value
        return ScenarioConfig.from_dict(doc)

    # -------------------------------------------------------- serialization

    def to_dict(self):
        return self.model_dump(mode="json")

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_yaml())

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls.model_validate(doc or {})
        except ValidationError as exc:
            raise ConfigError(format_validation_error(exc)) from None

    @classmethod
    def from_yaml(cls, text):
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_yaml(text)


def format_validation_error(exc: ValidationError):
    """One line per problem, each prefixed with its dotted field path."""
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


# Sampler presets selected with --scale. "ci" keeps test runs short, "desk"
# runs on a laptop, "full" uses long production-length chains.
SCALE_PRESETS = {
    "ci": {"n_iter": 200, "burn_in": 100, "grid_points": 12, "rate_points": 31, "lhs_samples": 64},
    "desk": {"n_iter": 2000, "burn_in": 1000},
    "full": {"n_iter": 20000, "burn_in": 10000},
}

CHILBOLTON_PRESETS = {
    "ci": {1: (200, 100), 2: (200, 100)},
    "desk": {1: (2000, 1000), 2: (2000, 1000)},
    "full": {1: (10000, 4000), 2: (5000, 1000)},
}


def apply_scale(config: ScenarioConfig, scale: Optional[str]) -> ScenarioConfig:
    if scale is None:
        return config
    if scale not in SCALE_PRESETS:
        raise ConfigError(f"unknown scale {scale!r}; choose from {sorted(SCALE_PRESETS)}")
    sampler = config.sampler.model_copy(update=SCALE_PRESETS[scale])
    chil = config.chilbolton.model_copy(update={"iterations": CHILBOLTON_PRESETS[scale]})
    return config.model_copy(update={"sampler": sampler, "chilbolton": chil})

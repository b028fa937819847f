"""Reflected Gaussian plume forward model and wind-sigma parameterisations.

Wind direction convention: degrees counter-clockwise from east (mathematical
angle), giving the bearing the wind blows *towards*. A receptor at
``source + r * (cos(phi), sin(phi))`` is therefore directly downwind.

The array kernels at the bottom of the module take an ``xp`` argument
(``numpy`` or ``jax.numpy``) so that the same expressions are used for plain
evaluation and for automatic differentiation in the sampler.
"""

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from plumeinv.errors import ConfigError, DomainError, InvalidInputError

SIGMA_FLOOR = 1e-6
METHANE_DENSITY = 0.656  # kg/m^3 at 25 C and 1 atm
DISPERSION_SCHEMES = ("Draxler", "Smith", "Briggs")
ASC_CLASSES = ("A", "B", "C", "D", "E", "F")
DEFAULT_ASC_FILE = "asc_coefficients.json"


def _finite(*values):
    return all(np.all(np.isfinite(np.asarray(v, dtype=float))) for v in values)


@dataclass(frozen=True)
class SourceGeometry:
    """Emission source position and aperture.

    Attributes:
        location: (x, y, z) of the source in metres.
        height: release height H used in the reflection terms.
        half_width: horizontal aperture half-width w.
        half_height: vertical aperture half-height h.
    """

    location: Tuple[float, float, float]
    height: float
    half_width: float = 0.0
    half_height: float = 0.0

    def __post_init__(self):
        loc = tuple(float(v) for v in self.location)
        if len(loc) != 3 or not _finite(loc, self.height, self.half_width, self.half_height):
            raise InvalidInputError(f"source geometry must be finite 3-D: {self}")
        if self.height < 0 or self.half_width < 0 or self.half_height < 0:
            raise InvalidInputError("source height, half-width and half-height must be >= 0")
        object.__setattr__(self, "location", loc)

    @classmethod
    def at(cls, x, y, z=0.0, half_width=0.0, half_height=0.0):
        """Source at (x, y, z) releasing at height z."""
        return cls((x, y, z), height=z, half_width=half_width, half_height=half_height)

    def moved(self, x, y):
        """Same source relocated horizontally."""
        return SourceGeometry((x, y, self.location[2]), self.height, self.half_width, self.half_height)


@dataclass(frozen=True)
class AtmosphereSpec:
    abl_height: float = 1000.0
    n_refl: int = 3
    gas_density: float = METHANE_DENSITY

    def __post_init__(self):
        if not _finite(self.abl_height, self.gas_density) or self.abl_height <= 0:
            raise InvalidInputError("ABL height must be finite and positive")
        if int(self.n_refl) != self.n_refl or self.n_refl < 0:
            raise InvalidInputError("n_refl must be a non-negative integer")
        if self.gas_density <= 0:
            raise InvalidInputError("gas density must be positive")
        object.__setattr__(self, "n_refl", int(self.n_refl))

    def check_source(self, source: SourceGeometry):
        if not self.abl_height > source.height:
            raise InvalidInputError(
                f"ABL height {self.abl_height} must exceed release height {source.height}"
            )


@dataclass(frozen=True)
class DispersionSpec:
    """Which wind-sigma scheme is active and its parameters.

    ``draxler_params`` is ``(a_H, b_H, a_V, b_V)``. ``smith_scale`` holds
    ``(a_H, a_V)`` multipliers applied to a Smith class when those are being
    estimated rather than fixed.
    """

    scheme: str = "Draxler"
    draxler_params: Optional[Tuple[float, float, float, float]] = (1.0, 1.0, 1.0, 1.0)
    asc_class: Optional[str] = None
    smith_scale: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.scheme not in DISPERSION_SCHEMES:
            raise ConfigError(f"unknown dispersion scheme {self.scheme!r}")
        if self.scheme == "Draxler":
            params = tuple(float(p) for p in self.draxler_params)
            if len(params) != 4 or not _finite(params) or min(params) <= 0:
                raise ConfigError("Draxler parameters (a_H, b_H, a_V, b_V) must be positive")
            object.__setattr__(self, "draxler_params", params)
            if params[1] > 1 or params[3] > 1:
                warnings.warn(
                    "Draxler exponent b_H or b_V exceeds 1; this usually signals model misspecification",
                    stacklevel=3,
                )
        else:
            if self.asc_class not in ASC_CLASSES:
                raise ConfigError(f"unknown stability class {self.asc_class!r} for {self.scheme}")
            if self.smith_scale is not None:
                if self.scheme != "Smith":
                    raise ConfigError("scale multipliers are only supported for the Smith scheme")
                scale = tuple(float(p) for p in self.smith_scale)
                if len(scale) != 2 or min(scale) <= 0:
                    raise ConfigError("Smith scale multipliers must be two positive reals")
                object.__setattr__(self, "smith_scale", scale)

    @property
    def misspecification_flag(self):
        return self.scheme == "Draxler" and max(self.draxler_params[1], self.draxler_params[3]) > 1


@dataclass(frozen=True)
class ReceptorFrame:
    """Receptor coordinates in the wind-aligned frame of a source."""

    downwind: float
    crosswind: float
    vertical: float
    upwind: bool


# --------------------------------------------------------------------------
# stability-class coefficient tables


@dataclass(frozen=True)
class ASCEntry:
    scheme: str
    asc_class: str
    horizontal: Mapping[str, float]
    vertical: Mapping[str, float]

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "class": self.asc_class,
            "horizontal": dict(self.horizontal),
            "vertical": dict(self.vertical),
        }


# accepted coefficient-name sets per scheme
_COEFFICIENT_SETS = {
    "Briggs": ({"a"}, {"a", "b", "c"}),
    "Smith": ({"a", "b"},),
}


@dataclass(frozen=True)
class ASCTables:
    """Immutable store of stability-class coefficients keyed by (scheme, class)."""

    entries: Mapping[Tuple[str, str], ASCEntry]
    version: str = "unversioned"
    description: str = ""
    forms: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))
        object.__setattr__(self, "forms", MappingProxyType(dict(self.forms)))

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, key):
        try:
            return self.entries[key]
        except KeyError:
            raise ConfigError(f"no coefficients for {key[0]}/{key[1]}") from None

    def __eq__(self, other):
        if not isinstance(other, ASCTables):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self):
        return {
            "version": self.version,
            "description": self.description,
            "forms": dict(self.forms),
            "entries": [self.entries[k].to_dict() for k in sorted(self.entries)],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _parse_coefficients(raw, where):
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where}: coefficients must be a mapping")
    out = {}
    for name, value in raw.items():
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{name}: not a number") from None
        if not math.isfinite(value) or value <= 0:
            raise ConfigError(f"{where}.{name}: coefficients must be positive, got {value}")
        out[str(name)] = value
    return MappingProxyType(out)


def tables_from_dict(doc) -> ASCTables:
    entries = {}
    for i, item in enumerate(doc.get("entries", [])):
        try:
            scheme, cls = item["scheme"], item["class"]
        except (KeyError, TypeError):
            raise ConfigError(f"entry {i}: needs 'scheme' and 'class'") from None
        if scheme not in _COEFFICIENT_SETS:
            raise ConfigError(f"entry {i}: unknown scheme {scheme!r}")
        if cls not in ASC_CLASSES:
            raise ConfigError(f"entry {i}: unknown class {cls!r}")
        where = f"{scheme}/{cls}"
        if (scheme, cls) in entries:
            raise ConfigError(f"duplicate entry {where}")
        horiz = _parse_coefficients(item.get("horizontal"), where + ".horizontal")
        vert = _parse_coefficients(item.get("vertical"), where + ".vertical")
        for axis, coef in (("horizontal", horiz), ("vertical", vert)):
            if set(coef) not in _COEFFICIENT_SETS[scheme]:
                raise ConfigError(f"{where}.{axis}: bad coefficient set {sorted(coef)}")
        entries[(scheme, cls)] = ASCEntry(scheme, cls, horiz, vert)
    for scheme in _COEFFICIENT_SETS:
        for cls in ASC_CLASSES:
            if (scheme, cls) not in entries:
                raise ConfigError(f"coefficient table is missing {scheme}/{cls}")
    return ASCTables(
        entries,
        version=str(doc.get("version", "unversioned")),
        description=str(doc.get("description", "")),
        forms=doc.get("forms", {}),
    )


def load_asc_tables(path=None) -> ASCTables:
    """Load stability-class coefficients from a JSON file.

    Args:
        path: coefficient file; the copy shipped with the package when None.

    Raises:
        ConfigError: the file is unreadable, a class is missing or a
            coefficient is non-positive.
    """
    try:
        if path is None:
            text = resources.files("plumeinv.data").joinpath(DEFAULT_ASC_FILE).read_text()
        else:
            text = Path(path).read_text()
        doc = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read coefficient file {path}: {exc}") from exc
    return tables_from_dict(doc)


_DEFAULT_TABLES = None


def default_tables() -> ASCTables:
    global _DEFAULT_TABLES
    if _DEFAULT_TABLES is None:
        _DEFAULT_TABLES = load_asc_tables()
    return _DEFAULT_TABLES


# --------------------------------------------------------------------------
# array kernels, xp is numpy or jax.numpy


def frame_offsets(xp, receptors, source_xy, source_z, direction_deg):
    """Downwind, crosswind and vertical offsets of receptors from a source.

    ``receptors`` is (..., 3); ``direction_deg`` broadcasts against the
    leading dimensions.
    """
    phi = direction_deg * (math.pi / 180.0)
    c, s = xp.cos(phi), xp.sin(phi)
    dx = receptors[..., 0] - source_xy[0]
    dy = receptors[..., 1] - source_xy[1]
    return dx * c + dy * s, -dx * s + dy * c, receptors[..., 2] - source_z


def briggs_sigma(xp, downwind, coef):
    sigma = coef["a"] * downwind
    if "b" in coef:
        sigma = sigma * (1.0 + coef["b"] * downwind) ** (-coef["c"])
    return sigma


def smith_sigma(xp, downwind, coef):
    return coef["a"] * downwind ** coef["b"]


def draxler_sigma(xp, downwind, tan_gamma, a, b, offset):
    return a * (downwind * tan_gamma) ** b + offset


def sigma_pair(xp, scheme, downwind, tan_gamma_h, tan_gamma_v, half_width, half_height,
               draxler=None, entry=None, scale=None):
    """Horizontal and vertical wind sigmas for positive downwind distances.

    Args:
        scheme: "Draxler", "Smith" or "Briggs".
        draxler: (a_H, b_H, a_V, b_V), Draxler only.
        entry: ASCEntry for the Smith/Briggs class.
        scale: optional (a_H, a_V) multipliers on a Smith/Briggs entry.
    """
    if scheme == "Draxler":
        a_h, b_h, a_v, b_v = draxler
        sig_h = draxler_sigma(xp, downwind, tan_gamma_h, a_h, b_h, half_width)
        sig_v = draxler_sigma(xp, downwind, tan_gamma_v, a_v, b_v, half_height)
    else:
        law = smith_sigma if scheme == "Smith" else briggs_sigma
        sig_h = law(xp, downwind, entry.horizontal)
        sig_v = law(xp, downwind, entry.vertical)
        if scale is not None:
            sig_h = scale[0] * sig_h
            sig_v = scale[1] * sig_v
    return xp.maximum(sig_h, SIGMA_FLOOR), xp.maximum(sig_v, SIGMA_FLOOR)


def gaussian_plume(xp, rate, crosswind, vertical, sigma_h, sigma_v, speed,
                   release_height, abl_height, n_refl, gas_density):
    """Reflected Gaussian plume concentration in PPM (downwind receptors only).

    The image-source offsets are written with integer floor arithmetic on the
    reflection counter ``j`` exactly as in the closed-form solution.
    """
    H, P = release_height, abl_height
    var_v = sigma_v * sigma_v
    vertical_sum = xp.exp(-0.5 * vertical * vertical / var_v)
    shifted = vertical + H
    for j in range(1, n_refl + 1):
        sign = -1.0 if j % 2 else 1.0
        lid = 2 * ((j + 1) // 2) * P + sign * shifted - H
        ground = 2 * (j // 2) * P - sign * shifted + H
        vertical_sum = vertical_sum + xp.exp(-0.5 * lid * lid / var_v) + xp.exp(-0.5 * ground * ground / var_v)
    scale = (1e6 / gas_density) * rate / (2.0 * math.pi * speed * sigma_h * sigma_v)
    return scale * xp.exp(-0.5 * crosswind * crosswind / (sigma_h * sigma_h)) * vertical_sum


# --------------------------------------------------------------------------
# scalar public API


def receptor_frame(receptor, source: SourceGeometry, wind_direction) -> ReceptorFrame:
    """Express a receptor in the wind-aligned frame of ``source``.

    Raises:
        InvalidInputError: non-finite inputs or a receptor on the source.
    """
    receptor = np.asarray(receptor, dtype=float)
    if receptor.shape != (3,) or not _finite(receptor, wind_direction):
        raise InvalidInputError("receptor and wind direction must be finite; receptor is a 3-vector")
    if np.array_equal(receptor, np.asarray(source.location)):
        raise InvalidInputError("receptor coincides with the source location")
    dr, dh, dv = frame_offsets(np, receptor, source.location[:2], source.location[2], float(wind_direction))
    return ReceptorFrame(float(dr), float(dh), float(dv), bool(dr < 0))


def wind_sigmas(spec: DispersionSpec, frame: ReceptorFrame, gamma_h, gamma_v,
                source: SourceGeometry, tables: Optional[ASCTables] = None):
    """Wind sigmas (sigma_H, sigma_V) in metres for a downwind receptor.

    ``gamma_h`` and ``gamma_v`` are rolling wind-direction standard deviations
    in radians and are only used by the Draxler scheme.

    Raises:
        DomainError: the receptor is not strictly downwind, or a gamma lies
            outside (0, pi/2).
        ConfigError: the stability class has no coefficients.
    """
    if not frame.downwind > 0:
        raise DomainError(f"wind sigmas need a positive downwind distance, got {frame.downwind}")
    for g in (gamma_h, gamma_v):
        if not 0 < g < math.pi / 2:
            raise DomainError(f"direction variability {g} rad outside (0, pi/2)")
    entry = None
    if spec.scheme != "Draxler":
        tables = tables or default_tables()
        entry = tables[(spec.scheme, spec.asc_class)]
    sig_h, sig_v = sigma_pair(
        np, spec.scheme, frame.downwind, math.tan(gamma_h), math.tan(gamma_v),
        source.half_width, source.half_height,
        draxler=spec.draxler_params, entry=entry, scale=spec.smith_scale,
    )
    return float(sig_h), float(sig_v)


def plume_concentration(source: SourceGeometry, rate, frame: ReceptorFrame, sigma_h, sigma_v,
                        wind_speed, atmos: AtmosphereSpec) -> float:
    """Plume concentration (PPM) at a receptor; exactly zero when upwind.

    Raises:
        DomainError: non-positive wind speed or sigmas.
        InvalidInputError: negative or non-finite emission rate.
    """
    if not wind_speed > 0:
        raise DomainError(f"wind speed must be positive, got {wind_speed}")
    if not (sigma_h > 0 and sigma_v > 0):
        raise DomainError(f"wind sigmas must be positive, got {sigma_h}, {sigma_v}")
    if not (math.isfinite(rate) and rate >= 0):
        raise InvalidInputError(f"emission rate must be finite and >= 0, got {rate}")
    if frame.upwind or frame.downwind <= 0 or rate == 0:
        return 0.0
    return float(gaussian_plume(
        np, rate, frame.crosswind, frame.vertical, sigma_h, sigma_v, wind_speed,
        source.height, atmos.abl_height, atmos.n_refl, atmos.gas_density,
    ))


def concentration_field(xp, receptors, source_xy, source: SourceGeometry, rate, direction_deg,
                        speed, tan_gamma_h, tan_gamma_v, atmos: AtmosphereSpec, scheme,
                        draxler=None, entry=None, scale=None):
    """Vectorised plume concentration with the upwind rule applied.

    ``receptors`` is (n_rec, 3); the wind arguments are (n_t,) arrays and the
    result is (n_rec, n_t). ``source_xy`` overrides the horizontal position of
    ``source`` so that it can be a traced variable.
    """
    rec = receptors[:, None, :]
    dr, dh, dv = frame_offsets(xp, rec, source_xy, source.location[2], direction_deg[None, :])
    downwind = dr > 0
    safe_dr = xp.where(downwind, dr, 1.0)
    sig_h, sig_v = sigma_pair(
        xp, scheme, safe_dr, tan_gamma_h[None, :], tan_gamma_v[None, :],
        source.half_width, source.half_height, draxler=draxler, entry=entry, scale=scale,
    )
    conc = gaussian_plume(
        xp, rate, dh, dv, sig_h, sig_v, speed[None, :], source.height,
        atmos.abl_height, atmos.n_refl, atmos.gas_density,
    )
    return xp.where(downwind, conc, 0.0)


def tan_gammas(gamma_h: Sequence[float], gamma_v: Sequence[float]):
    return np.tan(np.asarray(gamma_h, dtype=float)), np.tan(np.asarray(gamma_v, dtype=float))

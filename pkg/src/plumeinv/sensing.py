"""Sensor arrays, coupling matrices and measurement vectors.

Observations are ordered sensor-major: all times of the first sensor, then
all times of the second, and so on. Rows of the coupling matrix follow the
same order.

Chilbolton-style field data are read from an intermediate layout (one
directory):

``concentrations.csv``
    ``time,beam_id,ppm``: one row per beam scan; time in seconds.
``wind.csv``
    ``time,speed,direction_deg,elevation_deg``: anemometer samples; the
    direction follows the package convention (degrees counter-clockwise from
    east, blowing towards). Use :func:`meteorological_to_mathematical` to
    convert compass "from" bearings.
``sensors.json``
    the beam geometry as written by :meth:`SensorArray.to_json`.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from plumeinv import plume
from plumeinv.errors import InvalidInputError, ParseError
from plumeinv.plume import AtmosphereSpec, DispersionSpec, SourceGeometry
from plumeinv.wind import WindRecord, clip_gamma, rolling_direction_std

log = logging.getLogger(__name__)

BEAM_SPACING = 0.4  # m
OBS_CSV_HEADER = ("obs_id", "sensor_id", "t", "ppm")


@dataclass(frozen=True)
class Sensor:
    """A point sensor (``position``) or an open-path beam (``origin`` to ``reflector``)."""

    id: str
    kind: str
    position: Optional[tuple] = None
    origin: Optional[tuple] = None
    reflector: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "point":
            pts = [self.position]
        elif self.kind == "beam":
            pts = [self.origin, self.reflector]
        else:
            raise InvalidInputError(f"sensor {self.id}: kind must be 'point' or 'beam'")
        for p in pts:
            if p is None or len(p) != 3 or not np.all(np.isfinite(np.asarray(p, dtype=float))):
                raise InvalidInputError(f"sensor {self.id}: coordinates must be finite 3-vectors")
        for name in ("position", "origin", "reflector"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(c) for c in v))
        if self.kind == "beam" and self.origin == self.reflector:
            raise InvalidInputError(f"sensor {self.id}: beam endpoints coincide")

    @classmethod
    def point(cls, id, position):
        return cls(str(id), "point", position=position)

    @classmethod
    def beam(cls, id, origin, reflector):
        return cls(str(id), "beam", origin=origin, reflector=reflector)

    def receptors(self, spacing=BEAM_SPACING):
        if self.kind == "point":
            return np.asarray([self.position])
        return beam_receptors(self.origin, self.reflector, spacing)

    def to_dict(self):
        out = {"id": self.id, "kind": self.kind}
        for name in ("position", "origin", "reflector"):
            if getattr(self, name) is not None:
                out[name] = list(getattr(self, name))
        return out


@dataclass(frozen=True)
class SensorArray:
    sensors: tuple
    sample_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise InvalidInputError("a sensor array needs at least one sensor")
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("sensor ids must be unique")
        if not self.sample_rate > 0:
            raise InvalidInputError("sample rate must be positive")

    def __len__(self):
        return len(self.sensors)

    @property
    def ids(self):
        return [s.id for s in self.sensors]

    def receptor_layout(self, spacing=BEAM_SPACING):
        """Receptor points and the (n_sensors, n_receptors) averaging matrix."""
        blocks = [s.receptors(spacing) for s in self.sensors]
        receptors = np.concatenate(blocks, axis=0)
        weights = np.zeros((len(blocks), receptors.shape[0]))
        start = 0
        for j, b in enumerate(blocks):
            weights[j, start:start + len(b)] = 1.0 / len(b)
            start += len(b)
        return receptors, weights

    def to_dict(self):
        return {"sample_rate": self.sample_rate, "sensors": [s.to_dict() for s in self.sensors]}

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, doc):
        try:
            sensors = [
                Sensor(str(s["id"]), s["kind"], s.get("position"), s.get("origin"), s.get("reflector"))
                for s in doc["sensors"]
            ]
            return cls(sensors, float(doc.get("sample_rate", 1.0)))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed sensor array document: {exc}") from exc

    @classmethod
    def from_json(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), path, exc.lineno) from exc
        return cls.from_dict(doc)


def beam_receptors(origin, reflector, spacing=BEAM_SPACING) -> np.ndarray:
    """Evenly spaced points along a beam, both endpoints included.

    The count is ``floor(length / spacing) + 1``.
    """
    a = np.asarray(origin, dtype=float)
    b = np.asarray(reflector, dtype=float)
    length = float(np.linalg.norm(b - a))
    if length == 0:
        raise InvalidInputError("zero-length beam")
    if not 0 < spacing <= length * (1 + 1e-12):
        raise InvalidInputError(f"spacing {spacing} must be positive and at most the beam length {length}")
    count = int(math.floor(length / spacing + 1e-9)) + 1
    frac = np.linspace(0.0, 1.0, count)
    return a + frac[:, None] * (b - a)


@dataclass(frozen=True)
class BackgroundModel:
    """Per-sensor background prior N(mean, var); ``var`` is the diagonal of Sigma_beta."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.broadcast_to(np.asarray(self.var, dtype=float), mean.shape).copy()
        if np.any(var < 0) or not np.all(np.isfinite(mean)):
            raise InvalidInputError("background variances must be >= 0 and means finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @classmethod
    def uniform(cls, n_sensors, mean, var):
        return cls(np.full(n_sensors, float(mean)), np.full(n_sensors, float(var)))


@dataclass(frozen=True)
class Observations:
    """Measurement vector with its (sensor, time) index map.

    Attributes:
        d: (n_obs,) concentrations in PPM.
        sensor_index: (n_obs,) sensor number of each observation.
        time_index: (n_obs,) index into ``wind`` of each observation.
        sensor_ids: ids of the sensors, in order.
        wind: wind record shared by all sensors.
    """

    d: np.ndarray
    sensor_index: np.ndarray
    time_index: np.ndarray
    sensor_ids: tuple
    wind: WindRecord

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        si = np.asarray(self.sensor_index, dtype=int)
        ti = np.asarray(self.time_index, dtype=int)
        if d.ndim != 1 or si.shape != d.shape or ti.shape != d.shape:
            raise InvalidInputError("observation vector and index maps must have equal length")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("observations must be finite")
        n_sns = len(self.sensor_ids)
        if d.size and (si.min() < 0 or si.max() >= n_sns or ti.min() < 0 or ti.max() >= len(self.wind)):
            raise InvalidInputError("index map out of range")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "sensor_index", si)
        object.__setattr__(self, "time_index", ti)
        object.__setattr__(self, "sensor_ids", tuple(self.sensor_ids))

    @property
    def n_obs(self):
        return self.d.size

    @property
    def n_sensors(self):
        return len(self.sensor_ids)

    @property
    def n_times(self):
        return len(self.wind)

    @property
    def rows(self):
        """Flat (sensor-major) index of each observation in the full grid."""
        return self.sensor_index * self.n_times + self.time_index

    @property
    def is_complete(self):
        return self.n_obs == self.n_sensors * self.n_times

    def per_sensor_counts(self):
        return np.bincount(self.sensor_index, minlength=self.n_sensors)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(OBS_CSV_HEADER)
            t = self.wind.t
            for k in range(self.n_obs):
                writer.writerow([k, self.sensor_ids[self.sensor_index[k]], repr(float(t[self.time_index[k]])),
                                 repr(float(self.d[k]))])

    @classmethod
    def from_csv(cls, path, wind: WindRecord, sensor_ids: Sequence[str]):
        """Read an observation file written by :meth:`to_csv`."""
        lookup = {s: j for j, s in enumerate(sensor_ids)}
        time_lookup = {float(t): i for i, t in enumerate(wind.t)}
        d, si, ti = [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != OBS_CSV_HEADER:
                raise ParseError(f"expected header {','.join(OBS_CSV_HEADER)}", path, 1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    _, sid, t, ppm = row
                    si.append(lookup[sid])
                    ti.append(time_lookup[float(t)])
                    d.append(float(ppm))
                except (ValueError, KeyError) as exc:
                    raise ParseError(f"bad observation row {row!r} ({exc})", path, lineno) from None
        return cls(np.array(d), np.array(si, dtype=int), np.array(ti, dtype=int), tuple(sensor_ids), wind)


@dataclass(frozen=True)
class CouplingMatrix:
    """(n_obs, n_src) unit-rate plume responses in PPM per kg/s, rows sensor-major."""

    entries: np.ndarray
    sensor_index: np.ndarray
    time_index: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def shape(self):
        return self.entries.shape


class ForwardModel:
    """Plume responses at a fixed sensor array under a fixed wind record.

    The receptor geometry, averaging weights and wind arrays are prepared
    once; :meth:`coupling` then maps source positions and dispersion values
    to a coupling matrix with either numpy or jax.numpy.
    """

    def __init__(self, array: SensorArray, wind: WindRecord, atmos: AtmosphereSpec,
                 dispersion: DispersionSpec, source: SourceGeometry, rows=None,
                 tables=None, spacing=BEAM_SPACING):
        self.array = array
        self.wind = wind
        self.atmos = atmos
        self.dispersion = dispersion
        self.source = source
        atmos.check_source(source)
        self.receptors, self.weights = array.receptor_layout(spacing)
        self.direction = np.asarray(wind.direction, dtype=float)
        self.speed = np.asarray(wind.speed, dtype=float)
        self.tan_h = np.tan(np.asarray(wind.gamma_h, dtype=float))
        self.tan_v = np.tan(np.asarray(wind.gamma_v, dtype=float))
        self.n_times = len(wind)
        full = len(array) * self.n_times
        self.rows = np.arange(full) if rows is None else np.asarray(rows, dtype=int)
        self.entry = None
        if dispersion.scheme != "Draxler":
            self.entry = (tables or plume.default_tables())[(dispersion.scheme, dispersion.asc_class)]
        self._point_only = bool(np.allclose(self.weights.sum(0), 1.0)) and self.weights.shape[0] == self.weights.shape[1]

    def unit_response(self, xp, source_xy, draxler=None, scale=None):
        """(n_rows,) unit-rate response of one source at ``source_xy``."""
        if self.dispersion.scheme == "Draxler" and draxler is None:
            draxler = self.dispersion.draxler_params
        if scale is None:
            scale = self.dispersion.smith_scale
        conc = plume.concentration_field(
            xp, self.receptors, source_xy, self.source, 1.0, self.direction, self.speed,
            self.tan_h, self.tan_v, self.atmos, self.dispersion.scheme,
            draxler=draxler, entry=self.entry, scale=scale,
        )
        per_sensor = conc if self._point_only else self.weights @ conc
        flat = per_sensor.reshape(-1)
        if self.rows.size == flat.shape[0]:
            return flat
        return flat[self.rows]

    def coupling(self, xp, sources_xy, draxler=None, scale=None):
        """(n_rows, n_src) coupling matrix for horizontal source positions."""
        cols = [self.unit_response(xp, xy, draxler, scale) for xy in sources_xy]
        return xp.stack(cols, axis=1)


def coupling_matrix(sources: List[SourceGeometry], array: SensorArray, wind: WindRecord,
                    disp: DispersionSpec, atmos: AtmosphereSpec, tables=None) -> CouplingMatrix:
    """Unit-rate plume response of every (sensor, time) pair to every source.

    Beam sensors average the responses of their receptors spaced 0.4 m apart.
    """
    if not sources:
        raise InvalidInputError("need at least one source")
    cols = []
    for src in sources:
        model = ForwardModel(array, wind, atmos, disp, src, tables=tables)
        col = model.unit_response(np, np.asarray(src.location[:2]))
        if not np.all(np.isfinite(col)):
            bad = int(np.flatnonzero(~np.isfinite(col))[0])
            sensor, t = divmod(bad, len(wind))
            raise InvalidInputError(
                f"non-finite plume response at sensor {array.ids[sensor]}, time index {t}"
            )
        cols.append(col)
    n_t = len(wind)
    idx = np.arange(len(array) * n_t)
    return CouplingMatrix(np.stack(cols, axis=1), idx // n_t, idx % n_t)


def synthesize_observations(A, rates, background: BackgroundModel, noise_var, seed=None,
                            sensor_index=None, time_index=None, sensor_ids=None, wind=None):
    """Draw d = A s + beta + eps.

    beta is drawn once per sensor from the background prior and repeated over
    time; eps is i.i.d. N(0, noise_var).

    Returns:
        (Observations, beta) with beta the realised (n_obs,) background.
    """
    if isinstance(A, CouplingMatrix):
        sensor_index = A.sensor_index if sensor_index is None else sensor_index
        time_index = A.time_index if time_index is None else time_index
        A = A.entries
    A = np.asarray(A, dtype=float)
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if A.ndim != 2 or A.shape[1] != rates.size:
        raise InvalidInputError(f"coupling matrix {A.shape} does not match {rates.size} rates")
    if sensor_index is None or time_index is None:
        raise InvalidInputError("an index map is required")
    sensor_index = np.asarray(sensor_index, dtype=int)
    if sensor_index.size != A.shape[0]:
        raise InvalidInputError("index map does not match the coupling matrix")
    n_sns = background.mean.size
    if sensor_index.max() >= n_sns:
        raise InvalidInputError("background model has fewer sensors than the index map")
    if not noise_var >= 0:
        raise InvalidInputError("noise variance must be >= 0")
    rng = np.random.default_rng(seed)
    beta_sensor = background.mean + np.sqrt(background.var) * rng.standard_normal(n_sns)
    beta = beta_sensor[sensor_index]
    noise = math.sqrt(noise_var) * rng.standard_normal(A.shape[0])
    d = A @ rates + beta + noise
    if sensor_ids is None:
        sensor_ids = tuple(str(j) for j in range(n_sns))
    if wind is None:
        raise InvalidInputError("observations need the wind record they were simulated under")
    return Observations(d, sensor_index, time_index, sensor_ids, wind), beta


# --------------------------------------------------------------------------
# field-data ingestion


def read_numeric_csv(path, columns):
    """Read a headed CSV of floats; errors carry the offending line number."""
    path = Path(path)
    out = {c: [] for c in columns}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc}", path) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", path, 1)
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise ParseError(f"missing columns {missing}", path, 1)
        pos = [header.index(c) for c in columns]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [float(row[p]) for p in pos]
            except (ValueError, IndexError):
                raise ParseError(f"malformed record {row!r}", path, lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError(f"non-finite value in {row!r}", path, lineno)
            for c, v in zip(columns, values):
                out[c].append(v)
    return {c: np.asarray(v, dtype=float) for c, v in out.items()}


def _read_concentrations(path):
    times, beams, ppm = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["time", "beam_id", "ppm"]:
            raise ParseError("expected header time,beam_id,ppm", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, beam, c = row
                t, c = float(t), float(c)
            except ValueError:
                raise ParseError(f"malformed record {row!r}", path, lineno) from None
            if not (math.isfinite(t) and math.isfinite(c)):
                raise ParseError(f"non-finite value in {row!r}", path, lineno)
            times.append(t)
            beams.append(beam.strip())
            ppm.append(c)
    return np.asarray(times), np.asarray(beams, dtype=object), np.asarray(ppm)


def meteorological_to_mathematical(bearing_from_deg):
    """Convert a compass "blowing from" bearing to the package convention."""
    return np.mod(270.0 - np.asarray(bearing_from_deg, dtype=float), 360.0)


def circular_mean_deg(angles):
    rad = np.deg2rad(angles)
    return float(np.rad2deg(math.atan2(np.sin(rad).mean(), np.cos(rad).mean())))


@dataclass
class IngestReport:
    n_raw_scans: int = 0
    n_windows: int = 0
    dropped_windows: int = 0
    missing_rows: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def warning_count(self):
        return self.dropped_windows + self.missing_rows


def ingest_chilbolton(path, aggregation=60.0, variability_window=60.0):
    """Aggregate beam scans and anemometer data into tumbling windows.

    Each (beam, window) row is the mean of that beam's scans in the window.
    Wind speed is averaged, direction takes the circular mean, and the
    direction/elevation variability is the rolling spread of the raw
    anemometer series averaged over the window. Windows without wind data
    and (beam, window) pairs without scans are dropped and counted.

    Returns:
        (Observations, SensorArray, IngestReport)
    """
    path = Path(path)
    array = SensorArray.from_json(path / "sensors.json")
    t_conc, beam, ppm = _read_concentrations(path / "concentrations.csv")
    wind = read_numeric_csv(path / "wind.csv", ("time", "speed", "direction_deg", "elevation_deg"))
    if t_conc.size == 0 or wind["time"].size == 0:
        raise ParseError("no records", path)
    report = IngestReport(n_raw_scans=int(t_conc.size))
    known = set(array.ids)
    unknown = sorted(set(beam) - known)
    if unknown:
        raise ParseError(f"unknown beam ids {unknown}", path / "concentrations.csv")

    order = np.argsort(wind["time"], kind="stable")
    tw = wind["time"][order]
    dt_raw = float(np.median(np.diff(tw))) if tw.size > 1 else aggregation
    if dt_raw <= 0:
        raise ParseError("anemometer timestamps must increase", path / "wind.csv")
    gamma_h_raw = rolling_direction_std(wind["direction_deg"][order], max(variability_window, dt_raw), dt_raw)
    gamma_v_raw = rolling_direction_std(wind["elevation_deg"][order], max(variability_window, dt_raw), dt_raw)

    t0 = min(t_conc.min(), tw.min())
    win_w = np.floor((tw - t0) / aggregation).astype(int)
    win_c = np.floor((t_conc - t0) / aggregation).astype(int)
    windows = sorted(set(win_c.tolist()) | set(win_w.tolist()))
    kept, speed, direction, gh, gv = [], [], [], [], []
    for w in windows:
        sel = win_w == w
        if not sel.any():
            report.dropped_windows += 1
            report.warnings.append(f"window {w}: no anemometer data, dropped")
            continue
        kept.append(w)
        speed.append(wind["speed"][order][sel].mean())
        direction.append(circular_mean_deg(wind["direction_deg"][order][sel]))
        gh.append(gamma_h_raw[sel].mean())
        gv.append(gamma_v_raw[sel].mean())
    report.n_windows = len(kept)
    if not kept:
        raise ParseError("no window has anemometer data", path)
    record = WindRecord(
        t0 + np.asarray(kept, dtype=float) * aggregation,
        np.maximum(np.asarray(speed), 0.1),
        np.asarray(direction),
        clip_gamma(np.asarray(gh)),
        clip_gamma(np.asarray(gv)),
    )
    slot = {w: i for i, w in enumerate(kept)}
    d, si, ti = [], [], []
    for j, sid in enumerate(array.ids):
        mine = beam == sid
        for w in kept:
            sel = mine & (win_c == w)
            if not sel.any():
                report.missing_rows += 1
                report.warnings.append(f"beam {sid}, window {w}: no scans, dropped")
                continue
            d.append(ppm[sel].mean())
            si.append(j)
            ti.append(slot[w])
    if report.warning_count:
        log.warning("ingestion dropped %d windows and %d beam rows", report.dropped_windows, report.missing_rows)
    obs = Observations(np.asarray(d), np.asarray(si, dtype=int), np.asarray(ti, dtype=int), tuple(array.ids), record)
    return obs, array, report

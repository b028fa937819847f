"""Scenario construction and the command implementations behind the CLI.

Every command writes CSV/JSON data files plus a ``manifest.json`` holding
the config hash, seed, package versions and a timestamp. Data files are
byte-identical across runs with the same config and seed; only the manifest
timestamp changes.
"""

import csv
import datetime
import hashlib
import json
import logging
import multiprocessing
import platform
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np

from plumeinv import diagnostics
from plumeinv.config import CHILBOLTON_MODELS, FACTORS, ScenarioConfig
from plumeinv.errors import InferenceError, InvalidInputError, ParseError
from plumeinv.inference import ChainConfig, InitConfig, InversionModel, Priors, Sampler, Trace
from plumeinv.plume import AtmosphereSpec, DispersionSpec, SourceGeometry
from plumeinv.sensing import (
    BackgroundModel,
    ForwardModel,
    Observations,
    Sensor,
    SensorArray,
    coupling_matrix,
    ingest_chilbolton,
    synthesize_observations,
)
from plumeinv.wind import OUParams, WindRecord, WindScenario, simulate_ou, synthesize_wind

log = logging.getLogger(__name__)

DISPERSION_NAMES = ("a_H", "b_H", "a_V", "b_V")


# ------------------------------------------------------------------ seeds


def derive_seeds(seed):
    """Independent integer seeds for wind, observations and the chain."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)


# --------------------------------------------------------------- scenario


def sensor_array(cfg: ScenarioConfig) -> SensorArray:
    """Point sensors in the plane x = source.x + DTS for the configured layout."""
    s = cfg.sensors
    x = cfg.source.x + cfg.distance
    if cfg.layout == "grid":
        ny, nz = s.grid_shape
        pts = [(x, y, z) for y in np.linspace(*s.y_range, ny) for z in np.linspace(*s.z_range, nz)]
    else:
        n = s.line_count if cfg.layout == "line" else s.sparse_count
        pts = [(x, y, s.line_height) for y in np.linspace(*s.y_range, n)]
    return SensorArray([Sensor.point(f"P{j:02d}", p) for j, p in enumerate(pts)])


def wind_scenario(cfg: ScenarioConfig) -> WindScenario:
    w = cfg.wind
    return WindScenario(
        speed_mean=w.speed_mean, speed_std=w.speed_std, speed_rate=w.speed_rate,
        direction_mean=w.direction_mean, coverage=cfg.coverage, direction_std=w.direction_std,
        direction_rate=w.direction_rate, gamma_v_mean=w.gamma_v_mean, vertical_std=w.vertical_std,
        vertical_rate=w.vertical_rate, duration=cfg.n_times * w.dt, dt=w.dt, window=w.window,
    )


def source_geometry(cfg: ScenarioConfig) -> SourceGeometry:
    s = cfg.source
    return SourceGeometry.at(s.x, s.y, s.z, s.half_width, s.half_height)


def atmosphere(cfg: ScenarioConfig) -> AtmosphereSpec:
    a = cfg.atmosphere
    return AtmosphereSpec(a.abl_height, a.n_refl, a.gas_density)


def priors(cfg: ScenarioConfig, box=None) -> Priors:
    p = cfg.priors
    return Priors(
        sigma2_shape=p.sigma2_shape, sigma2_scale=p.sigma2_scale, beta_mean=p.beta_mean,
        beta_var=p.beta_var, log_rate_mean=p.log_rate_mean, log_rate_sd=p.log_rate_sd,
        box=tuple(box or p.box), location_mean=p.location_mean, location_sd=p.location_sd,
        log_dispersion_mean=p.log_dispersion_mean, log_dispersion_sd=p.log_dispersion_sd,
    )


def chain_config(cfg: ScenarioConfig, seed, n_iter=None, burn_in=None) -> ChainConfig:
    s = cfg.sampler
    return ChainConfig(n_iter=n_iter or s.n_iter, burn_in=s.burn_in if burn_in is None else burn_in,
                       seed=seed, step_size=s.step_size, target_accept=s.target_accept)


def init_config(cfg: ScenarioConfig) -> InitConfig:
    s = cfg.sampler
    return InitConfig(grid_points=s.grid_points, rate_bounds=tuple(s.rate_bounds), rate_points=s.rate_points,
                      lhs_samples=s.lhs_samples, step_size=s.step_size)


@dataclass
class Dataset:
    """A simulated (or loaded) scenario with its ground truth."""

    config: ScenarioConfig
    array: SensorArray
    wind: WindRecord
    obs: Observations
    truth: dict

    def write(self, out):
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        self.config.save(out / "config.yaml")
        self.wind.to_csv(out / "wind.csv")
        self.array.to_json(out / "sensors.json")
        self.obs.to_csv(out / "observations.csv")
        _write_json(out / "truth.json", self.truth)
        return [out / n for n in ("config.yaml", "wind.csv", "sensors.json", "observations.csv", "truth.json")]

    @classmethod
    def read(cls, path):
        path = Path(path)
        if not path.is_dir():
            raise ParseError("dataset directory not found", path)
        cfg = ScenarioConfig.load(path / "config.yaml")
        wind = WindRecord.from_csv(path / "wind.csv")
        array = SensorArray.from_json(path / "sensors.json")
        obs = Observations.from_csv(path / "observations.csv", wind, array.ids)
        truth = json.loads((path / "truth.json").read_text()) if (path / "truth.json").exists() else {}
        return cls(cfg, array, wind, obs, truth)


def simulate(cfg: ScenarioConfig, dispersion_truth=None) -> Dataset:
    """Draw the wind record and observations of a scenario."""
    wind_seed, obs_seed, _ = derive_seeds(cfg.seed)
    disp_values = tuple(dispersion_truth or cfg.dispersion_truth)
    wind = synthesize_wind(wind_scenario(cfg), seed=wind_seed)
    array = sensor_array(cfg)
    src = source_geometry(cfg)
    disp = DispersionSpec("Draxler", draxler_params=disp_values)
    A = coupling_matrix([src], array, wind, disp, atmosphere(cfg))
    bg = BackgroundModel.uniform(len(array), cfg.noise.background_mean, cfg.noise.background_var)
    obs, beta = synthesize_observations(A, [cfg.emission_rate], bg, cfg.noise.noise_var, seed=obs_seed,
                                        sensor_ids=array.ids, wind=wind)
    beta_sensor = np.zeros(len(array))
    beta_sensor[obs.sensor_index] = beta
    truth = {
        "s": cfg.emission_rate, "x": cfg.source.x, "y": cfg.source.y, "z": cfg.source.z,
        **dict(zip(DISPERSION_NAMES, disp_values)),
        "sigma2": cfg.noise.noise_var,
        "beta": {sid: float(b) for sid, b in zip(array.ids, beta_sensor)},
    }
    return Dataset(cfg, array, wind, obs, truth)


def inversion_model(cfg: ScenarioConfig, data: Dataset, dispersion: Optional[DispersionSpec] = None,
                    estimate=None, box=None, source=None) -> InversionModel:
    inv = cfg.inversion
    if dispersion is None:
        if inv.scheme == "Draxler":
            dispersion = DispersionSpec("Draxler", draxler_params=cfg.dispersion_truth)
        else:
            scale = (1.0, 1.0) if inv.scheme == "Smith" else None
            dispersion = DispersionSpec(inv.scheme, asc_class=inv.asc_class, smith_scale=scale)
    forward = ForwardModel(data.array, data.wind, atmosphere(cfg), dispersion, source or source_geometry(cfg),
                           rows=data.obs.rows)
    est = inv.estimate if estimate is None else estimate
    return InversionModel(forward, data.obs, priors(cfg, box), estimate_dispersion=est)


# -------------------------------------------------------------- inversion


def run_sampler(model, chain_cfg: ChainConfig, init_cfg: InitConfig, out=None, checkpoint_every=0,
                resume=False) -> Trace:
    """Run (or continue) a chain, checkpointing into ``out`` every ``checkpoint_every`` iterations.

    With ``resume`` the chain restarts from ``out/checkpoint.json`` and the
    partial ``out/trace.csv``; the result equals an uninterrupted run.
    """
    out = Path(out) if out is not None else None
    trace = None
    if resume:
        if out is None:
            raise InvalidInputError("resuming needs an output directory")
        ckpt = json.loads((out / "checkpoint.json").read_text())
        sampler = Sampler.resume(model, chain_cfg, ckpt)
        trace = Trace.from_csv(out / "trace.csv", model.layout.size, chain_cfg.burn_in)
        trace.metric_fallbacks = sampler.fallbacks
        if len(trace) != sampler.state.iteration:
            raise InferenceError(f"trace has {len(trace)} rows but the checkpoint is at iteration "
                                 f"{sampler.state.iteration}")
    else:
        sampler = Sampler.start(model, chain_cfg, init_cfg)
    while sampler.state.iteration < chain_cfg.n_iter:
        remaining = chain_cfg.n_iter - sampler.state.iteration
        chunk = min(checkpoint_every, remaining) if checkpoint_every > 0 else remaining
        part = sampler.run(chunk, progress_every=500)
        trace = part if trace is None else Trace.concatenate(trace, part)
        if out is not None and checkpoint_every > 0:
            trace.to_csv(out / "trace.csv")
            sampler.save_checkpoint(out / "checkpoint.json")
    if out is not None:
        sampler.save_checkpoint(out / "checkpoint.json")
    trace.burn_in = chain_cfg.burn_in
    return trace


def write_inversion_outputs(out, trace: Trace, model: InversionModel, truth=None, label=""):
    """Trace, summary, metrics and plot-data CSVs for one inversion."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    summary = diagnostics.summarize(trace)
    k = diagnostics.parameter_count(model.layout.size, model.n_sensors)
    summary.bic = diagnostics.bic(trace, model.n_obs, k)
    summary.rmse = diagnostics.rmse(trace, model)
    summary.to_csv(out / "summary.csv")
    summary.to_json(out / "summary.json")
    _write_rows(out / "metrics.csv", ["run", "n_obs", "k", "BIC", "RMSE", "acceptance", "metric_fallbacks"],
                [[label, model.n_obs, k, summary.bic, summary.rmse, summary.acceptance_rate,
                  summary.metric_fallbacks]])
    diagnostics.write_box_whisker(out / "box_whisker.csv", trace, run=label,
                                  truth=_flat_truth(truth) if truth else None)
    diagnostics.write_density_grid(out / "location_density.csv", trace)
    return summary


def invert(cfg: ScenarioConfig, data: Dataset, out, checkpoint_every=0, resume=False, label="",
           dispersion=None, estimate=None, box=None, source=None, n_iter=None, burn_in=None):
    _, _, chain_seed = derive_seeds(cfg.seed)
    model = inversion_model(cfg, data, dispersion, estimate, box, source)
    ccfg = chain_config(cfg, chain_seed, n_iter, burn_in)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    trace = run_sampler(model, ccfg, init_config(cfg), out, checkpoint_every, resume)
    summary = write_inversion_outputs(out, trace, model, data.truth, label)
    return model, trace, summary


# --------------------------------------------------------------- commands


def cmd_simulate(cfg: ScenarioConfig, out):
    """Write wind, sensors, observations and ground truth for the scenario."""
    out = Path(out)
    data = simulate(cfg)
    files = data.write(out)
    write_manifest(out, "simulate", cfg, files)
    return data


def cmd_invert(cfg: ScenarioConfig, out, data_dir=None, checkpoint_every=0, resume=False):
    """Invert a dataset (simulating the configured scenario when none is given)."""
    out = Path(out)
    if data_dir is None:
        data = simulate(cfg)
        data.write(out / "data")
    else:
        data = Dataset.read(data_dir)
    _, trace, summary = invert(cfg, data, out, checkpoint_every, resume, label=cfg.name)
    write_manifest(out, "invert", cfg, _data_files(out))
    return trace, summary


def main_effects_configs(cfg: ScenarioConfig):
    """The 13 one-factor-at-a-time configs: all-M plus L and H for each factor."""
    base = cfg.with_levels(**{f: "M" for f in FACTORS})
    runs = [("M", base.model_copy(update={"name": "M"}))]
    for f in FACTORS:
        for lv in ("L", "H"):
            name = f"{f}-{lv}"
            runs.append((name, base.with_levels(**{f: lv}).model_copy(update={"name": name})))
    return runs


def _main_effects_job(args):
    name, doc, out = args
    cfg = ScenarioConfig.from_dict(doc)
    try:
        data = simulate(cfg)
        data.write(Path(out) / "data")
        invert(cfg, data, out, label=name)
        return name, None
    except Exception as exc:  # a failed run is recorded and the sweep continues
        log.error("run %s failed: %s", name, exc)
        return name, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def _run_jobs(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, jobs))


def cmd_main_effects(cfg: ScenarioConfig, out, workers=1):
    """Run the one-factor-at-a-time sweep, one independent job per config."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    runs = main_effects_configs(cfg)
    rows = [[name, *(getattr(c.levels, f) for f in FACTORS), c.digest()] for name, c in runs]
    _write_rows(out / "sweep.csv", ["run", *FACTORS, "config_sha256"], rows)
    jobs = [(name, c.to_dict(), str(out / "runs" / name)) for name, c in runs]
    results = dict(_run_jobs(_main_effects_job, jobs, workers))
    _collect_runs(out, [name for name, _ in runs], results)
    write_manifest(out, "main-effects", cfg, _data_files(out),
                   extra={"runs": [{"run": r[0], "config_sha256": r[-1]} for r in rows]})
    return results


def misspec_runs(cfg: ScenarioConfig):
    """(label, fixed dispersion values or None for "est.") for the bias study."""
    truth = tuple(cfg.misspec.truth)
    runs = [("truth", truth), ("est.", None)]
    for name in DISPERSION_NAMES:
        i = DISPERSION_NAMES.index(name)
        for v in cfg.misspec.wrong.get(name, []):
            values = list(truth)
            values[i] = float(v)
            runs.append((f"{name}={v:g}", tuple(values)))
    return runs


def _misspec_job(args):
    label, fixed, doc, out, data_dir = args
    cfg = ScenarioConfig.from_dict(doc)
    try:
        data = Dataset.read(data_dir)
        if fixed is None:
            invert(cfg, data, out, label=label, estimate=True)
        else:
            invert(cfg, data, out, label=label, dispersion=DispersionSpec("Draxler", draxler_params=fixed),
                   estimate=False)
        return label, None
    except Exception as exc:
        log.error("run %s failed: %s", label, exc)
        return label, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def cmd_misspec_study(cfg: ScenarioConfig, out, workers=1):
    """Fix one dispersion parameter at a time at a wrong value; compare with "truth" and "est."."""
    out = Path(out)
    data = simulate(cfg, dispersion_truth=cfg.misspec.truth)
    data.write(out / "data")
    runs = misspec_runs(cfg)
    jobs = [(label, fixed, cfg.to_dict(), str(out / "runs" / _safe(label)), str(out / "data"))
            for label, fixed in runs]
    results = dict(_run_jobs(_misspec_job, jobs, workers))
    _collect_runs(out, [label for label, _ in runs], results, dirs={l: _safe(l) for l, _ in runs})
    _write_rows(out / "misspec_runs.csv", ["run", *DISPERSION_NAMES],
                [[label, *(fixed if fixed else ["est"] * 4)] for label, fixed in runs])
    write_manifest(out, "misspec-study", cfg, _data_files(out))
    return results


def chilbolton_dispersion(model_name, est_smith_class="B"):
    """(DispersionSpec, estimate) for one of the comparison models."""
    if model_name == "est-draxler":
        return DispersionSpec("Draxler"), True
    if model_name == "est-smith":
        return DispersionSpec("Smith", asc_class=est_smith_class, smith_scale=(1.0, 1.0)), True
    scheme, cls = model_name.split(":")
    return DispersionSpec(scheme.capitalize(), asc_class=cls), False


def cmd_chilbolton(cfg: ScenarioConfig, out, data_dir=None, workers=1):
    """Invert field data with each model and tabulate BIC and RMSE."""
    out = Path(out)
    chil = cfg.chilbolton
    data_dir = data_dir or chil.data_dir
    if data_dir is None:
        data_dir = out / "fixture"
        write_chilbolton_fixture(data_dir, seed=cfg.seed)
    obs, array, report = ingest_chilbolton(data_dir, chil.aggregation)
    n_iter, burn_in = chil.iterations[chil.release]
    ingest_dir = out / "ingested"
    ingest_dir.mkdir(parents=True, exist_ok=True)
    obs.to_csv(ingest_dir / "observations.csv")
    obs.wind.to_csv(ingest_dir / "wind.csv")
    array.to_json(ingest_dir / "sensors.json")
    truth_path = Path(data_dir) / "truth.json"
    truth = json.loads(truth_path.read_text()) if truth_path.exists() else {}
    jobs = [(m, cfg.to_dict(), str(out / "models" / _safe(m)), str(ingest_dir), truth, n_iter, burn_in)
            for m in chil.models]
    results = dict(_run_jobs(_chilbolton_job, jobs, workers))
    rows = []
    for m in chil.models:
        path = out / "models" / _safe(m) / "metrics.csv"
        if results[m] is None and path.exists():
            with open(path, newline="") as fh:
                rec = next(csv.DictReader(fh))
            rows.append([m, rec["BIC"], rec["RMSE"], rec["k"], rec["n_obs"]])
        else:
            rows.append([m, "", "", "", ""])
    _write_rows(out / "comparison.csv", ["model", "BIC", "RMSE", "k", "n_obs"], rows)
    _write_failures(out, results)
    write_manifest(out, "chilbolton", cfg, _data_files(out),
                   extra={"ingest_warnings": report.warning_count, "n_iter": n_iter, "burn_in": burn_in})
    return results


def _chilbolton_job(args):
    model_name, doc, out, ingest_dir, truth, n_iter, burn_in = args
    cfg = ScenarioConfig.from_dict(doc)
    chil = cfg.chilbolton
    try:
        wind = WindRecord.from_csv(Path(ingest_dir) / "wind.csv")
        array = SensorArray.from_json(Path(ingest_dir) / "sensors.json")
        obs = Observations.from_csv(Path(ingest_dir) / "observations.csv", wind, array.ids)
        data = Dataset(cfg, array, wind, obs, truth)
        disp, est = chilbolton_dispersion(model_name, chil.est_smith_class)
        s = chil.source
        src = SourceGeometry.at(s.x, s.y, s.z, s.half_width, s.half_height)
        invert(cfg, data, out, label=model_name, dispersion=disp, estimate=est, box=chil.box, source=src,
               n_iter=n_iter, burn_in=burn_in)
        return model_name, None
    except Exception as exc:
        log.error("model %s failed: %s", model_name, exc)
        return model_name, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


# ------------------------------------------------------ synthetic field data


FIXTURE_REFLECTORS = ((20.0, -30.0), (25.0, -15.0), (30.0, 0.0), (25.0, 15.0), (20.0, 30.0),
                      (40.0, -10.0), (40.0, 10.0))


def write_chilbolton_fixture(path, seed=0, source=(0.0, 0.0, 0.0), rate=0.00039,
                             draxler=(1.3, 0.85, 0.9, 0.9), minutes=40, scan_period=3.0,
                             coverage=90.0, noise_sd=0.05, background=1.93, half_width=1.0,
                             drop=()):
    """Chilbolton-like directory with a known Draxler-scheme truth.

    Seven beams run from a spectrometer at (60, 0, 1.5) to reflectors
    downwind of the source. The anemometer logs at 1 Hz; each beam is scanned
    once every ``scan_period`` seconds. Scan concentrations use the plume at
    the window-aggregated wind, so the aggregated data follow the Draxler
    model exactly apart from noise and background.

    Args:
        drop: (beam_id, window) pairs whose scans are omitted.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    rng_seeds = np.random.SeedSequence(seed).spawn(4)
    origin = (60.0, 0.0, 1.5)
    array = SensorArray([Sensor.beam(f"B{k + 1}", origin, (x, y, 1.5))
                         for k, (x, y) in enumerate(FIXTURE_REFLECTORS)])
    duration = int(minutes * 60)
    scen = WindScenario(speed_mean=4.0, speed_std=0.5, coverage=coverage, duration=duration, dt=1.0)
    raw = synthesize_wind(scen, seed=int(rng_seeds[0].generate_state(1)[0]))
    elevation = simulate_ou(OUParams(0.0, 6.0, 0.2, 1.0), duration, seed=rng_seeds[1])
    with open(path / "wind.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "speed", "direction_deg", "elevation_deg"])
        for i in range(duration):
            w.writerow([repr(float(raw.t[i])), repr(float(raw.speed[i])), repr(float(raw.direction[i])),
                        repr(float(elevation[i]))])
    array.to_json(path / "sensors.json")

    # placeholder scans, so ingestion yields the aggregated wind record
    n_scan = int(duration / scan_period)
    times = np.arange(n_scan) * scan_period
    with open(path / "concentrations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "beam_id", "ppm"])
        for t in times:
            for sid in array.ids:
                w.writerow([repr(float(t)), sid, "0.0"])
    obs, _, _ = ingest_chilbolton(path, 60.0)
    src = SourceGeometry.at(*source, half_width=half_width)
    A = coupling_matrix([src], array, obs.wind, DispersionSpec("Draxler", draxler_params=draxler), AtmosphereSpec())
    signal = rate * np.asarray(A)[:, 0].reshape(len(array), len(obs.wind))
    beta = background + 0.01 * np.random.default_rng(rng_seeds[2]).standard_normal(len(array))
    noise_rng = np.random.default_rng(rng_seeds[3])
    dropped = {(b, int(wi)) for b, wi in drop}
    with open(path / "concentrations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "beam_id", "ppm"])
        for t in times:
            win = int(t // 60.0)
            for j, sid in enumerate(array.ids):
                ppm = signal[j, win] + beta[j] + noise_sd * noise_rng.standard_normal()
                if (sid, win) in dropped:
                    continue
                w.writerow([repr(float(t + j * scan_period / len(array))), sid, repr(float(ppm))])
    truth = {"s": rate, "x": source[0], "y": source[1], "z": source[2],
             **dict(zip(DISPERSION_NAMES, draxler)), "noise_sd": noise_sd,
             "beta": {sid: float(b) for sid, b in zip(array.ids, beta)}}
    _write_json(path / "truth.json", truth)
    return path


# --------------------------------------------------------------- outputs


def _safe(label):
    return label.replace(":", "-").replace("=", "-").replace(".", "")


def _flat_truth(truth):
    return {k: v for k, v in truth.items() if isinstance(v, (int, float))}


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_failures(out, results):
    _write_rows(Path(out) / "failures.csv", ["run", "error"],
                [[k, v.splitlines()[0]] for k, v in results.items() if v is not None])


def _collect_runs(out, names, results, dirs=None):
    """Concatenate per-run box-whisker and summary CSVs; record failures."""
    dirs = dirs or {n: n for n in names}
    box, summ = [], []
    box_header = summ_header = None
    for n in names:
        run_dir = Path(out) / "runs" / dirs[n]
        if results.get(n) is not None:
            continue
        with open(run_dir / "box_whisker.csv", newline="") as fh:
            r = csv.reader(fh)
            box_header = next(r)
            box += list(r)
        with open(run_dir / "summary.csv", newline="") as fh:
            r = csv.reader(fh)
            summ_header = ["run", *next(r)]
            summ += [[n, *row] for row in r]
    if box_header:
        _write_rows(Path(out) / "box_whisker.csv", box_header, box)
        _write_rows(Path(out) / "summary.csv", summ_header, summ)
    _write_failures(out, results)


def _data_files(out):
    out = Path(out)
    return sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions():
    out = {"python": platform.python_version()}
    for pkg in ("plumeinv", "numpy", "scipy", "jax", "jaxlib", "pydantic", "pyyaml"):
        try:
            out[pkg] = metadata.version("artifact" if pkg == "plumeinv" else pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(out, command, cfg: ScenarioConfig, files, extra=None):
    out = Path(out)
    doc = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": versions(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": {str(Path(f).relative_to(out)): _sha256(f) for f in files},
    }
    if extra:
        doc.update(extra)
    _write_json(out / "manifest.json", doc)
    return doc

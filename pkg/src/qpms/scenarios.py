"""Scenario files, named presets, orchestration and result persistence."""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from qpms import __version__
from qpms.engine import BeamConfig, DetectorModel, SorterConfig, delay_scan, measure_pair, propagate_sfg
from qpms.errors import ConfigurationError, ContractError
from qpms.medium import CrystalSpec, phase_matching_curve
from qpms.metrics import (
    CountsMatrix,
    TrendPoint,
    mub_catalog,
    sweep_selectivity,
    tomography,
    trend_report,
)
from qpms.modes import (
    ModeLabel,
    SpatialGrid,
    TemporalGrid,
    export_spectrum_csv,
    fit_comb_to_mode,
    product_catalog,
    temporal_factor,
)
from qpms.optimizer import PsoConfig, optimize_pump

log = logging.getLogger(__name__)


class ScenarioValidationError(ConfigurationError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ScenarioRuntimeError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required: list[str] | None = None) -> dict:
    out = {"type": "object", "properties": props, "additionalProperties": False}
    if required:
        out["required"] = required
    return out


_TERM = _obj({"l": {"type": "integer"}, "m": {"type": "integer", "minimum": 0},
              "coeff_re": _NUM, "coeff_im": _NUM}, ["l", "m"])
_LABEL = _obj({"name": {"type": "string"}, "terms": {"type": "array", "items": _TERM, "minItems": 1}}, ["terms"])
_CATALOG = {
    "type": "object",
    "properties": {
        "labels": {"type": "array", "items": _LABEL, "minItems": 1},
        "product": _obj({"l": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                         "m": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}},
                        ["l", "m"]),
        "mub": _obj({"l": {"type": "integer"}}),
    },
    "additionalProperties": False,
    "minProperties": 1,
    "maxProperties": 1,
}
_BEAM = _obj({"waist_um": _POS, "width_ps": _POS, "carrier_nm": _POS, "use_comb": {"type": "boolean"},
              "phase_only": {"type": "boolean"}, "modes": _CATALOG})
_GRIDS = _obj({
    "spatial": _obj({"nx": {"type": "integer", "minimum": 8}, "ny": {"type": "integer", "minimum": 8},
                     "extent_x_um": _POS, "extent_y_um": _POS}),
    "temporal": _obj({"nt": {"type": "integer", "minimum": 64}, "window_ps": _POS}),
})
_CRYSTAL = _obj({"length_cm": _POS, "walkoff_ps_per_cm": {"type": "number", "minimum": 0},
                 "delta_k_rad_per_cm": _NUM, "kappa": _POS, "nz_steps": {"type": "integer", "minimum": 16},
                 "diffraction": {"type": "boolean"}, "depleted": {"type": "boolean"}})
_DETECTOR = _obj({"fiber_waist_um": _POS, "scale": _POS, "normalize_peak": {"type": ["number", "null"]},
                  "poisson": {"type": "boolean"}})
_SCHEDULE = _obj({"initial": {"type": "number", "minimum": 0}, "final": {"type": ["number", "null"], "minimum": 0},
                  "shape": {"enum": ["linear", "exponential", "constant"]}}, ["initial"])
_OPTIMIZER = _obj({"ensemble_size": {"type": "integer", "minimum": 2}, "dims": {"type": "integer", "minimum": 1},
                   "w": _SCHEDULE, "w_p": _SCHEDULE, "w_g": _SCHEDULE,
                   "max_iters": {"type": "integer", "minimum": 0}, "seed": {"type": "integer"},
                   "variant": {"enum": ["standard-delta", "verbatim-eq2"]},
                   "per_dimension_random": {"type": "boolean"}})
_OVERRIDES = _obj({"grids": _GRIDS, "crystal": _CRYSTAL, "detector": _DETECTOR, "pump": _BEAM, "signal": _BEAM,
                   "delays_ps": {"type": "array", "items": _NUM, "minItems": 1}, "jitter_ps": {"type": "number",
                                                                                               "minimum": 0}})
_STUDY = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["tomography", "delay_scan", "trend", "spectra", "spatial_images", "phase_matching"]},
        "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "overrides": _OVERRIDES,
        "optimize": {"type": "boolean"},
        "subplots": {"type": "boolean"},
        "scale": {"enum": ["linear", "log"]},
        "pairs": {"oneOf": [{"enum": ["all", "diagonal"]},
                            {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                                        "minItems": 2, "maxItems": 2}}]},
        "axis": {"enum": ["length", "pulse_width", "optimization", "delta_k"]},
        "values": {"type": "array", "items": _NUM, "minItems": 1},
        "direction": {"enum": ["increasing", "decreasing", "nondecreasing", "none"]},
        "format": {"enum": ["pgm", "csv", "both"]},
        "wavelengths_nm": _obj({"start": _POS, "stop": _POS, "num": {"type": "integer", "minimum": 4}},
                               ["start", "stop", "num"]),
        "lengths_cm": {"type": "array", "items": _POS, "minItems": 1},
        "fatal": {"type": "boolean"},
    },
    "additionalProperties": False,
}
SCENARIO_SCHEMA = _obj({
    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "description": {"type": "string"},
    "seed": {"type": "integer"},
    "grids": _GRIDS,
    "crystal": _CRYSTAL,
    "detector": _DETECTOR,
    "comb": _obj({"n_lines": {"type": "integer", "minimum": 1}, "spacing_ghz": _POS}),
    "pump": _BEAM,
    "signal": _BEAM,
    "delays_ps": {"type": "array", "items": _NUM, "minItems": 1},
    "jitter_ps": {"type": "number", "minimum": 0},
    "tolerance": _POS,
    "optimizer": _OPTIMIZER,
    "output_dir": {"type": "string"},
    "studies": {"type": "array", "items": _STUDY, "minItems": 1},
}, ["name", "pump", "signal", "studies"])


def _json_path(error: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path)


def validate_scenario(data: Any) -> dict:
    """Schema and semantic validation; raises ScenarioValidationError with a field path."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioValidationError(_json_path(e), e.message)
    stochastic = bool(data.get("detector", {}).get("poisson")) or data.get("jitter_ps", 0) > 0 \
        or "optimizer" in data
    if stochastic and "seed" not in data:
        raise ScenarioValidationError("/seed", "a seed is required when Poisson detection, jitter or PSO is enabled")
    delays = data.get("delays_ps")
    if delays is not None:
        if 0.0 not in delays:
            raise ScenarioValidationError("/delays_ps", "the delay grid must contain 0.0")
        if delays != sorted(delays):
            raise ScenarioValidationError("/delays_ps", "delays must be sorted")
    ids = [s.get("id", f"{k:02d}-{s['type']}") for k, s in enumerate(data["studies"])]
    if len(set(ids)) != len(ids):
        raise ScenarioValidationError("/studies", "study ids must be unique")
    try:
        for k, study in enumerate(data["studies"]):
            build_config(merge(data, study.get("overrides", {})))
    except (ConfigurationError, ContractError) as exc:
        raise ScenarioValidationError(f"/studies/{k}", str(exc)) from exc
    return data


def merge(base: dict, overrides: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def scenario_hash(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------------------
# building runtime objects


def catalog_labels(catalog: dict, role: str) -> list[ModeLabel]:
    if "labels" in catalog:
        return [ModeLabel.from_dict(d, role) for d in catalog["labels"]]
    if "product" in catalog:
        return product_catalog(catalog["product"]["l"], catalog["product"]["m"], role)
    return mub_catalog(l=catalog["mub"].get("l", 0), role=role)


def _beam(data: dict, default_carrier: float) -> BeamConfig:
    return BeamConfig(waist=float(data.get("waist_um", 300.0)), width=float(data.get("width_ps", 2.0)),
                      carrier=float(data.get("carrier_nm", default_carrier)),
                      use_comb=bool(data.get("use_comb", False)), phase_only=bool(data.get("phase_only", False)))


def build_config(data: dict, poisson: bool | None = None) -> SorterConfig:
    grids = data.get("grids", {})
    pump = _beam(data["pump"], 1551.0)
    signal = _beam(data["signal"], 1559.0)
    sp = grids.get("spatial", {})
    extent = 3.0 * max(pump.waist, signal.waist)
    spatial = SpatialGrid(int(sp.get("nx", 128)), int(sp.get("ny", 128)),
                          float(sp.get("extent_x_um", extent)), float(sp.get("extent_y_um", extent)))
    tp = grids.get("temporal", {})
    temporal = TemporalGrid(int(tp.get("nt", 512)), float(tp.get("window_ps", 40.0)))
    det = data.get("detector", {})
    use_poisson = det.get("poisson", False) if poisson is None else poisson
    seed = int(data.get("seed", 0))
    detector = DetectorModel(float(det.get("fiber_waist_um", pump.waist / math.sqrt(2.0))),
                             float(det.get("scale", 1.0)), seed if use_poisson else None)
    comb = data.get("comb", {})
    config = SorterConfig(spatial, temporal, CrystalSpec.from_dict(data.get("crystal", {})), detector, pump, signal,
                          int(comb.get("n_lines", 37)), float(comb.get("spacing_ghz", 25.0)),
                          float(data.get("jitter_ps", 0.0)), seed, float(data.get("tolerance", 1e-4)))
    for beam in (pump, signal):
        spatial.check_waist(beam.waist)
        temporal.check_width(beam.width)
        if beam.use_comb:
            temporal.check_comb(config.comb_spacing_ghz)
    return config


@dataclass
class Scenario:
    data: dict

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def hash(self) -> str:
        return scenario_hash(self.data)

    @classmethod
    def load(cls, source: str | Path, seed: int | None = None, poisson: bool | None = None) -> "Scenario":
        source = str(source)
        if source in PRESET_ALIASES or preset_path(source) is not None:
            data = json.loads(preset_path(PRESET_ALIASES.get(source, source)).read_text())
        else:
            try:
                data = json.loads(Path(source).read_text())
            except FileNotFoundError:
                raise ScenarioValidationError("/", f"no preset or file named {source!r}") from None
            except json.JSONDecodeError as exc:
                raise ScenarioValidationError("/", f"invalid JSON: {exc}") from None
        if seed is not None:
            data["seed"] = int(seed)
        if poisson is not None:
            data.setdefault("detector", {})["poisson"] = bool(poisson)
        return cls(validate_scenario(data))


# ---------------------------------------------------------------------------
# presets

PRESET_ALIASES = {"table4": "appendixC"}


def preset_path(name: str) -> Path | None:
    path = resources.files("qpms") / "presets" / f"{name}.json"
    return Path(str(path)) if path.is_file() else None


def list_presets() -> dict[str, str]:
    """Preset name -> one-line description."""
    folder = Path(str(resources.files("qpms") / "presets"))
    out = {}
    for path in sorted(folder.glob("*.json")):
        out[path.stem] = json.loads(path.read_text()).get("description", "")
    for alias, target in PRESET_ALIASES.items():
        out[alias] = f"alias of {target}: {out.get(target, '')}"
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# outputs


class Collector:
    """Serializes all file writes for one run and records their digests."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def json(self, name: str, payload) -> None:
        self.path(name).write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def csv(self, name: str, header: list[str], rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])

    def text(self, name: str, content: str) -> None:
        self.path(name).write_text(content)

    def digests(self) -> list[dict]:
        out = []
        for p in sorted(set(self.files)):
            blob = p.read_bytes()
            out.append({"path": p.relative_to(self.root).as_posix(), "sha256": hashlib.sha256(blob).hexdigest(),
                        "bytes": len(blob)})
        return out


@dataclass
class RunManifest:
    scenario: str
    scenario_hash: str
    tool_version: str
    started: str
    finished: str
    files: list[dict]
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    def digests(self) -> dict[str, str]:
        return {f["path"]: f["sha256"] for f in self.files}


def _finite(x: float):
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def write_pgm(path: Path, image: np.ndarray, peak: float) -> None:
    scaled = np.zeros_like(image) if peak <= 0 else np.clip(image / peak, 0, 1)
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())


def _plot_spec(kind: str, title: str, data: str, x: str, y: str, series: str | None = None, **extra) -> dict:
    spec = {"kind": kind, "title": title, "data": data, "x": x, "y": y}
    if series:
        spec["series"] = series
    spec.update(extra)
    return spec


# ---------------------------------------------------------------------------
# studies


class Runner:
    def __init__(self, scenario: Scenario, out_dir: Path, jobs: int = 1):
        self.scenario = scenario
        self.jobs = max(1, jobs)
        self.out = Collector(out_dir)
        self.failures: list[str] = []

    def context(self, study: dict):
        data = merge(self.scenario.data, study.get("overrides", {}))
        config = build_config(data)
        pumps = catalog_labels(data["pump"].get("modes", {"product": {"l": [0], "m": [0]}}), "pump")
        signals = catalog_labels(data["signal"].get("modes", {"product": {"l": [0], "m": [0]}}), "signal")
        return data, config, pumps, signals

    def pso_config(self, data: dict) -> PsoConfig:
        opt = dict(data.get("optimizer", {}))
        opt.setdefault("seed", int(data.get("seed", 0)))
        return PsoConfig.from_dict(opt)

    def evaluate(self, f, xs):
        if self.jobs == 1:
            return [f(x) for x in xs]
        with ThreadPoolExecutor(self.jobs) as pool:
            return list(pool.map(f, xs))

    def finish_matrix(self, matrix: CountsMatrix, data: dict) -> CountsMatrix:
        peak = data.get("detector", {}).get("normalize_peak", 1e4)
        matrix = matrix.normalized(peak) if peak else matrix
        matrix.metadata["scenario_hash"] = self.scenario.hash
        if matrix.flags:
            self.failures += [f"cell {k}: {v}" for k, v in sorted(matrix.flags.items())]
        return matrix

    def write_matrix(self, prefix: str, matrix: CountsMatrix, subplots: bool, scale: str = "linear") -> None:
        matrix.write_csv(self.out.path(f"{prefix}counts.csv"))
        matrix.write_json(self.out.path(f"{prefix}counts.json"))
        report = matrix.selectivity_report()
        self.out.json(f"{prefix}selectivity.json", report.to_dict())
        self.out.text(f"{prefix}selectivity.txt", report.table() + "\n")
        self.out.json(f"{prefix}plot_spec.json", _plot_spec("bar", "SF counts per pump/signal pair",
                                                            f"{prefix}counts.csv", "signal", "counts", "pump",
                                                            scale=scale))
        if subplots:
            rows = []
            for i, p in enumerate(matrix.pump_labels):
                for j, s in enumerate(matrix.signal_labels):
                    rows.append((p.terms[0].m, s.terms[0].m, p.terms[0].l, s.terms[0].l, float(matrix.counts[i, j])))
            rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
            self.out.csv(f"{prefix}subplots.csv", ["pump_m", "signal_m", "pump_l", "signal_l", "counts"], rows)
            self.out.json(f"{prefix}subplots_plot_spec.json",
                          _plot_spec("bar3d-grid", "SF counts per temporal subplot", f"{prefix}subplots.csv",
                                     "signal_l", "counts", "pump_l", facet_row="pump_m", facet_col="signal_m",
                                     scale=scale))

    def optimized_matrix(self, sid: str, data: dict, config: SorterConfig, pumps, signals) -> CountsMatrix:
        """Per-pump PSO; each optimized pump row is re-measured against the full signal set."""
        pso = self.pso_config(data)
        cfg = config.replace(pump=replace(config.pump, use_comb=True))
        rows = []
        for i, pump in enumerate(pumps):
            result, objective, spec = optimize_pump(cfg, pump, signals, replace(pso, seed=pso.seed + i),
                                                    self.evaluate)
            name = pump.display_name
            self.out.csv(f"{sid}/pso_{name}.csv", ["iter", "best_objective"],
                         [(k, float(v)) for k, v in enumerate(result.trace.best_objective)])
            self.out.json(f"{sid}/pso_{name}.json", {"pump": name, "initial_selectivity_db":
                                                      _finite(objective(objective.initial_phases)),
                                                      "best_selectivity_db": _finite(result.best_objective),
                                                      "config": pso.to_dict(), "trace": {
                                                          "best_objective": [_finite(v) for v in
                                                                             result.trace.best_objective],
                                                          "spread": [_finite(v) for v in result.trace.spread],
                                                          "events": result.trace.events},
                                                      "optimized_comb": spec.to_dict()})
            pump_field = objective.pump_for(result.best_phases)
            rows.append([measure_pair(pump_field, cfg.signal_field(s), cfg, (i, j)).counts
                         for j, s in enumerate(signals)])
        meta = {"crystal": config.crystal.to_dict(), "optimized": True}
        return CountsMatrix(list(pumps), list(signals), np.asarray(rows, dtype=float), meta)

    # -- study kinds --

    def run_tomography(self, sid: str, study: dict) -> None:
        data, config, pumps, signals = self.context(study)
        delays = data.get("delays_ps")
        matrix = self.finish_matrix(tomography(pumps, signals, config, delays=delays, jobs=self.jobs), data)
        subplots, scale = study.get("subplots", False), study.get("scale", "linear")
        self.write_matrix(f"{sid}/", matrix, subplots, scale)
        if study.get("optimize"):
            opt = self.finish_matrix(self.optimized_matrix(sid, data, config, pumps, signals), data)
            self.write_matrix(f"{sid}/optimized_", opt, subplots, scale)

    def run_delay_scan(self, sid: str, study: dict) -> None:
        data, config, pumps, signals = self.context(study)
        delays = data.get("delays_ps") or [float(d) for d in np.linspace(-8, 8, 33)]
        pairs = study.get("pairs", "all")
        if pairs == "all":
            pairs = [(i, j) for i in range(len(pumps)) for j in range(len(signals))]
        elif pairs == "diagonal":
            pairs = [(i, i) for i in range(min(len(pumps), len(signals)))]
        summary = []

        def scan(pair):
            i, j = pair
            return delay_scan(pumps[i], signals[j], delays, config, (i, j))

        if self.jobs > 1:
            with ThreadPoolExecutor(self.jobs) as pool:
                traces = list(pool.map(scan, pairs))
        else:
            traces = [scan(p) for p in pairs]
        for (i, j), trace in zip(pairs, traces):
            name = f"{pumps[i].display_name}__{signals[j].display_name}"
            self.out.csv(f"{sid}/trace_{name}.csv", ["delay_ps", "counts"],
                         [(float(d), float(c)) for d, c in zip(trace.delays, trace.counts)])
            summary.append({"pump": pumps[i].display_name, "signal": signals[j].display_name,
                            "zero_delay_counts": trace.zero_delay, "peak_counts": trace.peak,
                            "peak_delay_ps": trace.peak_delay, "jitter_offset_ps": trace.offset,
                            "converged": trace.converged})
        self.out.json(f"{sid}/traces.json", {"delays_ps": list(delays), "pairs": summary})
        self.out.json(f"{sid}/plot_spec.json", _plot_spec("line", "SF counts vs pump delay", f"{sid}/trace_*.csv",
                                                          "delay_ps", "counts", "file"))

    def run_trend(self, sid: str, study: dict) -> None:
        data, config, pumps, signals = self.context(study)
        axis = study["axis"]
        direction = study.get("direction")
        if axis == "optimization":
            base = self.finish_matrix(tomography(pumps, signals, config, jobs=self.jobs), data)
            opt = self.finish_matrix(self.optimized_matrix(sid, data, config, pumps, signals), data)
            self.write_matrix(f"{sid}/unoptimized_", base, False)
            self.write_matrix(f"{sid}/optimized_", opt, False)
            points = [TrendPoint("unoptimized", base.selectivity_report().by_pump()),
                      TrendPoint("optimized", opt.selectivity_report().by_pump())]
        else:
            points = sweep_selectivity(config, axis, study["values"], pumps, signals, self.jobs)
        if direction == "none":
            report = trend_report(points, axis, "nondecreasing")
            payload = report.to_dict() | {"direction": "none", "passed": {}, "all_passed": True}
        else:
            report = trend_report(points, axis, direction)
            payload = report.to_dict()
        self.out.json(f"{sid}/trend.json", payload)
        rows = [(p.value, name, float(s)) for p in points for name, s in p.selectivity.items()]
        self.out.csv(f"{sid}/trend.csv", [axis, "pump", "selectivity_db"], rows)
        self.out.json(f"{sid}/plot_spec.json", _plot_spec("line", f"selectivity vs {axis}", f"{sid}/trend.csv",
                                                          axis, "selectivity_db", "pump"))

    def run_spectra(self, sid: str, study: dict) -> None:
        data, config, pumps, signals = self.context(study)
        for role, labels, beam in (("pump", pumps, config.pump), ("signal", signals, config.signal)):
            template = config.comb_template(beam)
            for label in labels:
                target, _ = temporal_factor([(t.m, t.coeff) for t in label.terms], beam.width,
                                            config.temporal_grid, 0.0)
                fit = fit_comb_to_mode(target, template, config.temporal_grid, beam.phase_only)
                export_spectrum_csv(fit.spec, self.out.path(f"{sid}/spectrum_{role}_{label.display_name}.csv"))
                self.out.json(f"{sid}/comb_{role}_{label.display_name}.json",
                              fit.spec.to_dict() | {"fidelity": fit.fidelity})
        self.out.json(f"{sid}/plot_spec.json", _plot_spec("stem", "comb line power", f"{sid}/spectrum_*.csv",
                                                          "wavelength_nm", "power_db", "file"))

    def run_spatial_images(self, sid: str, study: dict) -> None:
        data, config, pumps, signals = self.context(study)
        fmt = study.get("format", "pgm")
        images = {}
        for i, p in enumerate(pumps):
            pf = config.pump_field(p)
            for j, s in enumerate(signals):
                res = propagate_sfg(pf, config.signal_field(s), config.crystal, tol=config.tol)
                images[(p.display_name, s.display_name)] = res.sf_field.spatial_intensity()
        peak = max(float(img.max()) for img in images.values())
        for (pn, sn), img in images.items():
            if fmt in ("pgm", "both"):
                write_pgm(self.out.path(f"{sid}/sf_{pn}__{sn}.pgm"), img, peak)
            if fmt in ("csv", "both"):
                self.out.csv(f"{sid}/sf_{pn}__{sn}.csv", [f"y{k}" for k in range(img.shape[1])],
                             [[float(v) for v in row] for row in img])
        self.out.json(f"{sid}/images.json", {"peak_intensity": peak, "pairs": [f"{a}__{b}" for a, b in images]})

    def run_phase_matching(self, sid: str, study: dict) -> None:
        data, config, pumps, signals = self.context(study)
        wl = study.get("wavelengths_nm", {"start": 1549.0, "stop": 1553.0, "num": 401})
        grid = np.linspace(wl["start"], wl["stop"], wl["num"])
        fits = []
        for length in study.get("lengths_cm", [config.crystal.length]):
            crystal = config.crystal.replace(length=float(length))
            curve = phase_matching_curve(crystal, grid, config.pump.carrier)
            self.out.csv(f"{sid}/pm_{length:g}cm.csv", ["wavelength_nm", "efficiency"],
                         [(float(a), float(b)) for a, b in zip(curve.wavelengths, curve.efficiency)])
            fits.append({"length_cm": float(length), "center_nm": curve.center, "fwhm_nm": _finite(curve.bandwidth),
                         "walkoff_ps": crystal.walkoff})
        self.out.json(f"{sid}/fits.json", {"curves": fits})

    def run(self) -> RunManifest:
        started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.out.json("scenario.json", self.scenario.data)
        for k, study in enumerate(self.scenario.data["studies"]):
            sid = study.get("id", f"{k:02d}-{study['type']}")
            log.info("study %s (%s)", sid, study["type"])
            before = len(self.failures)
            try:
                getattr(self, f"run_{study['type']}")(sid, study)
            except (ConfigurationError, ContractError) as exc:
                self.failures.append(f"{sid}: {exc}")
            if study.get("fatal") and len(self.failures) > before:
                raise ScenarioRuntimeError(f"study {sid} failed: {self.failures[before:]}")
        if self.failures:
            self.out.json("failures.json", {"failures": self.failures})
        finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
        manifest = RunManifest(self.scenario.name, self.scenario.hash, __version__, started, finished,
                               self.out.digests(), list(self.failures))
        (self.out.root / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
        return manifest


def run_scenario(source: str | Path | Scenario, out_dir: str | Path | None = None, jobs: int | None = None,
                 seed: int | None = None, poisson: bool | None = None) -> RunManifest:
    """Execute every study of a scenario (preset name, JSON path or Scenario) and write a manifest."""
    scenario = source if isinstance(source, Scenario) else Scenario.load(source, seed, poisson)
    root = Path(out_dir) if out_dir is not None else Path(scenario.data.get("output_dir", "results"))
    jobs = jobs if jobs is not None else (os.cpu_count() or 1)
    return Runner(scenario, root / scenario.name, jobs).run()

"""Selectivity scores, tomography matrices, MUB catalogs and trend checks."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from qpms.engine import SorterConfig, delay_scan, measure_pair
from qpms.errors import ConfigurationError, ContractError
from qpms.modes import ModeLabel, superposed_temporal

INFINITE = "infinite"
UNDEFINED = "undefined"
ZERO_DESIRED = "zero-desired"


def selectivity(row: Sequence[float], desired: int) -> float:
    """10 log10(N_D / sum_{i != D} N_i) in dB.

    Returns +inf when only the desired mode has counts and nan when the row is
    all zero; ``selectivity_flag`` names those cases.
    """
    values = [float(v) for v in row]
    if len(values) < 2:
        raise ContractError("selectivity needs at least two modes")
    if not 0 <= desired < len(values):
        raise ContractError(f"desired index {desired} out of range for {len(values)} modes")
    if any(v < 0 for v in values):
        raise ContractError("counts must be non-negative")
    nd = values[desired]
    others = 0.0
    for i, v in enumerate(values):
        if i != desired:
            others += v
    if others == 0.0:
        return math.inf if nd > 0 else math.nan
    if nd == 0.0:
        return -math.inf
    return 10.0 * (math.log10(nd) - math.log10(others))


def selectivity_flag(row: Sequence[float], desired: int) -> str | None:
    s = selectivity(row, desired)
    if math.isnan(s):
        return UNDEFINED
    if s == math.inf:
        return INFINITE
    if s == -math.inf:
        return ZERO_DESIRED
    return None


@dataclass(frozen=True)
class SelectivityRow:
    pump: str
    desired_index: int | None
    selectivity_db: float
    n_desired: float
    n_others: float
    flag: str | None = None


@dataclass(frozen=True)
class SelectivityReport:
    rows: list[SelectivityRow]

    def by_pump(self) -> dict[str, float]:
        return {r.pump: r.selectivity_db for r in self.rows}

    def to_dict(self) -> dict:
        return {"rows": [
            {"pump": r.pump, "desired_index": r.desired_index, "selectivity_db": _json_float(r.selectivity_db),
             "n_desired": _json_float(r.n_desired), "n_others": _json_float(r.n_others), "flag": r.flag}
            for r in self.rows]}

    def table(self) -> str:
        lines = [f"{'pump':<24}{'desired':>8}{'S (dB)':>12}  flag"]
        for r in self.rows:
            lines.append(f"{r.pump:<24}{str(r.desired_index):>8}{r.selectivity_db:>12.3f}  {r.flag or ''}")
        return "\n".join(lines)


def _json_float(x: float):
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


@dataclass(frozen=True, eq=False)
class CountsMatrix:
    pump_labels: list[ModeLabel]
    signal_labels: list[ModeLabel]
    counts: np.ndarray
    metadata: dict = field(default_factory=dict)
    flags: dict[tuple[int, int], str] = field(default_factory=dict)

    def __post_init__(self):
        if self.counts.shape != (len(self.pump_labels), len(self.signal_labels)):
            raise ContractError("counts shape does not match the label lists")
        if np.any(self.counts < 0):
            raise ContractError("counts must be non-negative")

    def desired_indices(self) -> list[int | None]:
        out = []
        for pump in self.pump_labels:
            target = pump.matched_signal()
            match = [j for j, s in enumerate(self.signal_labels) if s.same_state(target)]
            out.append(match[0] if match else None)
        return out

    def selectivity_report(self, desired: Sequence[int | None] | None = None) -> SelectivityReport:
        desired = list(desired) if desired is not None else self.desired_indices()
        rows = []
        for i, pump in enumerate(self.pump_labels):
            d = desired[i]
            row = self.counts[i]
            if d is None or len(row) < 2:
                rows.append(SelectivityRow(pump.display_name, d, math.nan, math.nan, math.nan, UNDEFINED))
                continue
            nd = float(row[d])
            rows.append(SelectivityRow(pump.display_name, d, selectivity(row, d), nd,
                                       float(sum(v for j, v in enumerate(row) if j != d)), selectivity_flag(row, d)))
        return SelectivityReport(rows)

    def normalized(self, peak: float = 1e4) -> "CountsMatrix":
        """Rescale so the largest matched-pair count equals ``peak``."""
        matched = [self.counts[i, d] for i, d in enumerate(self.desired_indices()) if d is not None]
        top = max(matched) if matched else 0.0
        if top <= 0:
            top = self.counts.max() or 1.0
        return CountsMatrix(self.pump_labels, self.signal_labels, self.counts * (peak / top),
                            {**self.metadata, "normalized_peak": peak}, dict(self.flags))

    def to_dict(self) -> dict:
        return {
            "pump_labels": [p.to_dict() | {"display": p.display_name} for p in self.pump_labels],
            "signal_labels": [s.to_dict() | {"display": s.display_name} for s in self.signal_labels],
            "counts": self.counts.tolist(),
            "flags": [{"pump": i, "signal": j, "message": msg} for (i, j), msg in sorted(self.flags.items())],
            "metadata": self.metadata,
        }

    def write_csv(self, path: str | Path) -> None:
        """Long form: one row per pump/signal pair (first term of each label)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pump", "signal", "pump_l", "pump_m", "signal_l", "signal_m", "counts"])
            for i, p in enumerate(self.pump_labels):
                for j, s in enumerate(self.signal_labels):
                    writer.writerow([p.display_name, s.display_name, p.terms[0].l, p.terms[0].m,
                                     s.terms[0].l, s.terms[0].m, repr(float(self.counts[i, j]))])

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def tomography(pump_set: Sequence[ModeLabel], signal_set: Sequence[ModeLabel], config: SorterConfig, *,
               delays: Sequence[float] | None = None, jobs: int = 1) -> CountsMatrix:
    """Zero-delay detected counts for every pump/signal pair.

    With a delay grid and nonzero jitter, each cell reads the delay-scan
    maximum instead, the way the laboratory compensates refresh jitter.
    """
    if not pump_set or not signal_set:
        raise ConfigurationError("tomography needs non-empty pump and signal sets")
    scan = config.jitter_ps > 0 and delays is not None
    failures = (ConfigurationError, ContractError, FloatingPointError)

    def build(make, label):
        try:
            return make(label)
        except failures as exc:
            return exc

    signals = [build(config.signal_field, s) for s in signal_set]
    pumps = [build(config.pump_field, p) for p in pump_set] if not scan else None

    def cell(ij):
        i, j = ij
        try:
            if scan:
                trace = delay_scan(pump_set[i], signal_set[j], delays, config, (i, j))
                return trace.peak, None
            for f in (pumps[i], signals[j]):
                if isinstance(f, Exception):
                    raise f
            return measure_pair(pumps[i], signals[j], config, (i, j)).counts, None
        except failures as exc:
            return 0.0, str(exc)

    cells = [(i, j) for i in range(len(pump_set)) for j in range(len(signal_set))]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(cell, cells))
    else:
        results = [cell(c) for c in cells]
    counts = np.zeros((len(pump_set), len(signal_set)))
    flags = {}
    for (i, j), (value, err) in zip(cells, results):
        counts[i, j] = value
        if err:
            flags[(i, j)] = err
    meta = {"crystal": config.crystal.to_dict(), "spatial_grid": config.spatial_grid.to_dict(),
            "temporal_grid": config.temporal_grid.to_dict(), "read": "delay-scan peak" if scan else "zero delay"}
    return CountsMatrix(list(pump_set), list(signal_set), counts, meta, flags)


def mub_catalog(width: float = 2.0, l: int = 0, role: str = "signal") -> list[ModeLabel]:
    """{T_+, T_-, T_2}: the superposition basis of T_0/T_1 plus the second-order mode."""
    if width <= 0:
        raise ConfigurationError("pulse width must be positive")
    return [superposed_temporal(+1, l, role), superposed_temporal(-1, l, role),
            ModeLabel((ModeLabel.single(l, 2).terms[0],), role, "T2")]


# ---------------------------------------------------------------------------
# trends

TREND_DIRECTIONS = {"length": "increasing", "pulse_width": "decreasing", "optimization": "nondecreasing"}


@dataclass(frozen=True)
class TrendPoint:
    value: float | str
    selectivity: dict[str, float]


@dataclass(frozen=True)
class TrendReport:
    axis: str
    direction: str
    points: list[TrendPoint]
    passed: dict[str, bool]

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "direction": self.direction,
            "points": [{"value": p.value, "selectivity_db": {k: _json_float(v) for k, v in p.selectivity.items()}}
                       for p in self.points],
            "passed": self.passed,
            "all_passed": self.all_passed,
        }


def _monotone(values: Sequence[float], direction: str) -> bool:
    pairs = list(zip(values, values[1:]))
    if direction == "increasing":
        return all(b > a for a, b in pairs)
    if direction == "decreasing":
        return all(b < a for a, b in pairs)
    if direction == "nondecreasing":
        return all(b >= a for a, b in pairs)
    raise ConfigurationError(f"unknown trend direction {direction!r}")


def trend_report(points: Sequence[TrendPoint], axis: str, direction: str | None = None) -> TrendReport:
    """Check each pump's selectivity sequence against the axis' expected direction.

    Points are taken in the given order (ascending axis value, or
    unoptimized-then-optimized for the optimization axis).
    """
    if axis not in TREND_DIRECTIONS and direction is None:
        raise ConfigurationError(f"unknown trend axis {axis!r}")
    direction = direction or TREND_DIRECTIONS[axis]
    pumps = list(points[0].selectivity) if points else []
    passed = {p: _monotone([pt.selectivity[p] for pt in points], direction) for p in pumps}
    return TrendReport(axis, direction, list(points), passed)


def sweep_selectivity(config: SorterConfig, axis: str, values: Sequence[float], pump_set: Sequence[ModeLabel],
                      signal_set: Sequence[ModeLabel], jobs: int = 1) -> list[TrendPoint]:
    """Tomography-derived selectivities while varying crystal length or pulse width."""
    points = []
    for v in values:
        if axis == "length":
            cfg = config.replace(crystal=config.crystal.replace(length=float(v)))
        elif axis == "pulse_width":
            cfg = config.replace(pump=_with_width(config.pump, v), signal=_with_width(config.signal, v))
        elif axis == "delta_k":
            cfg = config.replace(crystal=config.crystal.replace(delta_k=float(v)))
        else:
            raise ConfigurationError(f"cannot sweep axis {axis!r}")
        report = tomography(pump_set, signal_set, cfg, jobs=jobs).selectivity_report()
        points.append(TrendPoint(float(v), report.by_pump()))
    return points


def _with_width(beam, width):
    return replace(beam, width=float(width))

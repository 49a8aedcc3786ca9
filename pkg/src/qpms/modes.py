"""Spatial (LG), temporal (HG) and comb-synthesized fields on discrete grids.

Units: transverse coordinates in micrometres, time in picoseconds, frequency
in THz, wavelengths in nanometres. All mode functions are normalized with the
grid measure, i.e. ``sum(|u|**2) * dx * dy == 1`` and ``sum(|u|**2) * dt == 1``.

Spatial grids contain the origin at index ``n // 2``. The leading row and
column (the FFT Nyquist sample at ``-extent``) have no mirror partner, so every
mode is held at zero there; this keeps reflection and rotation symmetry exact
and with it the azimuthal orthogonality of LG modes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from qpms.errors import ConfigurationError, ContractError

log = logging.getLogger(__name__)

C_NM_THZ = 299792.458  # speed of light in nm * THz
_REL = 1e-12

CATALOG_L = (-2, -1, 0, 1, 2)
CATALOG_M = (0, 1, 2)


def fwhm_to_tau(width: float) -> float:
    """Hermite-Gaussian scale for a fundamental-mode intensity FWHM of ``width``."""
    return width / (2.0 * math.sqrt(math.log(2.0)))


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class SpatialGrid:
    nx: int = 128
    ny: int = 128
    extent_x: float = 900.0
    extent_y: float = 900.0

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 8 or n % 2:
                raise ConfigurationError(f"spatial sample counts must be even and >= 8, got {self.nx}x{self.ny}")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ConfigurationError("spatial extents must be positive")

    @classmethod
    def for_waist(cls, waist: float, n: int = 128, factor: float = 3.0) -> "SpatialGrid":
        return cls(n, n, factor * waist, factor * waist)

    @property
    def dx(self) -> float:
        return 2.0 * self.extent_x / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.extent_y / self.ny

    @property
    def area_element(self) -> float:
        return self.dx * self.dy

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.dx

    @cached_property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.dy

    @cached_property
    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.hypot(X, Y), np.arctan2(Y, X)

    @cached_property
    def support(self) -> np.ndarray:
        """Boolean mask of the mirror-symmetric sub-grid."""
        mask = np.ones((self.nx, self.ny), dtype=bool)
        mask[0, :] = False
        mask[:, 0] = False
        return mask

    def check_waist(self, waist: float) -> None:
        if waist <= 0:
            raise ConfigurationError(f"waist must be positive, got {waist} um")
        limit = min(self.extent_x, self.extent_y) / 3.0
        if waist > limit * (1 + _REL):
            raise ConfigurationError(
                f"waist {waist} um exceeds extent/3 = {limit} um "
                f"(extent_x={self.extent_x}, extent_y={self.extent_y})"
            )

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        """Overlap <a|b> over the transverse plane."""
        return complex(np.vdot(a, b) * self.area_element)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "extent_x_um": self.extent_x, "extent_y_um": self.extent_y}


@dataclass(frozen=True)
class TemporalGrid:
    nt: int = 512
    window: float = 40.0

    def __post_init__(self):
        if self.nt < 64 or self.nt & (self.nt - 1):
            raise ConfigurationError(f"nt must be a power of two >= 64, got {self.nt}")
        if self.window <= 0:
            raise ConfigurationError("temporal window must be positive")

    @property
    def dt(self) -> float:
        return self.window / self.nt

    @cached_property
    def t(self) -> np.ndarray:
        return (np.arange(self.nt) - self.nt // 2) * self.dt

    @cached_property
    def freq(self) -> np.ndarray:
        """Conjugate frequency axis in THz, numpy FFT ordering."""
        return np.fft.fftfreq(self.nt, self.dt)

    def check_width(self, width: float) -> None:
        if width <= 0:
            raise ConfigurationError(f"pulse width must be positive, got {width} ps")
        if self.window < 8.0 * width * (1 - _REL):
            raise ConfigurationError(
                f"temporal window {self.window} ps is shorter than 8 x pulse width {width} ps"
            )

    def check_comb(self, spacing_ghz: float) -> None:
        period = 1e3 / spacing_ghz
        if self.window > period * (1 + _REL):
            raise ConfigurationError(
                f"temporal window {self.window} ps exceeds the comb period {period} ps; pulse train would alias"
            )

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(np.vdot(a, b) * self.dt)

    def to_dict(self) -> dict:
        return {"nt": self.nt, "window_ps": self.window}


def _normalize(u: np.ndarray, measure: float) -> np.ndarray:
    norm = math.sqrt(float(np.sum(np.abs(u) ** 2)) * measure)
    if norm == 0.0:
        raise ConfigurationError("mode vanishes on the grid")
    return u / norm


# ---------------------------------------------------------------------------
# mode labels


@dataclass(frozen=True)
class ModeTerm:
    l: int
    m: int
    coeff: complex = 1.0 + 0j


@dataclass(frozen=True)
class ModeLabel:
    """Symbolic |X_l> (x) |T_m> state, possibly a superposition of terms."""

    terms: tuple[ModeTerm, ...]
    role: str = "signal"
    name: str | None = None

    def __post_init__(self):
        if not self.terms:
            raise ConfigurationError("a mode label needs at least one term")
        if self.role not in ("pump", "signal"):
            raise ConfigurationError(f"role must be 'pump' or 'signal', got {self.role!r}")
        for term in self.terms:
            if term.m < 0:
                raise ConfigurationError(f"HG order must be non-negative, got {term.m}")
        total = sum(abs(t.coeff) ** 2 for t in self.terms)
        if abs(total - 1.0) > 1e-12:
            raise ConfigurationError(f"label coefficients must have unit norm, got {total}")
        if self.flagged:
            log.warning("mode label %s lies outside the l in [-2, 2], m in [0, 2] catalog", self.display_name)

    @classmethod
    def of(cls, terms: Iterable[tuple], role: str = "signal", name: str | None = None) -> "ModeLabel":
        """Build a label from ``(l, m[, coeff])`` tuples, normalizing and fixing the global phase."""
        parsed = [ModeTerm(int(t[0]), int(t[1]), complex(t[2]) if len(t) > 2 else 1.0 + 0j) for t in terms]
        norm = math.sqrt(sum(abs(t.coeff) ** 2 for t in parsed))
        if norm == 0:
            raise ConfigurationError("all label coefficients are zero")
        phase = 1.0
        for t in parsed:
            if t.coeff != 0:
                phase = abs(t.coeff) / t.coeff
                break
        return cls(tuple(ModeTerm(t.l, t.m, t.coeff * phase / norm) for t in parsed), role, name)

    @classmethod
    def single(cls, l: int, m: int, role: str = "signal") -> "ModeLabel":
        return cls((ModeTerm(l, m, 1.0 + 0j),), role)

    @property
    def flagged(self) -> bool:
        return any(t.l not in CATALOG_L or t.m not in CATALOG_M for t in self.terms)

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        parts = []
        for t in self.terms:
            base = f"X{t.l}T{t.m}"
            if len(self.terms) == 1:
                return base
            c = t.coeff
            parts.append(f"({c.real:+.3g}{c.imag:+.3g}j){base}")
        return "".join(parts)

    def with_role(self, role: str) -> "ModeLabel":
        return ModeLabel(self.terms, role, self.name)

    def matched_signal(self) -> "ModeLabel":
        """Signal label whose product with this pump label couples best to the l=0 fiber mode."""
        return ModeLabel.of([(-t.l, t.m, t.coeff.conjugate()) for t in self.terms], "signal")

    def same_state(self, other: "ModeLabel", tol: float = 1e-9) -> bool:
        mine = {(t.l, t.m): t.coeff for t in self.terms}
        theirs = {(t.l, t.m): t.coeff for t in other.terms}
        keys = set(mine) | set(theirs)
        return all(abs(mine.get(k, 0) - theirs.get(k, 0)) <= tol for k in keys)

    def to_dict(self) -> dict:
        out = {
            "terms": [
                {"l": t.l, "m": t.m, "coeff_re": float(t.coeff.real), "coeff_im": float(t.coeff.imag)}
                for t in self.terms
            ]
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, data: dict, role: str = "signal") -> "ModeLabel":
        terms = [(t["l"], t["m"], complex(t.get("coeff_re", 1.0), t.get("coeff_im", 0.0))) for t in data["terms"]]
        return cls.of(terms, role, data.get("name"))


def product_catalog(ls: Sequence[int] = CATALOG_L, ms: Sequence[int] = CATALOG_M, role: str = "signal") -> list[ModeLabel]:
    """Single-term labels ordered temporal-major: for each m, every l."""
    return [ModeLabel.single(l, m, role) for m in ms for l in ls]


def superposed_temporal(sign: int, l: int = 0, role: str = "signal") -> ModeLabel:
    """T_+ (sign=+1) or T_- (sign=-1): equal-weight superposition of T_0 and T_1."""
    s = 1.0 / math.sqrt(2.0)
    name = "T+" if sign > 0 else "T-"
    return ModeLabel((ModeTerm(l, 0, s + 0j), ModeTerm(l, 1, sign * s + 0j)), role, name)


# ---------------------------------------------------------------------------
# comb


@dataclass(frozen=True)
class CombSpec:
    n_lines: int = 37
    spacing_ghz: float = 25.0
    center_wavelength: float = 1551.0
    line_weights: tuple[complex, ...] | None = None

    def __post_init__(self):
        if self.n_lines < 1:
            raise ConfigurationError("a comb needs at least one line")
        if self.n_lines % 2 == 0:
            log.warning("comb with an even number of lines (%d) is not centered on a line", self.n_lines)
        if self.spacing_ghz <= 0 or self.center_wavelength <= 0:
            raise ConfigurationError("comb spacing and center wavelength must be positive")
        if self.line_weights is not None:
            if len(self.line_weights) != self.n_lines:
                raise ConfigurationError(f"expected {self.n_lines} line weights, got {len(self.line_weights)}")
            total = sum(abs(w) ** 2 for w in self.line_weights)
            if abs(total - 1.0) > 1e-12:
                raise ConfigurationError(f"line weights must have unit power, got {total}")

    @property
    def spacing_thz(self) -> float:
        return self.spacing_ghz * 1e-3

    @property
    def period(self) -> float:
        """Pulse-train period in ps."""
        return 1.0 / self.spacing_thz

    @property
    def line_index(self) -> np.ndarray:
        return np.arange(self.n_lines) - self.n_lines // 2

    @property
    def weights(self) -> np.ndarray:
        if self.line_weights is None:
            raise ContractError("comb spec carries no line weights")
        return np.asarray(self.line_weights, dtype=complex)

    def with_weights(self, weights: Sequence[complex]) -> "CombSpec":
        w = np.asarray(weights, dtype=complex)
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ConfigurationError("all comb line weights are zero")
        return CombSpec(self.n_lines, self.spacing_ghz, self.center_wavelength, tuple(complex(v) for v in w / norm))

    def with_phases(self, phases: Sequence[float]) -> "CombSpec":
        """Keep the line amplitudes, replace the phases."""
        amp = np.abs(self.weights)
        return self.with_weights(amp * np.exp(1j * np.asarray(phases, dtype=float)))

    def delayed(self, delay: float) -> "CombSpec":
        ramp = np.exp(2j * np.pi * self.line_index * self.spacing_thz * delay)
        return self.with_weights(self.weights * ramp)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.weights)

    @property
    def phases(self) -> np.ndarray:
        return np.mod(np.angle(self.weights), 2 * np.pi)

    def line_wavelengths(self) -> np.ndarray:
        nu0 = C_NM_THZ / self.center_wavelength
        return C_NM_THZ / (nu0 + self.line_index * self.spacing_thz)

    def to_dict(self) -> dict:
        out = {"n_lines": self.n_lines, "spacing_ghz": self.spacing_ghz, "center_wavelength_nm": self.center_wavelength}
        if self.line_weights is not None:
            out["line_amp"] = [float(a) for a in self.amplitudes]
            out["line_phase"] = [float(p) for p in self.phases]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CombSpec":
        spec = cls(int(data.get("n_lines", 37)), float(data.get("spacing_ghz", 25.0)),
                   float(data.get("center_wavelength_nm", 1551.0)))
        if "line_amp" in data:
            amp = np.asarray(data["line_amp"], dtype=float)
            phase = np.asarray(data.get("line_phase", np.zeros_like(amp)), dtype=float)
            spec = spec.with_weights(amp * np.exp(1j * phase))
        return spec


def _comb_basis(spec: CombSpec, grid: TemporalGrid) -> np.ndarray:
    return np.exp(-2j * np.pi * np.outer(grid.t, spec.line_index * spec.spacing_thz))


def comb_synthesize(spec: CombSpec, grid: TemporalGrid) -> np.ndarray:
    """Temporal envelope ``sum_k w_k exp(-2i pi k dnu t)``, normalized on the grid."""
    grid.check_comb(spec.spacing_ghz)
    return _normalize(_comb_basis(spec, grid) @ spec.weights, grid.dt)


def comb_analyze(envelope: np.ndarray, spec: CombSpec, grid: TemporalGrid) -> np.ndarray:
    """Least-squares projection of an envelope onto the comb lines (unit-power weights)."""
    grid.check_comb(spec.spacing_ghz)
    coeffs, *_ = np.linalg.lstsq(_comb_basis(spec, grid), np.asarray(envelope, dtype=complex), rcond=None)
    return coeffs / np.linalg.norm(coeffs)


@dataclass(frozen=True)
class CombFit:
    spec: CombSpec
    fidelity: float


def fit_comb_to_mode(target: np.ndarray, template: CombSpec, grid: TemporalGrid, phase_only: bool = False) -> CombFit:
    """Line weights whose synthesized envelope best matches ``target`` in L2.

    With ``phase_only`` the amplitudes are held uniform and only the fitted
    line phases are kept. Poor fits are reported through ``fidelity``.
    """
    weights = comb_analyze(target, template, grid)
    if phase_only:
        weights = np.exp(1j * np.angle(weights)) / math.sqrt(template.n_lines)
    nz = np.flatnonzero(np.abs(weights) > 0)
    if nz.size:
        weights = weights * np.exp(-1j * np.angle(weights[nz[0]]))
    spec = template.with_weights(weights)
    synth = comb_synthesize(spec, grid)
    tgt = _normalize(np.asarray(target, dtype=complex), grid.dt)
    return CombFit(spec, abs(grid.inner(tgt, synth)) ** 2)


# ---------------------------------------------------------------------------
# mode functions


def lg_mode(l: int, waist: float, grid: SpatialGrid, p: int = 0) -> np.ndarray:
    """Laguerre-Gaussian LG_l^0 mode: (r sqrt2 / w)^|l| exp(-r^2/w^2) exp(i l phi)."""
    if p != 0:
        raise ConfigurationError(f"only radial index p=0 is supported, got p={p}")
    grid.check_waist(waist)
    r, phi = grid.polar
    u = (r * math.sqrt(2.0) / waist) ** abs(l) * np.exp(-(r ** 2) / waist ** 2)
    u = u * np.exp(1j * l * phi) if l else u.astype(complex)
    u = np.where(grid.support, u, 0.0)
    return _normalize(u, grid.area_element)


def gaussian_mode(waist: float, grid: SpatialGrid) -> np.ndarray:
    """Fundamental Gaussian exp(-r^2/w^2) without the extent guard (fiber modes may be wide)."""
    r, _ = grid.polar
    u = np.where(grid.support, np.exp(-(r ** 2) / waist ** 2), 0.0).astype(complex)
    return _normalize(u, grid.area_element)


def _hermite(m: int, x: np.ndarray) -> np.ndarray:
    h_prev, h = np.ones_like(x), 2.0 * x
    if m == 0:
        return h_prev
    for n in range(1, m):
        h_prev, h = h, 2.0 * x * h - 2.0 * n * h_prev
    return h


def hg_temporal_mode(m: int, width: float, grid: TemporalGrid, delay: float = 0.0) -> np.ndarray:
    """Hermite-Gaussian envelope H_m(x) exp(-x^2/2), x = (t - delay)/tau.

    ``tau`` is shared across orders and chosen so the m=0 intensity FWHM is ``width``.
    """
    if m < 0:
        raise ConfigurationError(f"HG order must be non-negative, got {m}")
    grid.check_width(width)
    x = (grid.t - delay) / fwhm_to_tau(width)
    u = _hermite(m, x) * np.exp(-0.5 * x * x)
    return _normalize(u.astype(complex), grid.dt)


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class SpatioTemporalField:
    """Complex amplitude over (x, y, t), optionally held as a separable product."""

    spatial_grid: SpatialGrid
    temporal_grid: TemporalGrid
    carrier_wavelength: float
    dense: np.ndarray | None = None
    separable_cache: tuple[np.ndarray, np.ndarray] | None = None
    comb: CombSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.carrier_wavelength <= 0:
            raise ConfigurationError("carrier wavelength must be positive")
        if self.dense is None and self.separable_cache is None:
            raise ContractError("a field needs a dense amplitude or a separable factor pair")
        shape = (self.spatial_grid.nx, self.spatial_grid.ny, self.temporal_grid.nt)
        if self.dense is not None and self.dense.shape != shape:
            raise ContractError(f"amplitude shape {self.dense.shape} does not match grids {shape}")

    @property
    def separable(self) -> bool:
        return self.separable_cache is not None

    @property
    def amplitude(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        spatial, temporal = self.separable_cache
        return spatial[:, :, None] * temporal[None, None, :]

    @property
    def measure(self) -> float:
        return self.spatial_grid.area_element * self.temporal_grid.dt

    def energy(self) -> float:
        if self.separable:
            spatial, temporal = self.separable_cache
            return float(np.sum(np.abs(spatial) ** 2) * self.spatial_grid.area_element
                         * np.sum(np.abs(temporal) ** 2) * self.temporal_grid.dt)
        return float(np.sum(np.abs(self.dense) ** 2) * self.measure)

    def spatial_intensity(self) -> np.ndarray:
        """Time-integrated intensity per transverse pixel."""
        if self.separable:
            spatial, temporal = self.separable_cache
            return np.abs(spatial) ** 2 * float(np.sum(np.abs(temporal) ** 2) * self.temporal_grid.dt)
        return np.sum(np.abs(self.dense) ** 2, axis=2) * self.temporal_grid.dt

    def same_grids(self, other: "SpatioTemporalField") -> bool:
        return self.spatial_grid == other.spatial_grid and self.temporal_grid == other.temporal_grid

    def scaled(self, factor: complex) -> "SpatioTemporalField":
        if self.separable:
            s, t = self.separable_cache
            return SpatioTemporalField(self.spatial_grid, self.temporal_grid, self.carrier_wavelength,
                                       separable_cache=(s * factor, t), comb=self.comb)
        return SpatioTemporalField(self.spatial_grid, self.temporal_grid, self.carrier_wavelength,
                                   dense=self.dense * factor)

    def inner(self, other: "SpatioTemporalField") -> complex:
        if not self.same_grids(other):
            raise ContractError("fields live on different grids")
        if self.separable and other.separable:
            return (self.spatial_grid.inner(self.separable_cache[0], other.separable_cache[0])
                    * self.temporal_grid.inner(self.separable_cache[1], other.separable_cache[1]))
        return complex(np.vdot(self.amplitude, other.amplitude) * self.measure)


def temporal_factor(m_coeffs: Sequence[tuple[int, complex]], width: float, grid: TemporalGrid, delay: float,
                    comb: CombSpec | None = None, phase_only: bool = False) -> tuple[np.ndarray, CombSpec | None]:
    """Sum of HG modes (or their comb fits) with the given coefficients, unnormalized."""
    grid.check_width(width)
    total = np.zeros(grid.nt, dtype=complex)
    weights = None
    for m, c in m_coeffs:
        if comb is None:
            total += c * hg_temporal_mode(m, width, grid, delay)
            continue
        fit = fit_comb_to_mode(hg_temporal_mode(m, width, grid), comb, grid, phase_only)
        spec = fit.spec.delayed(delay) if delay else fit.spec
        # comb_synthesize is normalized, so weights combine with the same scale
        scale = np.linalg.norm(_comb_basis(spec, grid) @ spec.weights) * math.sqrt(grid.dt)
        w = c * spec.weights / scale
        weights = w if weights is None else weights + w
        total += c * comb_synthesize(spec, grid)
    combined = comb.with_weights(weights) if comb is not None else None
    return total, combined


def assemble_field(label: ModeLabel, waist: float, width: float, spatial_grid: SpatialGrid,
                   temporal_grid: TemporalGrid, carrier: float, delay: float = 0.0, use_comb: bool = False,
                   comb_template: CombSpec | None = None, phase_only: bool = False) -> SpatioTemporalField:
    """Normalized field sum_terms coeff * LG_l(x, y) * T_m(t - delay).

    Labels whose terms share one spatial index (or one temporal order) are
    kept in separable form.
    """
    spatial_grid.check_waist(waist)
    temporal_grid.check_width(width)
    comb = None
    if use_comb:
        comb = comb_template or CombSpec(center_wavelength=carrier)
        temporal_grid.check_comb(comb.spacing_ghz)
    ls = {t.l for t in label.terms}
    ms = {t.m for t in label.terms}

    if len(ls) == 1:
        spatial = lg_mode(next(iter(ls)), waist, spatial_grid)
        temporal, weights = temporal_factor([(t.m, t.coeff) for t in label.terms], width, temporal_grid,
                                            delay, comb, phase_only)
        temporal = _normalize(temporal, temporal_grid.dt)
        return SpatioTemporalField(spatial_grid, temporal_grid, carrier, separable_cache=(spatial, temporal),
                                   comb=weights)
    if len(ms) == 1:
        spatial = sum(t.coeff * lg_mode(t.l, waist, spatial_grid) for t in label.terms)
        spatial = _normalize(spatial, spatial_grid.area_element)
        temporal, weights = temporal_factor([(next(iter(ms)), 1.0)], width, temporal_grid, delay, comb, phase_only)
        temporal = _normalize(temporal, temporal_grid.dt)
        return SpatioTemporalField(spatial_grid, temporal_grid, carrier, separable_cache=(spatial, temporal),
                                   comb=weights)

    dense = np.zeros((spatial_grid.nx, spatial_grid.ny, temporal_grid.nt), dtype=complex)
    for t in label.terms:
        temporal, _ = temporal_factor([(t.m, 1.0)], width, temporal_grid, delay, comb, phase_only)
        dense += t.coeff * lg_mode(t.l, waist, spatial_grid)[:, :, None] * temporal[None, None, :]
    dense = _normalize(dense, spatial_grid.area_element * temporal_grid.dt)
    return SpatioTemporalField(spatial_grid, temporal_grid, carrier, dense=dense)


# ---------------------------------------------------------------------------
# serialization


def save_catalog(labels: Sequence[ModeLabel], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"modes": [lab.to_dict() for lab in labels]}, indent=2) + "\n")


def load_catalog(path: str | Path, role: str = "signal") -> list[ModeLabel]:
    data = json.loads(Path(path).read_text())
    return [ModeLabel.from_dict(d, role) for d in data["modes"]]


def export_spectrum_csv(spec: CombSpec, path: str | Path, floor_db: float = -100.0) -> None:
    """Write per-line relative power as ``wavelength_nm, power_db`` rows (ascending wavelength)."""
    wl = spec.line_wavelengths()
    power = np.abs(spec.weights) ** 2
    peak = power.max()
    order = np.argsort(wl)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["wavelength_nm", "power_db"])
        for i in order:
            db = 10 * math.log10(power[i] / peak) if power[i] > 0 else floor_db
            writer.writerow([repr(float(wl[i])), repr(max(db, floor_db))])

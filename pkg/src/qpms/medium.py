"""chi(2) crystal model: phase matching, pump/SF walk-off and linear step operators.

Coupled equations in the frame co-moving with pump and signal (undepleted pump)::

    dA_sf/dz = i kappa A_p A_s exp(i dk z) - rho dA_sf/dt   (+ diffraction)
    dA_s/dz  = i kappa* A_p* A_sf exp(-i dk z)               (depleted variant only)

with ``rho`` the pump-SF walk-off rate in ps/cm. Group-velocity dispersion
inside each pulse is not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, curve_fit

from qpms.errors import ConfigurationError
from qpms.modes import C_NM_THZ, SpatialGrid, TemporalGrid

ROLES = ("pump", "signal", "sf")

# sinc^2(x) = 1/2
_SINC2_HALF = brentq(lambda x: (math.sin(x) / x) ** 2 - 0.5, 1.0, 2.0)


def calibrate_kappa(efficiency_per_w_cm2: float = 0.01) -> float:
    """Coupling giving ``efficiency`` conversion for a 1 W CW pump over 1 cm.

    For an undepleted CW pump, P_sf / P_s = kappa^2 P_p L^2.
    """
    if efficiency_per_w_cm2 <= 0:
        raise ConfigurationError("normalized efficiency must be positive")
    return math.sqrt(efficiency_per_w_cm2)


@dataclass(frozen=True)
class CrystalSpec:
    length: float = 2.5
    walkoff_rate: float = 1.2
    delta_k: float = 0.0
    kappa: float = field(default_factory=calibrate_kappa)
    nz_steps: int = 32
    diffraction: bool = False
    depleted: bool = False

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError(f"crystal length must be positive, got {self.length} cm")
        if self.nz_steps < 16:
            raise ConfigurationError(f"nz_steps must be >= 16, got {self.nz_steps}")
        if self.walkoff_rate < 0:
            raise ConfigurationError(f"walk-off rate must be non-negative, got {self.walkoff_rate}")

    @property
    def walkoff(self) -> float:
        """Total pump-SF walk-off in ps."""
        return self.walkoff_rate * self.length

    def replace(self, **changes) -> "CrystalSpec":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return CrystalSpec(**data)

    def to_dict(self) -> dict:
        return {
            "length_cm": self.length,
            "walkoff_ps_per_cm": self.walkoff_rate,
            "delta_k_rad_per_cm": self.delta_k,
            "kappa": self.kappa,
            "nz_steps": self.nz_steps,
            "diffraction": self.diffraction,
            "depleted": self.depleted,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrystalSpec":
        return cls(
            length=float(data.get("length_cm", 2.5)),
            walkoff_rate=float(data.get("walkoff_ps_per_cm", 1.2)),
            delta_k=float(data.get("delta_k_rad_per_cm", 0.0)),
            kappa=float(data.get("kappa", calibrate_kappa())),
            nz_steps=int(data.get("nz_steps", 32)),
            diffraction=bool(data.get("diffraction", False)),
            depleted=bool(data.get("depleted", False)),
        )


@dataclass(frozen=True)
class PhaseMatchingCurve:
    wavelengths: np.ndarray
    efficiency: np.ndarray
    center: float
    bandwidth: float  # FWHM in nm

    def fwhm_thz(self) -> float:
        return C_NM_THZ * self.bandwidth / self.center ** 2


def _sinc2(x):
    return np.sinc(x / np.pi) ** 2


def phase_mismatch(crystal: CrystalSpec, wavelengths, center: float) -> np.ndarray:
    """Delta-k (rad/cm) linearized about ``center`` with the walk-off as group-delay slope."""
    dnu = C_NM_THZ / np.asarray(wavelengths, dtype=float) - C_NM_THZ / center
    return 2 * np.pi * dnu * crystal.walkoff_rate + crystal.delta_k


def phase_matching_curve(crystal: CrystalSpec, wavelengths, center: float = 1551.0) -> PhaseMatchingCurve:
    """Sampled sinc^2(dk L / 2) curve plus a least-squares sinc^2 fit of center and FWHM."""
    wl = np.asarray(wavelengths, dtype=float)
    if wl.size == 0:
        raise ConfigurationError("wavelength list is empty")
    if np.any(np.diff(wl) < 0):
        raise ConfigurationError("wavelengths must be sorted")
    eff = _sinc2(phase_mismatch(crystal, wl, center) * crystal.length / 2)

    # dk L / 2 = pi * rho * L * dnu, so sinc^2 FWHM in frequency is 2 x_half / (pi rho L)
    if crystal.walkoff_rate == 0 or wl.size < 4:
        return PhaseMatchingCurve(wl, eff, center, math.inf)
    guess_fwhm = 2 * _SINC2_HALF / (math.pi * crystal.walkoff) * center ** 2 / C_NM_THZ

    def model(lam, lam0, fwhm):
        return _sinc2(2 * _SINC2_HALF * (lam - lam0) / fwhm)

    peak = float(wl[np.argmax(eff)])
    (lam0, fwhm), _ = curve_fit(model, wl, eff, p0=(peak, guess_fwhm))
    return PhaseMatchingCurve(wl, eff, float(lam0), abs(float(fwhm)))


def walkoff_rate_from_curve(curve: PhaseMatchingCurve, length: float) -> float:
    """Invert a fitted sinc^2 bandwidth into a walk-off rate (ps/cm)."""
    return 2 * _SINC2_HALF / (math.pi * curve.fwhm_thz() * length)


def transverse_phase(spatial_grid: SpatialGrid, carrier_nm: float, dz: float) -> np.ndarray:
    """Paraxial diffraction multiplier exp(-i (kx^2+ky^2) dz / 2k) on the FFT grid; dz in cm."""
    kx = 2 * np.pi * np.fft.fftfreq(spatial_grid.nx, spatial_grid.dx)
    ky = 2 * np.pi * np.fft.fftfreq(spatial_grid.ny, spatial_grid.dy)
    k = 2 * np.pi / (carrier_nm * 1e-3)  # rad/um
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    return np.exp(-1j * k2 * (dz * 1e4) / (2 * k))


def linear_step_operator(crystal: CrystalSpec, role: str, dz: float, temporal_grid: TemporalGrid,
                         spatial_grid: SpatialGrid | None = None, carrier_nm: float | None = None) -> np.ndarray:
    """Frequency-domain multiplier for one linear step of length ``dz`` (cm).

    Without diffraction the result is a 1-D array over the temporal FFT axis;
    with diffraction it has shape (nx, ny, nt) in FFT ordering on every axis.
    """
    if role not in ROLES:
        raise ConfigurationError(f"unknown field role {role!r}")
    if dz <= 0:
        raise ConfigurationError("step length must be positive")
    if role == "sf":
        temporal = np.exp(-2j * np.pi * temporal_grid.freq * crystal.walkoff_rate * dz)
    else:
        temporal = np.ones(temporal_grid.nt, dtype=complex)
    if not crystal.diffraction:
        return temporal
    if spatial_grid is None or carrier_nm is None:
        raise ConfigurationError("diffraction needs a spatial grid and a carrier wavelength")
    return transverse_phase(spatial_grid, carrier_nm, dz)[:, :, None] * temporal[None, None, :]


def sf_wavelength(pump_nm: float, signal_nm: float) -> float:
    return 1.0 / (1.0 / pump_nm + 1.0 / signal_nm)

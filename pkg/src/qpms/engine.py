"""Split-step propagation of pump and signal through the crystal, and detection.

The SF field is stepped with symmetric (Strang) splitting: half a linear step
(walk-off, optional diffraction), the nonlinear source evaluated at the step
midpoint, and another half linear step. Each step is checked against two half
steps (step doubling) and refined until the relative difference is below the
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from qpms.errors import ConfigurationError, ContractError
from qpms.medium import CrystalSpec, linear_step_operator, sf_wavelength
from qpms.modes import (
    CombSpec,
    ModeLabel,
    SpatialGrid,
    SpatioTemporalField,
    TemporalGrid,
    assemble_field,
    gaussian_mode,
)

DEFAULT_TOL = 1e-4
MAX_HALVINGS = 10


class StepRecord(NamedTuple):
    z: float
    dz: float
    error: float
    sf_energy: float


@dataclass(frozen=True, eq=False)
class PropagationResult:
    sf_field: SpatioTemporalField
    sf_energy: float
    step_diagnostics: list[StepRecord]
    converged: bool
    signal_out: SpatioTemporalField | None = None


@dataclass(frozen=True)
class DetectorModel:
    fiber_waist: float = 300.0 / math.sqrt(2.0)
    scale: float = 1.0
    poisson_seed: int | None = None

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigurationError(f"detector scale must be positive, got {self.scale}")
        if self.fiber_waist <= 0:
            raise ConfigurationError("fiber mode waist must be positive")

    def fiber_mode(self, grid: SpatialGrid) -> np.ndarray:
        return gaussian_mode(self.fiber_waist, grid)

    def to_dict(self) -> dict:
        return {"fiber_waist_um": self.fiber_waist, "scale": self.scale, "poisson_seed": self.poisson_seed}


# ---------------------------------------------------------------------------
# propagation core


def _integrate(step, state, length, nz_steps, adaptive, tol, energy):
    dz0 = length / nz_steps
    dz_min = dz0 / 2 ** MAX_HALVINGS
    z, dz = 0.0, dz0
    records: list[StepRecord] = []
    converged = True
    while length - z > 1e-12 * length:
        dz = min(dz, length - z)
        if not adaptive:
            state = step(state, z, dz)
            z += dz
            records.append(StepRecord(z, dz, 0.0, energy(state)))
            continue
        full = step(state, z, dz)
        half = step(step(state, z, dz / 2), z + dz / 2, dz / 2)
        num = math.sqrt(sum(float(np.sum(np.abs(h - f) ** 2)) for h, f in zip(half, full)))
        den = math.sqrt(sum(float(np.sum(np.abs(h) ** 2)) for h in half))
        err = num / den if den > 0 else 0.0
        if err > tol and dz > dz_min * (1 + 1e-9):
            dz /= 2
            continue
        if err > tol:
            converged = False
        state = half
        z += dz
        records.append(StepRecord(z, dz, err, energy(state)))
        if err < tol / 16:
            dz = min(2 * dz, dz0)
    return state, records, converged


def _propagate_arrays(pump: np.ndarray, signal: np.ndarray, crystal: CrystalSpec, temporal_grid: TemporalGrid,
                      spatial_grid: SpatialGrid | None, carriers: tuple[float, float, float], measure: float,
                      adaptive: bool, tol: float):
    """Run the splitting on raw arrays (time on the last axis). Returns (sf, signal_out, records, converged)."""
    diffraction = crystal.diffraction
    axes = (0, 1, 2) if diffraction else (-1,)
    n_points = int(np.prod([pump.shape[a] for a in axes]))
    fwd = lambda a: np.fft.fftn(a, axes=axes)
    inv = lambda a: np.fft.ifftn(a, axes=axes)
    pump_c, signal_c, sf_c = carriers

    def lin(role, dz):
        carrier = {"pump": pump_c, "signal": signal_c, "sf": sf_c}[role]
        return linear_step_operator(crystal, role, dz, temporal_grid, spatial_grid, carrier)

    if diffraction:
        pump_hat, signal_hat = fwd(pump), fwd(signal)

        def evolved(hat, role, z):
            return inv(hat * lin(role, z)) if z > 0 else inv(hat)

        def source_hat(z):
            return fwd(evolved(pump_hat, "pump", z) * evolved(signal_hat, "signal", z))

        def pump_at(z):
            return evolved(pump_hat, "pump", z)
    else:
        fixed = fwd(pump * signal)

        def source_hat(z):
            return fixed

        def pump_at(z):
            return pump

    kappa, dk = crystal.kappa, crystal.delta_k

    def energy(state):
        return float(np.sum(np.abs(state[-1]) ** 2)) / n_points * measure

    if not crystal.depleted:
        def step(state, z, dz):
            (b,) = state
            h = dz / 2
            m = lin("sf", h)
            return (m * (m * b + 1j * kappa * dz * np.exp(1j * dk * (z + h)) * source_hat(z + h)),)

        state0 = (np.zeros(pump.shape, dtype=complex),)
    else:
        def step(state, z, dz):
            s_hat, b = state
            h = dz / 2
            ms, mf = lin("signal", h), lin("sf", h)
            a_s, a_f = inv(ms * s_hat), inv(mf * b)
            c = kappa * pump_at(z + h) * np.exp(1j * dk * (z + h))
            g = np.abs(c) * dz
            cos_g = np.cos(g)
            sin_over = dz * np.sinc(g / np.pi)
            a_s, a_f = cos_g * a_s + 1j * np.conj(c) * sin_over * a_f, 1j * c * sin_over * a_s + cos_g * a_f
            return ms * fwd(a_s), mf * fwd(a_f)

        state0 = (fwd(signal.astype(complex)), np.zeros(pump.shape, dtype=complex))

    state, records, converged = _integrate(step, state0, crystal.length, crystal.nz_steps, adaptive, tol, energy)
    sf = inv(state[-1])
    signal_out = inv(state[0]) if crystal.depleted else None
    return sf, signal_out, records, converged


def propagate_sfg(pump: SpatioTemporalField, signal: SpatioTemporalField, crystal: CrystalSpec, *,
                  adaptive: bool = True, tol: float = DEFAULT_TOL, fast_path: bool | None = None) -> PropagationResult:
    """Generate the SF field at the crystal exit.

    The separable fast path runs only the 1-D temporal problem and carries the
    spatial product along; it is used automatically when both inputs are
    separable and neither diffraction nor depletion is enabled.
    """
    if not pump.same_grids(signal):
        raise ContractError("pump and signal must share spatial and temporal grids")
    sgrid, tgrid = pump.spatial_grid, pump.temporal_grid
    sf_carrier = sf_wavelength(pump.carrier_wavelength, signal.carrier_wavelength)
    carriers = (pump.carrier_wavelength, signal.carrier_wavelength, sf_carrier)
    can_fast = pump.separable and signal.separable and not crystal.diffraction and not crystal.depleted
    if fast_path is None:
        fast_path = can_fast
    elif fast_path and not can_fast:
        raise ContractError("fast path needs separable inputs without diffraction or depletion")

    if fast_path:
        (xp, tp), (xs, ts) = pump.separable_cache, signal.separable_cache
        spatial = xp * xs
        spatial_norm2 = float(np.sum(np.abs(spatial) ** 2)) * sgrid.area_element
        a, _, records, converged = _propagate_arrays(tp, ts, crystal, tgrid, None, carriers,
                                                     tgrid.dt * spatial_norm2, adaptive, tol)
        sf = SpatioTemporalField(sgrid, tgrid, sf_carrier, separable_cache=(spatial, a))
        return PropagationResult(sf, sf.energy(), records, converged)

    a, s_out, records, converged = _propagate_arrays(
        pump.amplitude, signal.amplitude, crystal, tgrid, sgrid if crystal.diffraction else None,
        carriers, sgrid.area_element * tgrid.dt, adaptive, tol)
    sf = SpatioTemporalField(sgrid, tgrid, sf_carrier, dense=a)
    sig = SpatioTemporalField(sgrid, tgrid, signal.carrier_wavelength, dense=s_out) if s_out is not None else None
    return PropagationResult(sf, sf.energy(), records, converged, sig)


# ---------------------------------------------------------------------------
# detection


def smf_couple(field: SpatioTemporalField, detector: DetectorModel) -> tuple[np.ndarray, float]:
    """Project each time slice onto the fiber mode; returns (envelope(t), coupled energy)."""
    grid = field.spatial_grid
    mode = detector.fiber_mode(grid)
    if field.separable:
        spatial, temporal = field.separable_cache
        envelope = grid.inner(mode, spatial) * temporal
    else:
        envelope = np.tensordot(mode.conj(), field.dense, axes=([0, 1], [0, 1])) * grid.area_element
    energy = float(np.sum(np.abs(envelope) ** 2) * field.temporal_grid.dt)
    return envelope, energy


def _task_rng(seed: int, task_key: Sequence[int], stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, *[int(k) for k in task_key]]))


def detect_counts(coupled_energy: float, detector: DetectorModel, task_key: Sequence[int] = ()) -> float:
    """Mean counts ``scale * energy``, or a Poisson draw keyed by (seed, task_key)."""
    if coupled_energy < 0:
        raise ContractError("coupled energy must be non-negative")
    mean = detector.scale * coupled_energy
    if detector.poisson_seed is None:
        return float(mean)
    return float(_task_rng(detector.poisson_seed, task_key, 0).poisson(mean))


# ---------------------------------------------------------------------------
# experiment configuration and delay scans


@dataclass(frozen=True)
class BeamConfig:
    waist: float = 300.0
    width: float = 2.0
    carrier: float = 1559.0
    use_comb: bool = False
    phase_only: bool = False


@dataclass(frozen=True)
class SorterConfig:
    """Everything a single pump/signal measurement needs."""

    spatial_grid: SpatialGrid = field(default_factory=SpatialGrid)
    temporal_grid: TemporalGrid = field(default_factory=TemporalGrid)
    crystal: CrystalSpec = field(default_factory=CrystalSpec)
    detector: DetectorModel = field(default_factory=DetectorModel)
    pump: BeamConfig = field(default_factory=lambda: BeamConfig(carrier=1551.0))
    signal: BeamConfig = field(default_factory=BeamConfig)
    comb_lines: int = 37
    comb_spacing_ghz: float = 25.0
    jitter_ps: float = 0.0
    seed: int = 0
    tol: float = DEFAULT_TOL

    def replace(self, **changes) -> "SorterConfig":
        return replace(self, **changes)

    def comb_template(self, beam: BeamConfig) -> CombSpec:
        return CombSpec(self.comb_lines, self.comb_spacing_ghz, beam.carrier)

    def field_for(self, label: ModeLabel, beam: BeamConfig, delay: float = 0.0) -> SpatioTemporalField:
        return assemble_field(label, beam.waist, beam.width, self.spatial_grid, self.temporal_grid, beam.carrier,
                              delay, beam.use_comb, self.comb_template(beam) if beam.use_comb else None,
                              beam.phase_only)

    def pump_field(self, label: ModeLabel, delay: float = 0.0) -> SpatioTemporalField:
        return self.field_for(label, self.pump, delay)

    def signal_field(self, label: ModeLabel) -> SpatioTemporalField:
        return self.field_for(label, self.signal)


class Measurement(NamedTuple):
    coupled_energy: float
    counts: float
    converged: bool


def measure_pair(pump: SpatioTemporalField, signal: SpatioTemporalField, config: SorterConfig,
                 task_key: Sequence[int] = ()) -> Measurement:
    """propagate -> couple -> detect for one pump/signal pair."""
    result = propagate_sfg(pump, signal, config.crystal, tol=config.tol)
    _, energy = smf_couple(result.sf_field, config.detector)
    return Measurement(energy, detect_counts(energy, config.detector, task_key), result.converged)


@dataclass(frozen=True)
class DelayTrace:
    delays: np.ndarray
    counts: np.ndarray
    coupled_energy: np.ndarray
    zero_index: int
    offset: float = 0.0
    converged: bool = True

    @property
    def zero_delay(self) -> float:
        return float(self.counts[self.zero_index])

    @property
    def peak(self) -> float:
        return float(self.counts.max())

    @property
    def peak_delay(self) -> float:
        return float(self.delays[int(np.argmax(self.counts))])


def jitter_offset(config: SorterConfig, task_key: Sequence[int]) -> float:
    """Uniform per-trial delay offset in [-jitter/2, jitter/2] modelling waveshaper refresh jitter."""
    if config.jitter_ps <= 0:
        return 0.0
    return float(_task_rng(config.seed, task_key, 1).uniform(-config.jitter_ps / 2, config.jitter_ps / 2))


def delay_scan(pump_label: ModeLabel, signal_label: ModeLabel, delays: Sequence[float], config: SorterConfig,
               task_key: Sequence[int] = ()) -> DelayTrace:
    """SF counts against pump delay; the delay list must be sorted and contain 0.0."""
    d = np.asarray(delays, dtype=float)
    if d.size == 0 or np.any(np.diff(d) < 0):
        raise ContractError("delays must be a non-empty sorted list")
    zeros = np.flatnonzero(d == 0.0)
    if zeros.size == 0:
        raise ContractError("the delay grid must contain 0.0 ps")
    offset = jitter_offset(config, task_key)
    signal = config.signal_field(signal_label)
    counts = np.empty(d.size)
    energy = np.empty(d.size)
    converged = True
    for k, delay in enumerate(d):
        meas = measure_pair(config.pump_field(pump_label, delay + offset), signal, config, (*task_key, k))
        counts[k], energy[k] = meas.counts, meas.coupled_energy
        converged &= meas.converged
    return DelayTrace(d, counts, energy, int(zeros[0]), offset, converged)

"""Particle swarm optimization of comb-line phases.

Two update rules are available:

``standard-delta``
    velocity PSO, ``v <- w v + w_p R1 (pbest - x) + w_g R2 (gbest - x)``,
    ``x <- x + v``, with differences taken on the phase torus.
``verbatim-eq2``
    the position-only rule ``x <- w x + w_p R1 pbest + w_g R2 gbest``.

Both wrap phases into [0, 2 pi). Random draws happen in a fixed order so a
seed reproduces the full run: initial positions (N x D), then per iteration
R1 and R2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from qpms.engine import SorterConfig, measure_pair
from qpms.errors import ConfigurationError, ContractError
from qpms.metrics import selectivity
from qpms.modes import CombSpec, ModeLabel, SpatioTemporalField, comb_synthesize

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
VARIANTS = ("standard-delta", "verbatim-eq2")


def wrap_phase(x):
    """Map angles into [0, 2 pi); tiny negatives that round up to 2 pi fold back to 0."""
    r = np.mod(x, TWO_PI)
    return np.where(r >= TWO_PI, 0.0, r)


def wrap_diff(a, b):
    """Signed shortest difference a - b on the circle, in [-pi, pi)."""
    return wrap_phase(np.asarray(a) - np.asarray(b) + np.pi) - np.pi


@dataclass(frozen=True)
class WeightSchedule:
    initial: float
    final: float | None = None
    shape: str = "linear"

    def __post_init__(self):
        if self.initial < 0 or (self.final is not None and self.final < 0):
            raise ConfigurationError("PSO weights must be non-negative")
        if self.shape not in ("linear", "exponential", "constant"):
            raise ConfigurationError(f"unknown weight schedule {self.shape!r}")

    def at(self, it: int, n_iters: int) -> float:
        final = self.initial if self.final is None else self.final
        if self.shape == "constant" or n_iters <= 1:
            return self.initial
        frac = it / (n_iters - 1)
        if self.shape == "linear":
            return self.initial + (final - self.initial) * frac
        if self.initial == 0 or final == 0:
            return self.initial + (final - self.initial) * frac
        return self.initial * (final / self.initial) ** frac

    def to_dict(self) -> dict:
        return {"initial": self.initial, "final": self.final, "shape": self.shape}


@dataclass(frozen=True)
class PsoConfig:
    ensemble_size: int = 16
    dims: int = 37
    w: WeightSchedule = field(default_factory=lambda: WeightSchedule(0.9, 0.4))
    w_p: WeightSchedule = field(default_factory=lambda: WeightSchedule(1.5, 1.5))
    w_g: WeightSchedule = field(default_factory=lambda: WeightSchedule(1.5, 1.5))
    max_iters: int = 100
    seed: int = 0
    variant: str = "standard-delta"
    per_dimension_random: bool = True

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ConfigurationError("ensemble_size must be >= 2")
        if self.dims < 1:
            raise ConfigurationError("dims must be >= 1")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be non-negative")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown PSO variant {self.variant!r}")

    def to_dict(self) -> dict:
        return {"ensemble_size": self.ensemble_size, "dims": self.dims, "w": self.w.to_dict(),
                "w_p": self.w_p.to_dict(), "w_g": self.w_g.to_dict(), "max_iters": self.max_iters,
                "seed": self.seed, "variant": self.variant, "per_dimension_random": self.per_dimension_random}

    @classmethod
    def from_dict(cls, data: dict) -> "PsoConfig":
        def sched(key, default):
            d = data.get(key)
            return WeightSchedule(**d) if d is not None else default

        base = cls()
        return cls(
            ensemble_size=int(data.get("ensemble_size", base.ensemble_size)),
            dims=int(data.get("dims", base.dims)),
            w=sched("w", base.w), w_p=sched("w_p", base.w_p), w_g=sched("w_g", base.w_g),
            max_iters=int(data.get("max_iters", base.max_iters)),
            seed=int(data.get("seed", base.seed)),
            variant=data.get("variant", base.variant),
            per_dimension_random=bool(data.get("per_dimension_random", True)),
        )


@dataclass
class PsoTrace:
    best_objective: list[float] = field(default_factory=list)
    best_phases: list[np.ndarray] = field(default_factory=list)
    spread: list[float] = field(default_factory=list)
    events: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"best_objective": self.best_objective,
                "best_phases": [p.tolist() for p in self.best_phases],
                "spread": self.spread, "events": self.events}


@dataclass
class PsoResult:
    best_phases: np.ndarray
    best_objective: float
    trace: PsoTrace


def pso_optimize(objective: Callable[[np.ndarray], float], config: PsoConfig,
                 initial: Sequence[Sequence[float]] | None = None,
                 evaluate: Callable[[Callable, list], list] | None = None) -> PsoResult:
    """Maximize ``objective`` over phase vectors on the torus [0, 2 pi)^dims.

    ``initial`` optionally overrides the first candidates' starting positions.
    ``evaluate(objective, candidates)`` may fan evaluations out in parallel;
    it must return values in candidate order.
    """
    evaluate = evaluate or (lambda f, xs: [f(x) for x in xs])
    rng = np.random.default_rng(config.seed)
    n, d = config.ensemble_size, config.dims
    x = rng.uniform(0.0, TWO_PI, (n, d))
    if initial is not None:
        init = np.atleast_2d(np.asarray(initial, dtype=float))
        if init.shape[1] != d or init.shape[0] > n:
            raise ConfigurationError(f"initial candidates must have shape (<= {n}, {d})")
        x[: init.shape[0]] = wrap_phase(init)
    v = np.zeros((n, d))
    trace = PsoTrace()

    def score(positions, it):
        values = np.asarray(evaluate(objective, [p.copy() for p in positions]), dtype=float)
        bad = ~np.isfinite(values)
        for k in np.flatnonzero(bad):
            trace.events.append(f"iter {it}: candidate {k} returned {values[k]}; frozen")
            log.warning("PSO candidate %d returned non-finite objective at iteration %d", k, it)
        return values, bad

    f, frozen = score(x, 0)
    pbest, pbest_f = x.copy(), np.where(frozen, -np.inf, f)
    g = int(np.argmax(pbest_f))
    gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])

    def record(values):
        finite = values[np.isfinite(values)]
        trace.best_objective.append(gbest_f)
        trace.best_phases.append(gbest.copy())
        trace.spread.append(float(finite.max() - finite.min()) if finite.size else math.nan)

    record(f)
    rshape = (n, d) if config.per_dimension_random else (n, 1)
    for it in range(config.max_iters):
        w = config.w.at(it, config.max_iters)
        wp = config.w_p.at(it, config.max_iters)
        wg = config.w_g.at(it, config.max_iters)
        r1 = rng.random(rshape)
        r2 = rng.random(rshape)
        if config.variant == "standard-delta":
            v_new = w * v + wp * r1 * wrap_diff(pbest, x) + wg * r2 * wrap_diff(gbest, x)
            x_new = wrap_phase(x + v_new)
        else:
            v_new = v
            x_new = wrap_phase(w * x + wp * r1 * pbest + wg * r2 * gbest)
        keep = frozen[:, None]
        x = np.where(keep, x, x_new)
        v = np.where(keep, v, v_new)

        f, frozen = score(x, it + 1)
        better = ~frozen & (f > pbest_f)
        pbest[better] = x[better]
        pbest_f[better] = f[better]
        g = int(np.argmax(pbest_f))
        if pbest_f[g] > gbest_f:
            gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])
        record(f)
    return PsoResult(gbest, gbest_f, trace)


# ---------------------------------------------------------------------------
# selectivity objective


class SelectivityObjective:
    """Maps comb-line phases of the pump to the Eq.-style selectivity in dB.

    Pump amplitudes come from the comb fit of the pump label's temporal
    factor; each call synthesizes the pump envelope, runs the separable
    engine path against the desired and distractor signals at zero delay, and
    scores the fiber-coupled energies.
    """

    def __init__(self, config: SorterConfig, pump_label: ModeLabel, desired_signal: ModeLabel,
                 distractors: Sequence[ModeLabel]):
        if not distractors:
            raise ContractError("distractor set must be non-empty")
        if config.crystal.diffraction or config.crystal.depleted:
            raise ContractError("selectivity objective runs the separable path; disable diffraction/depletion")
        if len({t.l for t in pump_label.terms}) != 1:
            raise ContractError("pump label must have a single spatial mode to optimize temporal phases")
        beam = config.pump
        template = config.comb_template(beam)
        config.temporal_grid.check_comb(template.spacing_ghz)
        pump_cfg = config.replace(pump=_comb_beam(beam))
        base = pump_cfg.pump_field(pump_label)
        if base.comb is None or not base.separable:
            raise ContractError("pump field did not produce a comb representation")
        self.config = config
        self.comb: CombSpec = base.comb
        self.spatial = base.separable_cache[0]
        self.carrier = base.carrier_wavelength
        self.signals: list[SpatioTemporalField] = [config.signal_field(s) for s in [desired_signal, *distractors]]
        for s in self.signals:
            if not s.separable:
                raise ContractError("signals must be separable for the fast path")
        self.evaluations = 0

    @property
    def initial_phases(self) -> np.ndarray:
        return self.comb.phases

    @property
    def dims(self) -> int:
        return self.comb.n_lines

    def pump_for(self, phases: Sequence[float]) -> SpatioTemporalField:
        spec = self.comb.with_phases(phases)
        temporal = comb_synthesize(spec, self.config.temporal_grid)
        return SpatioTemporalField(self.config.spatial_grid, self.config.temporal_grid, self.carrier,
                                   separable_cache=(self.spatial, temporal), comb=spec)

    def counts(self, phases: Sequence[float]) -> list[float]:
        pump = self.pump_for(phases)
        return [measure_pair(pump, s, self.config).coupled_energy for s in self.signals]

    def __call__(self, phases: Sequence[float]) -> float:
        self.evaluations += 1
        return selectivity(self.counts(phases), 0)


def _comb_beam(beam):
    return beam if beam.use_comb else replace(beam, use_comb=True)


def make_selectivity_objective(config: SorterConfig, pump_label: ModeLabel, desired_signal: ModeLabel,
                               distractors: Sequence[ModeLabel]) -> SelectivityObjective:
    return SelectivityObjective(config, pump_label, desired_signal, distractors)


def optimize_pump(config: SorterConfig, pump_label: ModeLabel, signal_set: Sequence[ModeLabel],
                  pso: PsoConfig, evaluate=None) -> tuple[PsoResult, SelectivityObjective, CombSpec]:
    """Run PSO for one pump row, seeding one candidate with the fitted (unoptimized) phases."""
    desired = pump_label.matched_signal()
    idx = [j for j, s in enumerate(signal_set) if s.same_state(desired)]
    if not idx:
        raise ContractError(f"signal set has no mode matched to pump {pump_label.display_name}")
    others = [s for j, s in enumerate(signal_set) if j != idx[0]]
    objective = make_selectivity_objective(config, pump_label, signal_set[idx[0]], others)
    if pso.dims != objective.dims:
        pso = PsoConfig(**{**pso.__dict__, "dims": objective.dims})
    result = pso_optimize(objective, pso, initial=[objective.initial_phases], evaluate=evaluate)
    return result, objective, objective.comb.with_phases(result.best_phases)

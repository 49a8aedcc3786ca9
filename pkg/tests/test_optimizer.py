import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from qpms.engine import BeamConfig, delay_scan
from qpms.errors import ConfigurationError, ContractError
from qpms.metrics import tomography
from qpms.modes import ModeLabel, product_catalog
from qpms.optimizer import (
    PsoConfig,
    WeightSchedule,
    make_selectivity_objective,
    optimize_pump,
    pso_optimize,
    wrap_diff,
    wrap_phase,
)

TWO_PI = 2 * math.pi
angles = st.floats(-50.0, 50.0, allow_nan=False)


def torus_benchmark(target):
    def f(x):
        return -float(np.sum(wrap_diff(x, target) ** 2))
    return f


@pytest.fixture(scope="module")
def comb_config():
    from qpms.engine import SorterConfig

    base = SorterConfig()
    return base.replace(pump=BeamConfig(carrier=1551.0, use_comb=True))


class TestWrapping:
    @given(angles, angles)
    def test_wrap_diff_range_and_consistency(self, a, b):
        d = float(wrap_diff(a, b))
        assert -math.pi <= d < math.pi
        assert abs(math.remainder(float(wrap_phase(b + d)) - float(wrap_phase(a)), TWO_PI)) < 1e-9

    @given(angles)
    def test_wrap_phase_range(self, a):
        assert 0.0 <= float(wrap_phase(a)) < TWO_PI


class TestSchedules:
    def test_linear(self):
        w = WeightSchedule(0.9, 0.4)
        assert w.at(0, 11) == 0.9
        assert_allclose(w.at(10, 11), 0.4)
        assert_allclose(w.at(5, 11), 0.65)

    def test_exponential_and_constant(self):
        w = WeightSchedule(1.0, 0.01, "exponential")
        assert_allclose(w.at(1, 3), 0.1)
        assert WeightSchedule(1.5, shape="constant").at(7, 10) == 1.5

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            WeightSchedule(-1.0)
        with pytest.raises(ConfigurationError):
            WeightSchedule(1.0, shape="cosine")
        with pytest.raises(ConfigurationError):
            PsoConfig(variant="eq3")

    def test_config_round_trip(self):
        cfg = PsoConfig(ensemble_size=6, dims=3, max_iters=9, seed=4, variant="verbatim-eq2")
        assert PsoConfig.from_dict(cfg.to_dict()) == cfg


class TestPso:
    def test_constant_objective(self):
        cfg = PsoConfig(ensemble_size=5, dims=3, max_iters=20, seed=1)
        res = pso_optimize(lambda x: 1.0, cfg)
        x0 = np.random.default_rng(1).uniform(0, TWO_PI, (5, 3))
        assert any(np.array_equal(res.best_phases, row) for row in x0)
        assert res.trace.best_objective == [1.0] * 21

    def test_synthetic_benchmark(self):
        converged = 0
        for seed in range(20):
            target = np.random.default_rng(1000 + seed).uniform(0, TWO_PI, 8)
            res = pso_optimize(torus_benchmark(target), PsoConfig(ensemble_size=20, dims=8, max_iters=200, seed=seed))
            converged += bool(np.all(np.abs(wrap_diff(res.best_phases, target)) < 0.1))
        assert converged >= 19

    def test_monotone_and_deterministic(self):
        target = np.linspace(0, 6, 4)
        cfg = PsoConfig(ensemble_size=8, dims=4, max_iters=50, seed=3)
        a = pso_optimize(torus_benchmark(target), cfg)
        b = pso_optimize(torus_benchmark(target), cfg)
        assert all(y >= x for x, y in zip(a.trace.best_objective, a.trace.best_objective[1:]))
        assert a.trace.best_objective == b.trace.best_objective
        assert all(np.array_equal(p, q) for p, q in zip(a.trace.best_phases, b.trace.best_phases))

    def test_verbatim_eq2_hand_computed(self):
        """Two iterations of x <- w x + wp R1 pbest + wg R2 gbest, computed element by element."""
        w, wp, wg, seed = 0.5, 0.3, 0.2, 42
        cfg = PsoConfig(ensemble_size=2, dims=2, max_iters=2, seed=seed, variant="verbatim-eq2",
                        w=WeightSchedule(w, shape="constant"), w_p=WeightSchedule(wp, shape="constant"),
                        w_g=WeightSchedule(wg, shape="constant"))

        def f(x):
            return -(x[0] - 1.0) ** 2 - (x[1] - 2.0) ** 2

        rng = np.random.default_rng(seed)
        x = [[float(v) for v in row] for row in rng.uniform(0.0, TWO_PI, (2, 2))]
        pbest = [row[:] for row in x]
        pval = [f(row) for row in x]
        g = 0 if pval[0] >= pval[1] else 1
        gbest, gval = pbest[g][:], pval[g]
        history = [gval]
        for _ in range(2):
            r1, r2 = rng.random((2, 2)), rng.random((2, 2))
            for i in range(2):
                for k in range(2):
                    x[i][k] = (w * x[i][k] + wp * r1[i][k] * pbest[i][k] + wg * r2[i][k] * gbest[k]) % TWO_PI
            for i in range(2):
                v = f(x[i])
                if v > pval[i]:
                    pval[i], pbest[i] = v, x[i][:]
            g = 0 if pval[0] >= pval[1] else 1
            if pval[g] > gval:
                gbest, gval = pbest[g][:], pval[g]
            history.append(gval)

        res = pso_optimize(f, cfg)
        assert_allclose(res.best_phases, gbest, rtol=0, atol=1e-15)
        assert_allclose(res.trace.best_objective, history, rtol=0, atol=1e-15)

    def test_non_finite_frozen(self, caplog):
        calls = {"n": 0}

        def f(x):
            calls["n"] += 1
            return math.nan if calls["n"] == 2 else -float(np.sum(x ** 2))

        res = pso_optimize(f, PsoConfig(ensemble_size=3, dims=2, max_iters=5, seed=0))
        assert any("candidate 1" in e and "frozen" in e for e in res.trace.events)
        assert len(res.trace.best_objective) == 6
        assert math.isfinite(res.best_objective)

    def test_initial_candidate(self):
        start = np.array([1.0, 2.0])
        res = pso_optimize(torus_benchmark(start), PsoConfig(ensemble_size=4, dims=2, max_iters=0), initial=[start])
        assert_allclose(res.best_phases, start)
        assert res.best_objective == 0.0
        with pytest.raises(ConfigurationError):
            pso_optimize(lambda x: 0.0, PsoConfig(ensemble_size=4, dims=2), initial=[[1.0, 2.0, 3.0]])


class TestSelectivityObjective:
    def objective(self, cfg, m=1):
        sigs = product_catalog([0], [0, 1])
        pump = ModeLabel.single(0, m, "pump")
        return make_selectivity_objective(cfg, pump, sigs[m], [s for j, s in enumerate(sigs) if j != m])

    def test_anchor_matches_tomography(self, comb_config):
        obj = self.objective(comb_config)
        m = tomography([ModeLabel.single(0, 1, "pump")], product_catalog([0], [0, 1]), comb_config)
        assert_allclose(obj(obj.initial_phases), m.selectivity_report().by_pump()["X0T1"], atol=1e-9)
        assert obj.dims == 37

    def test_global_phase_invariance(self, comb_config):
        obj = self.objective(comb_config)
        base = obj(obj.initial_phases)
        for offset in (0.3, 2.0, -4.1):
            assert_allclose(obj(obj.initial_phases + offset), base, atol=1e-9)

    def test_delay_ramp_lowers_matched(self, comb_config):
        obj = self.objective(comb_config, m=0)
        k = obj.comb.line_index
        d = 1.0
        ramp = obj.initial_phases + TWO_PI * k * obj.comb.spacing_thz * d
        assert obj(ramp) < obj(obj.initial_phases)
        matched = obj.counts(ramp)[0]
        trace = delay_scan(ModeLabel.single(0, 0, "pump"), ModeLabel.single(0, 0), [0.0, d], comb_config)
        assert_allclose(matched, trace.coupled_energy[1], rtol=1e-6)
        assert trace.coupled_energy[1] < trace.coupled_energy[0]

    def test_contracts(self, comb_config):
        pump, sig = ModeLabel.single(0, 0, "pump"), ModeLabel.single(0, 0)
        with pytest.raises(ContractError):
            make_selectivity_objective(comb_config, pump, sig, [])
        with pytest.raises(ContractError):
            make_selectivity_objective(comb_config.replace(crystal=comb_config.crystal.replace(diffraction=True)),
                                       pump, sig, [ModeLabel.single(0, 1)])
        multi = ModeLabel.of([(0, 0), (1, 0)], "pump")
        with pytest.raises(ContractError):
            make_selectivity_objective(comb_config, multi, sig, [ModeLabel.single(0, 1)])

    def test_optimized_not_worse(self, comb_config):
        pso = PsoConfig(ensemble_size=8, max_iters=8, seed=5)
        res, obj, spec = optimize_pump(comb_config, ModeLabel.single(0, 1, "pump"), product_catalog([0], [0, 1]), pso)
        unopt = obj(obj.initial_phases)
        assert res.best_objective > unopt
        assert_allclose(spec.phases, wrap_phase(res.best_phases), atol=1e-12)
        assert all(y >= x for x, y in zip(res.trace.best_objective, res.trace.best_objective[1:]))

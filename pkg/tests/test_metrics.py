import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import qpms.metrics as metrics
from qpms.engine import delay_scan
from qpms.errors import ConfigurationError, ContractError
from qpms.modes import ModeLabel, TemporalGrid, hg_temporal_mode, product_catalog
from qpms.metrics import (
    INFINITE,
    UNDEFINED,
    ZERO_DESIRED,
    CountsMatrix,
    TrendPoint,
    mub_catalog,
    selectivity,
    selectivity_flag,
    sweep_selectivity,
    tomography,
    trend_report,
)

positive = st.floats(min_value=1e-300, max_value=1e300, allow_nan=False, allow_infinity=False)


def log_ratio_oracle(row, d):
    """Direct transcription of 10 log10(N_D / sum of the other counts)."""
    others = sum(row[:d] + row[d + 1:])
    return 10.0 * (math.log10(row[d]) - math.log10(others))


def temporal(ms, role="signal"):
    return product_catalog([0], ms, role)


class TestSelectivity:
    def test_unit_ratio(self):
        assert selectivity([100, 100], 0) == 0.0

    def test_decade(self):
        assert_allclose(selectivity([1000, 60, 40], 0), 10.0, rtol=1e-15)

    def test_random_rows_match_oracle(self, rng):
        for _ in range(1000):
            row = list(rng.uniform(0, 1e4, 5))
            d = int(rng.integers(5))
            assert selectivity(row, d) == log_ratio_oracle(row, d)

    @given(positive, positive)
    def test_antisymmetry(self, a, b):
        assert selectivity([a, b], 0) == -selectivity([a, b], 1)

    @given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=8), st.floats(1e-6, 1e6), st.data())
    @settings(max_examples=200)
    def test_scale_invariance(self, row, c, data):
        d = data.draw(st.integers(0, len(row) - 1))
        assert abs(selectivity([c * v for v in row], d) - selectivity(row, d)) < 1e-12 * max(1, abs(selectivity(row, d)))

    def test_sentinels(self):
        assert selectivity([5.0, 0.0, 0.0], 0) == math.inf
        assert selectivity_flag([5.0, 0.0, 0.0], 0) == INFINITE
        assert math.isnan(selectivity([0.0, 0.0], 1))
        assert selectivity_flag([0.0, 0.0], 1) == UNDEFINED
        assert selectivity([0.0, 3.0], 0) == -math.inf
        assert selectivity_flag([0.0, 3.0], 0) == ZERO_DESIRED
        assert selectivity_flag([1.0, 3.0], 0) is None

    @pytest.mark.parametrize("row,d", [([1.0], 0), ([1.0, 2.0], 2), ([1.0, -2.0], 0)])
    def test_contract(self, row, d):
        with pytest.raises(ContractError):
            selectivity(row, d)


class TestTomography:
    def test_temporal_argmax_and_dominance(self, config):
        m = tomography(temporal([0, 1, 2], "pump"), temporal([0, 1, 2]), config)
        assert m.desired_indices() == [0, 1, 2]
        assert list(np.argmax(m.counts, axis=1)) == [0, 1, 2]
        for i in range(3):
            assert all(m.counts[i, i] > m.counts[i, j] for j in range(3) if j != i)

    def test_spatial_argmax(self, config):
        ls = [-2, -1, 0, 1, 2]
        m = tomography(product_catalog(ls, [0], "pump"), product_catalog(ls, [0]), config)
        for i, l in enumerate(ls):
            assert ls[int(np.argmax(m.counts[i]))] == -l

    def test_single_cell_matches_delay_scan(self, config):
        p, s = ModeLabel.single(0, 1, "pump"), ModeLabel.single(0, 1)
        m = tomography([p], [s], config)
        assert m.counts.shape == (1, 1)
        assert m.counts[0, 0] == delay_scan(p, s, [0.0], config).zero_delay

    def test_deterministic(self, config):
        a = tomography(temporal([0, 1], "pump"), temporal([0, 1]), config, jobs=1)
        b = tomography(temporal([0, 1], "pump"), temporal([0, 1]), config, jobs=4)
        assert np.array_equal(a.counts, b.counts)

    def test_failed_cell_flagged(self, config, monkeypatch):
        real = metrics.measure_pair

        def flaky(pump, signal, cfg, key=()):
            if key == (1, 0):
                raise ContractError("injected failure")
            return real(pump, signal, cfg, key)

        monkeypatch.setattr(metrics, "measure_pair", flaky)
        m = tomography(temporal([0, 1], "pump"), temporal([0, 1]), config)
        assert m.flags == {(1, 0): "injected failure"}
        assert m.counts[1, 0] == 0.0 and m.counts[1, 1] > 0

    def test_empty_sets(self, config):
        with pytest.raises(ConfigurationError):
            tomography([], temporal([0]), config)

    def test_jitter_reads_scan_peak(self, config):
        cfg = config.replace(jitter_ps=2.0, seed=11)
        delays = list(np.round(np.arange(-12, 13) * 0.125, 3))
        plain = tomography([ModeLabel.single(0, 0, "pump")], temporal([0, 1]), config)
        jit = tomography([ModeLabel.single(0, 0, "pump")], temporal([0, 1]), cfg, delays=delays)
        assert jit.metadata["read"] == "delay-scan peak"
        assert_allclose(jit.counts[0, 0], plain.counts[0, 0], rtol=0.02)


class TestCountsMatrix:
    def matrix(self):
        pumps, sigs = temporal([0, 1], "pump"), temporal([0, 1])
        return CountsMatrix(pumps, sigs, np.array([[8.0, 2.0], [1.0, 4.0]]), {"note": "x"})

    def test_normalized(self):
        m = self.matrix().normalized()
        assert_allclose(max(m.counts[0, 0], m.counts[1, 1]), 1e4)
        assert_allclose(m.counts[1, 1] / m.counts[0, 0], 0.5)
        assert m.metadata["normalized_peak"] == 1e4

    def test_report(self):
        rep = self.matrix().selectivity_report()
        assert_allclose(rep.by_pump()["X0T0"], 10 * math.log10(4.0))
        assert_allclose(rep.by_pump()["X0T1"], 10 * math.log10(4.0))
        assert "X0T1" in rep.table()

    def test_missing_match_undefined(self):
        m = CountsMatrix(temporal([2], "pump"), temporal([0, 1]), np.array([[1.0, 2.0]]))
        row = m.selectivity_report().rows[0]
        assert row.desired_index is None and row.flag == UNDEFINED

    def test_exports(self, tmp_path):
        m = self.matrix()
        m.write_csv(tmp_path / "c.csv")
        m.write_json(tmp_path / "c.json")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "pump,signal,pump_l,pump_m,signal_l,signal_m,counts"
        assert len(lines) == 5
        data = json.loads((tmp_path / "c.json").read_text())
        assert data["counts"] == [[8.0, 2.0], [1.0, 4.0]]

    def test_contract(self):
        with pytest.raises(ContractError):
            CountsMatrix(temporal([0]), temporal([0]), np.array([[1.0, 2.0]]))
        with pytest.raises(ContractError):
            CountsMatrix(temporal([0]), temporal([0]), np.array([[-1.0]]))


class TestMub:
    def test_overlaps(self):
        tg = TemporalGrid()
        t = {m: hg_temporal_mode(m, 2.0, tg) for m in range(3)}

        def envelope(label):
            return sum(term.coeff * t[term.m] for term in label.terms)

        tp, tm, t2 = (envelope(lab) for lab in mub_catalog())
        assert abs(tg.inner(tp, tm)) < 1e-9
        assert_allclose(abs(tg.inner(tp, t[0])) ** 2, 0.5, atol=1e-9)
        assert_allclose(abs(tg.inner(tm, t[1])) ** 2, 0.5, atol=1e-9)
        assert abs(tg.inner(t2, tp)) < 1e-9

    def test_positive_diagonal(self, config):
        m = tomography(mub_catalog(role="pump"), mub_catalog(), config)
        assert m.desired_indices() == [0, 1, 2]
        assert all(s > 0 for s in m.selectivity_report().by_pump().values())


class TestTrends:
    def test_length(self, config):
        points = sweep_selectivity(config, "length", [1.0, 2.5], temporal([0, 1], "pump"), temporal([0, 1]))
        rep = trend_report(points, "length")
        assert rep.direction == "increasing" and rep.all_passed
        assert points[1].selectivity["X0T0"] > points[0].selectivity["X0T0"]

    def test_pulse_width_2_vs_7(self, config):
        cfg = config.replace(temporal_grid=TemporalGrid(1024, 64.0))
        points = sweep_selectivity(cfg, "pulse_width", [2.0, 7.0], temporal([0, 1, 2], "pump"), temporal([0, 1, 2]))
        assert trend_report(points, "pulse_width").all_passed

    def test_pulse_width_short_crystal(self, config):
        cfg = config.replace(crystal=config.crystal.replace(length=1.0))
        points = sweep_selectivity(cfg, "pulse_width", [1.0, 2.0, 3.0], temporal([0, 1], "pump"), temporal([0, 1]))
        rep = trend_report(points, "pulse_width")
        assert rep.all_passed
        assert json.loads(json.dumps(rep.to_dict()))["all_passed"] is True

    def test_optimization_direction(self):
        pts = [TrendPoint("unoptimized", {"a": 1.0}), TrendPoint("optimized", {"a": 1.0})]
        assert trend_report(pts, "optimization").all_passed
        pts = [TrendPoint("unoptimized", {"a": 2.0}), TrendPoint("optimized", {"a": 1.0})]
        assert not trend_report(pts, "optimization").all_passed

    def test_unknown_axis(self, config):
        with pytest.raises(ConfigurationError):
            trend_report([], "colour")
        with pytest.raises(ConfigurationError):
            sweep_selectivity(config, "colour", [1.0], temporal([0]), temporal([0, 1]))

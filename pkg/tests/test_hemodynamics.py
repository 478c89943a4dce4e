"""Hemodynamic index computation: analytic oracles, invariants, file I/O."""

import numpy as np
import pytest

from ecapnet.errors import DegenerateSeries, ParseError, ValidationError
from ecapnet.hemodynamics import (
    EcapField,
    WssSeries,
    compute_indices,
    load_ecap_csv,
    load_wss,
    save_ecap_csv,
    save_wss,
    threshold_map,
)


def series(times, samples):
    return WssSeries(times=np.asarray(times, float),
                     samples=np.asarray(samples, float))


def constant_series(vec, n_times=10, n_verts=4, t_end=1.0):
    t = np.linspace(0.0, t_end, n_times)
    s = np.tile(np.asarray(vec, float), (n_times, n_verts, 1))
    return series(t, s)


class TestValidation:
    def test_too_few_times(self):
        with pytest.raises(DegenerateSeries):
            series([0.0], np.zeros((1, 2, 3)))

    def test_non_increasing_times(self):
        with pytest.raises(ValidationError):
            series([0.0, 1.0, 1.0], np.zeros((3, 2, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            series([0.0, 1.0], np.zeros((3, 2, 3)))

    def test_non_finite(self):
        s = np.zeros((2, 2, 3))
        s[1, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            series([0.0, 1.0], s)


class TestOracles:
    def test_constant_unidirectional(self):
        f = compute_indices(constant_series([1.0, 0.0, 0.0]))
        assert np.allclose(f.tawss, 1.0, atol=1e-12)
        assert np.allclose(f.osi, 0.0, atol=1e-12)
        assert np.allclose(f.ecap, 0.0, atol=1e-12)
        assert f.n_floored == 0

    def test_alternating_signal(self):
        # tau = (2,0,0) for the first half-cycle, (-2,0,0) for the second:
        # TAWSS -> 2, the vector integral cancels, OSI -> 0.5, ECAP -> 0.25
        n = 1000
        t = np.linspace(0.0, 1.0, n)
        s = np.zeros((n, 3, 3))
        s[:, :, 0] = np.where(t < 0.5, 2.0, -2.0)[:, None]
        f = compute_indices(series(t, s))
        assert np.allclose(f.tawss, 2.0, atol=1e-3)
        assert np.allclose(f.osi, 0.5, atol=1e-3)
        assert np.allclose(f.ecap, 0.25, atol=1e-3)

    def test_zero_field_floors(self):
        f = compute_indices(constant_series([0.0, 0.0, 0.0], n_verts=5))
        assert np.allclose(f.tawss, 0.0)
        assert np.allclose(f.osi, 0.0)
        assert np.allclose(f.ecap, 0.0)
        assert f.n_floored == 5

    def test_nonuniform_time_grid(self):
        # constant field is exact under trapezoidal rule on any grid
        t = np.array([0.0, 0.1, 0.35, 0.4, 0.8, 1.3])
        s = np.tile([0.0, 3.0, 4.0], (6, 2, 1))
        f = compute_indices(series(t, s))
        assert np.allclose(f.tawss, 5.0, atol=1e-12)
        assert np.allclose(f.osi, 0.0, atol=1e-12)


class TestInvariants:
    def random_series(self, rng, n_times=20, n_verts=50):
        t = np.sort(rng.uniform(0, 1, n_times))
        t[0], t[-1] = 0.0, 1.0
        return series(t, rng.normal(size=(n_times, n_verts, 3)))

    def test_osi_range(self, rng):
        for _ in range(20):
            f = compute_indices(self.random_series(rng))
            assert np.all(f.osi >= 0.0)
            assert np.all(f.osi <= 0.5)

    def test_time_reversal(self, rng):
        w = self.random_series(rng)
        rev = series(w.times[-1] - w.times[::-1], w.samples[::-1])
        a, b = compute_indices(w), compute_indices(rev)
        assert np.allclose(a.tawss, b.tawss, atol=1e-12)
        assert np.allclose(a.osi, b.osi, atol=1e-12)
        assert np.allclose(a.ecap, b.ecap, atol=1e-12)

    def test_scaling_law(self, rng):
        w = self.random_series(rng)
        s = 3.5
        scaled = series(w.times, s * w.samples)
        a, b = compute_indices(w), compute_indices(scaled)
        ok = a.tawss > 1e-3  # away from the epsilon floor
        assert np.allclose(b.tawss[ok], s * a.tawss[ok], rtol=1e-12)
        assert np.allclose(b.osi[ok], a.osi[ok], atol=1e-12)
        assert np.allclose(b.ecap[ok], a.ecap[ok] / s, rtol=1e-12)


class TestThreshold:
    def test_strict_inequality(self):
        f = EcapField(tawss=np.ones(3), osi=np.zeros(3),
                      ecap=np.array([3.9, 4.0, 4.1]))
        assert threshold_map(f, 4.0).tolist() == [False, False, True]

    def test_invalid_theta(self):
        f = EcapField(tawss=np.ones(1), osi=np.zeros(1), ecap=np.ones(1))
        with pytest.raises(ValidationError):
            threshold_map(f, 0.0)

    def test_percentile_positive_rate(self, rng):
        ecap = rng.uniform(0, 10, 200)
        f = EcapField(tawss=np.ones(200), osi=np.zeros(200), ecap=ecap)
        theta = float(np.percentile(ecap, 90))
        n_pos = int(threshold_map(f, theta).sum())
        assert abs(n_pos - 20) <= 1


class TestIO:
    def test_wss_round_trip(self, rng, tmp_path):
        w = series(np.sort(rng.uniform(0, 1, 7)),
                   rng.normal(size=(7, 9, 3)))
        p = tmp_path / "w.bin"
        save_wss(w, p)
        back = load_wss(p)
        assert np.array_equal(back.times, w.times)
        assert np.array_equal(back.samples, w.samples)

    def test_wss_bad_schema(self, tmp_path):
        import json
        import struct
        p = tmp_path / "bad.bin"
        blob = json.dumps({"schema": "nope"}).encode()
        p.write_bytes(struct.pack("<Q", len(blob)) + blob)
        with pytest.raises(ParseError):
            load_wss(p)

    def test_wss_truncated(self, tmp_path):
        w = constant_series([1.0, 0.0, 0.0])
        p = tmp_path / "t.bin"
        save_wss(w, p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ParseError):
            load_wss(p)

    def test_ecap_csv_round_trip(self, rng, tmp_path):
        f = compute_indices(series(np.linspace(0, 1, 8),
                                   rng.normal(size=(8, 11, 3))))
        p = tmp_path / "e.csv"
        save_ecap_csv(f, p)
        back = load_ecap_csv(p)
        assert np.array_equal(back.tawss, f.tawss)
        assert np.array_equal(back.osi, f.osi)
        assert np.array_equal(back.ecap, f.ecap)

    def test_ecap_csv_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n")
        with pytest.raises(ParseError):
            load_ecap_csv(p)

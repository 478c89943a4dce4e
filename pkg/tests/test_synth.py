"""Synthetic shape/WSS generator: geometry, signal statistics, datasets."""

import numpy as np
import pytest

from ecapnet.errors import SelfIntersection, ValidationError
from ecapnet.hemodynamics import compute_indices
from ecapnet.synth import (
    ShapeParams,
    build_dataset,
    generate_mesh,
    generate_wss,
    icosphere,
    load_dataset,
    make_sample,
    manifest_hash,
    pocket_depth,
    sample_params,
)


class TestIcosphere:
    def test_counts(self):
        m = icosphere(0)
        assert m.n_vertices == 12 and m.n_faces == 20
        m3 = icosphere(3)
        assert m3.n_vertices == 642 and m3.n_faces == 1280

    def test_unit_radius(self):
        m = icosphere(2)
        r = np.linalg.norm(m.vertices, axis=1)
        assert np.allclose(r, 1.0, atol=1e-12)


class TestGenerateMesh:
    def test_sphere_limit(self):
        # no lobes, equal axes, no bend: an exact sphere of that radius
        p = ShapeParams(n_lobes=0, semi_axes=(9.0, 9.0, 9.0), bend_angle=0.0)
        m = generate_mesh(p)
        r = np.linalg.norm(m.vertices, axis=1)
        assert np.allclose(r, 9.0, atol=1e-9)

    def test_deterministic(self):
        p = ShapeParams(seed=42)
        a, b = generate_mesh(p), generate_mesh(p)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.faces, b.faces)

    def test_amplitude_guard(self):
        with pytest.raises(SelfIntersection):
            generate_mesh(ShapeParams(semi_axes=(5.0, 12.0, 15.0),
                                      lobe_amplitude=2.5))

    def test_random_draws_valid(self, rng):
        # generate_mesh runs full validation; any draw must survive it
        for _ in range(10):
            generate_mesh(sample_params(rng))

    def test_n_lobes_bounds(self):
        with pytest.raises(ValidationError):
            ShapeParams(n_lobes=5)


class TestWss:
    def test_shallow_vertices_unidirectional(self):
        p = ShapeParams(seed=3)
        mesh = generate_mesh(p)
        wss = generate_wss(mesh, p)
        depth = pocket_depth(p, icosphere(p.subdivisions).vertices)
        f = compute_indices(wss)
        assert np.all(f.osi[depth == 0.0] < 0.05)

    def test_deep_vertex_high_ecap(self, rng):
        # the deepest pocket vertex should sit in the sample's top decile
        hits = 0
        for _ in range(50):
            p = sample_params(rng)
            s = make_sample(p)
            depth = pocket_depth(p, icosphere(p.subdivisions).vertices)
            v = int(np.argmax(depth))
            p90 = np.percentile(s.ecap.ecap, 90)
            hits += s.ecap.ecap[v] >= p90
        assert hits >= 45

    def test_magnitude_scaling(self):
        base = ShapeParams(seed=9, wss_magnitude=1.0)
        double = ShapeParams(seed=9, wss_magnitude=2.0)
        a = make_sample(base).ecap
        b = make_sample(double).ecap
        ok = a.tawss > 1e-3
        assert np.allclose(b.ecap[ok], a.ecap[ok] / 2.0, rtol=1e-9)

    def test_mismatched_mesh_rejected(self):
        p = ShapeParams(seed=1, subdivisions=2)
        mesh = generate_mesh(ShapeParams(seed=1, subdivisions=3))
        with pytest.raises(ValidationError):
            generate_wss(mesh, p)

    def test_too_few_times(self):
        p = ShapeParams(seed=1)
        with pytest.raises(ValidationError):
            generate_wss(generate_mesh(p), p, n_times=4)


class TestDataset:
    def test_build_and_load(self, tmp_path):
        manifest = build_dataset(tmp_path / "ds", 5, seed=11,
                                 train_fraction=0.8)
        assert manifest["schema"] == "ds-v1"
        assert len(manifest["split"]["train"]) == 4
        assert len(manifest["split"]["test"]) == 1
        ids = sorted(manifest["split"]["train"] + manifest["split"]["test"])
        assert ids == list(range(5))
        samples, loaded = load_dataset(tmp_path / "ds")
        assert len(samples) == 5
        assert manifest_hash(loaded) == manifest_hash(manifest)

    def test_rebuild_identical(self, tmp_path):
        build_dataset(tmp_path / "a", 3, seed=7)
        build_dataset(tmp_path / "b", 3, seed=7)
        for rel in ["manifest.json", "sample_0001/mesh.off",
                    "sample_0001/wss.bin", "sample_0001/ecap.csv"]:
            assert (tmp_path / "a" / rel).read_bytes() == \
                (tmp_path / "b" / rel).read_bytes(), rel

    def test_round_trip_targets_exact(self, tmp_path):
        build_dataset(tmp_path / "ds", 2, seed=5)
        samples, manifest = load_dataset(tmp_path / "ds")
        regen = make_sample(samples[0].params)
        assert np.array_equal(regen.wss.samples, samples[0].wss.samples)
        assert np.array_equal(regen.ecap.ecap, samples[0].ecap.ecap)

    def test_min_samples(self, tmp_path):
        with pytest.raises(ValidationError):
            build_dataset(tmp_path / "ds", 1)

"""Synthetic appendage-like meshes and procedural wall-shear-stress series.

Shapes are deformed icospheres: an ellipsoid base plus radial Gaussian
lobes and a smooth bend. WSS is built so its magnitude drops and its
directional oscillation grows inside the lobes ("pockets"), which makes
ECAP concentrate exactly where a real appendage stagnates. Everything is
a deterministic function of the seed, so the geometry alone determines
the ECAP target and a model can in principle fit it exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import SelfIntersection, ValidationError
from .hemodynamics import (EcapField, WssSeries, compute_indices, load_wss,
                           save_ecap_csv, save_wss)
from .mesh import TriMesh, load_off, save_off, validate_mesh

DATASET_SCHEMA = "ds-v1"

# offset/magnitude profile of the procedural WSS signal
_OSC_OFFSET_SHALLOW = 2.0   # no direction reversal at zero pocket depth
_OSC_OFFSET_DEEP = 0.02     # nearly symmetric oscillation at full depth
_MAG_FLOOR = 0.08           # fraction of base magnitude kept at full depth
_DEPTH_SCALE = 3.0          # mm of radial bump that saturates pocket depth


@dataclass(frozen=True)
class ShapeParams:
    seed: int = 0
    semi_axes: tuple = (10.0, 12.0, 15.0)  # mm
    n_lobes: int = 2
    lobe_amplitude: float = 3.0            # mm, must stay < min semi-axis / 2
    lobe_width: float = 0.5                # radians, angular Gaussian width
    bend_angle: float = 0.3                # radians over the long axis
    subdivisions: int = 3
    template_mode: bool = True
    wss_magnitude: float = 1.2             # Pa
    wss_period: float = 1.0                # s
    noise: float = 0.0                     # vertex-wise magnitude jitter

    def __post_init__(self):
        if not 0 <= self.n_lobes <= 4:
            raise ValidationError("n_lobes must be in [0, 4]")


@dataclass(frozen=True)
class SynthSample:
    mesh: TriMesh
    wss: WssSeries
    ecap: EcapField
    params: ShapeParams


# -- icosphere template ----------------------------------------------------


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron projected onto the sphere; deterministic order."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts = list(verts)
    for _ in range(subdivisions):
        midpoint = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        faces = np.array(new_faces, dtype=np.int64)
    return TriMesh(np.array(verts) * radius, faces)


# -- shape synthesis -------------------------------------------------------


def _lobe_centers(params: ShapeParams) -> np.ndarray:
    """Deterministic unit directions of lobe bumps, (n_lobes, 3)."""
    rng = np.random.default_rng(params.seed)
    if params.n_lobes == 0:
        return np.zeros((0, 3))
    d = rng.normal(size=(params.n_lobes, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _bump_field(params: ShapeParams, directions: np.ndarray) -> np.ndarray:
    """Radial lobe displacement (mm) evaluated at unit sphere directions."""
    centers = _lobe_centers(params)
    bump = np.zeros(directions.shape[0])
    for c in centers:
        ang = np.arccos(np.clip(directions @ c, -1.0, 1.0))
        bump += params.lobe_amplitude * np.exp(-((ang / params.lobe_width) ** 2))
    return bump


def pocket_depth(params: ShapeParams, directions: np.ndarray) -> np.ndarray:
    """Lobe displacement mapped to [0,1] by a fixed scale.

    The scale is a constant (not the per-sample peak) so that identical
    local geometry always produces identical depth, keeping the WSS a
    local function of the shape across the whole dataset.
    """
    bump = _bump_field(params, directions)
    return np.clip(bump / _DEPTH_SCALE, 0.0, 1.0)


def generate_mesh(params: ShapeParams) -> TriMesh:
    if params.lobe_amplitude >= min(params.semi_axes) / 2.0:
        raise SelfIntersection(
            "lobe amplitude must stay below half the smallest semi-axis")
    template = icosphere(params.subdivisions)
    d = template.vertices
    r_ell = 1.0 / np.sqrt(((d / np.asarray(params.semi_axes)) ** 2).sum(axis=1))
    radius = r_ell + _bump_field(params, d)
    v = d * radius[:, None]
    # smooth bend about the x-axis, graded along z
    if params.bend_angle:
        zmax = np.abs(v[:, 2]).max()
        theta = params.bend_angle * (v[:, 2] / zmax + 1.0) / 2.0
        y = v[:, 1] * np.cos(theta) - v[:, 2] * np.sin(theta)
        z = v[:, 1] * np.sin(theta) + v[:, 2] * np.cos(theta)
        v = np.column_stack([v[:, 0], y, z])
    return validate_mesh(v, template.faces)


def sample_params(rng: np.random.Generator, *, amp_range=(3.2, 4.5),
                  axis_range=(10.5, 13.0), width_range=(0.3, 0.45),
                  bend_range=(0.0, 0.5), n_lobes_range=(1, 3),
                  subdivisions=3, wss_magnitude=1.2, noise=0.0,
                  max_draws: int = 100) -> ShapeParams:
    """Draw ShapeParams, resampling until the injectivity bound holds."""
    for _ in range(max_draws):
        axes = tuple(np.round(rng.uniform(*axis_range, size=3), 6))
        amp = float(np.round(rng.uniform(*amp_range), 6))
        params = ShapeParams(
            seed=int(rng.integers(0, 2**31 - 1)),
            semi_axes=axes,
            n_lobes=int(rng.integers(n_lobes_range[0], n_lobes_range[1] + 1)),
            lobe_amplitude=amp,
            lobe_width=float(np.round(rng.uniform(*width_range), 6)),
            bend_angle=float(np.round(rng.uniform(*bend_range), 6)),
            subdivisions=subdivisions,
            wss_magnitude=wss_magnitude,
            noise=noise,
        )
        if params.lobe_amplitude < min(params.semi_axes) / 2.0:
            return params
    raise SelfIntersection(f"no valid parameter draw in {max_draws} attempts")


# -- procedural WSS --------------------------------------------------------


def generate_wss(mesh: TriMesh, params: ShapeParams, n_times: int = 32,
                 period: float | None = None) -> WssSeries:
    if n_times < 8:
        raise ValidationError("n_times must be >= 8")
    period = params.wss_period if period is None else period
    template = icosphere(params.subdivisions)
    if template.n_vertices != mesh.n_vertices:
        raise ValidationError("mesh does not match the params template")
    depth = pocket_depth(params, template.vertices)

    # tangent direction field: project a fixed axis onto the surface
    from .mesh import vertex_normals
    normals = vertex_normals(mesh)
    axis = np.array([0.0, 0.0, 1.0])
    tang = axis - normals * (normals @ axis)[:, None]
    small = np.linalg.norm(tang, axis=1) < 1e-6
    if np.any(small):
        alt = np.array([1.0, 0.0, 0.0])
        tang[small] = alt - normals[small] * (normals[small] @ alt)[:, None]
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)

    mag = params.wss_magnitude * (_MAG_FLOOR + (1 - _MAG_FLOOR)
                                  * (1.0 - depth) ** 2)
    if params.noise > 0:
        rng = np.random.default_rng(params.seed + 7)
        mag = mag * (1.0 + params.noise * rng.standard_normal(mag.size))
        mag = np.abs(mag)
    offset = (_OSC_OFFSET_SHALLOW * (1.0 - depth)
              + _OSC_OFFSET_DEEP * depth)
    times = np.linspace(0.0, period, n_times)
    wave = np.sin(2.0 * np.pi * times / period)          # (T,)
    signal = offset[None, :] + wave[:, None]             # (T, N)
    samples = (mag[None, :] * signal)[:, :, None] * tang[None, :, :]
    return WssSeries(times=times, samples=samples)


def make_sample(params: ShapeParams, n_times: int = 32) -> SynthSample:
    mesh = generate_mesh(params)
    wss = generate_wss(mesh, params, n_times=n_times)
    return SynthSample(mesh=mesh, wss=wss, ecap=compute_indices(wss),
                       params=params)


# -- persisted datasets ----------------------------------------------------


def _params_doc(params: ShapeParams) -> dict:
    doc = asdict(params)
    doc["semi_axes"] = list(doc["semi_axes"])
    return doc


def manifest_hash(manifest: dict) -> str:
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_dataset(out_dir, n_samples: int, seed: int = 0,
                  train_fraction: float = 0.8, n_times: int = 32,
                  **dist_kwargs) -> dict:
    """Generate, persist, and describe a dataset; returns the manifest."""
    if n_samples < 2:
        raise ValidationError("need at least 2 samples")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_samples):
        params = sample_params(rng, **dist_kwargs)
        sample = make_sample(params, n_times=n_times)
        sdir = out_dir / f"sample_{i:04d}"
        sdir.mkdir(exist_ok=True)
        try:
            save_off(sample.mesh, sdir / "mesh.off")
            save_wss(sample.wss, sdir / "wss.bin")
            save_ecap_csv(sample.ecap, sdir / "ecap.csv")
        except OSError as exc:
            raise OSError(f"sample {i}: {exc}") from exc
        entries.append({"dir": sdir.name, "params": _params_doc(params),
                        "n_vertices": sample.mesh.n_vertices})
    order = rng.permutation(n_samples)
    n_train = int(round(train_fraction * n_samples))
    manifest = {
        "schema": DATASET_SCHEMA,
        "seed": seed,
        "n_samples": n_samples,
        "n_times": n_times,
        "formats": {"mesh": "OFF", "wss": "wss-v1", "ecap": "csv"},
        "samples": entries,
        "split": {"train": sorted(int(s) for s in order[:n_train]),
                  "test": sorted(int(s) for s in order[n_train:])},
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest


def load_dataset(dataset_dir) -> tuple[list, dict]:
    """Load every sample of a persisted dataset; returns (samples, manifest)."""
    dataset_dir = Path(dataset_dir)
    with open(dataset_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != DATASET_SCHEMA:
        raise ValidationError(
            f"unsupported dataset schema {manifest.get('schema')!r}")
    samples = []
    for entry in manifest["samples"]:
        sdir = dataset_dir / entry["dir"]
        mesh = load_off(sdir / "mesh.off")
        wss = load_wss(sdir / "wss.bin")
        p = dict(entry["params"])
        p["semi_axes"] = tuple(p["semi_axes"])
        params = ShapeParams(**p)
        samples.append(SynthSample(mesh=mesh, wss=wss,
                                   ecap=compute_indices(wss), params=params))
    return samples, manifest

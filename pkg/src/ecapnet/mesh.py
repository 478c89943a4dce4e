"""Triangle surface meshes: loading, validation, normals and curvature.

Meshes are immutable after construction. Only ASCII formats (OFF and
ASCII PLY) are accepted so fixtures stay diffable; invalid meshes are
rejected rather than repaired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateNormal, ParseError, ValidationError,
                     ZeroAreaNeighborhood)

_AREA_FLOOR = 1e-12  # mm^2


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (n_vertices, 3) float64, mm
    faces: np.ndarray     # (n_faces, 3) int64

    def __post_init__(self):
        object.__setattr__(self, "vertices",
                           np.ascontiguousarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "faces",
                           np.ascontiguousarray(self.faces, dtype=np.int64))
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]


@dataclass(frozen=True)
class VertexAttributes:
    normal: np.ndarray     # (n_vertices, 3), unit vectors
    curvature: np.ndarray  # (n_vertices,), 1/mm


def face_areas(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return 0.5 * np.linalg.norm(cross, axis=1)


def undirected_edges(faces: np.ndarray) -> np.ndarray:
    """Unique undirected edges (i<j) of a triangle list."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def validate_mesh(vertices: np.ndarray, faces: np.ndarray) -> TriMesh:
    """Check all TriMesh invariants; raise ValidationError naming the culprit."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ValidationError("vertices must be an (n, 3) array")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ValidationError("faces must be an (m, 3) array")
    if not np.all(np.isfinite(vertices)):
        bad = int(np.argwhere(~np.isfinite(vertices))[0, 0])
        raise ValidationError(f"non-finite coordinate at vertex {bad}")
    n = vertices.shape[0]
    if faces.size and (faces.min() < 0 or faces.max() >= n):
        bad = int(np.argwhere((faces < 0) | (faces >= n))[0, 0])
        raise ValidationError(f"face {bad} references vertex outside [0, {n})")
    for i, (a, b, c) in enumerate(faces):
        if a == b or b == c or a == c:
            raise ValidationError(f"face {i} has repeated vertex indices")
    mesh = TriMesh(vertices, faces)
    areas = face_areas(mesh)
    if np.any(areas <= _AREA_FLOOR):
        bad = int(np.argmax(areas <= _AREA_FLOOR))
        raise ValidationError(f"face {bad} is degenerate (area <= {_AREA_FLOOR})")

    # edge-manifold: each undirected edge in at most 2 faces
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts > 2):
        i, j = uniq[int(np.argmax(counts > 2))]
        raise ValidationError(f"edge ({i}, {j}) shared by more than 2 faces")

    # single connected component over vertices used by faces; isolated
    # vertices count as separate components
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in uniq:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    n_comp = len({find(i) for i in range(n)})
    if n_comp != 1:
        raise ValidationError(f"{n_comp} connected components")
    return mesh


# -- file I/O --------------------------------------------------------------


def _data_lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def load_off(path) -> TriMesh:
    with open(path, "r") as fh:
        lines = list(_data_lines(fh.read()))
    if not lines or lines[0] != "OFF":
        raise ParseError(f"{path}: first line must be 'OFF'")
    try:
        nv, nf, _ = (int(tok) for tok in lines[1].split())
    except (ValueError, IndexError):
        raise ParseError(f"{path}: bad count line") from None
    body = lines[2:]
    if len(body) < nv:
        raise ParseError(f"{path}: ParseError at vertex record {len(body) + 1}: "
                         f"expected {nv} vertices")
    verts = np.empty((nv, 3))
    for i in range(nv):
        toks = body[i].split()
        if len(toks) != 3:
            raise ParseError(f"{path}: vertex record {i + 1} has {len(toks)} fields")
        try:
            verts[i] = [float(t) for t in toks]
        except ValueError:
            raise ParseError(f"{path}: bad float at vertex record {i + 1}") from None
    face_lines = body[nv:]
    if len(face_lines) < nf:
        raise ParseError(f"{path}: expected {nf} faces, found {len(face_lines)}")
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        toks = face_lines[i].split()
        if len(toks) != 4 or toks[0] != "3":
            raise ParseError(f"{path}: face record {i + 1} is not a triangle")
        try:
            faces[i] = [int(t) for t in toks[1:]]
        except ValueError:
            raise ParseError(f"{path}: bad index at face record {i + 1}") from None
    return validate_mesh(verts, faces)


def load_ply(path) -> TriMesh:
    with open(path, "r") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}: missing 'ply' magic")
    nv = nf = None
    i = 1
    while i < len(lines):
        toks = lines[i].strip().split()
        i += 1
        if not toks or toks[0] == "comment":
            continue
        if toks[0] == "format":
            if toks[1] != "ascii":
                raise ParseError(f"{path}: only ASCII PLY is supported")
        elif toks[0] == "element":
            if toks[1] == "vertex":
                nv = int(toks[2])
            elif toks[1] == "face":
                nf = int(toks[2])
            else:
                raise ParseError(f"{path}: unsupported element '{toks[1]}'")
        elif toks[0] == "end_header":
            break
        elif toks[0] != "property":
            raise ParseError(f"{path}: unexpected header line '{' '.join(toks)}'")
    else:
        raise ParseError(f"{path}: header never ends")
    if nv is None or nf is None:
        raise ParseError(f"{path}: missing vertex/face element declarations")
    body = [ln.strip() for ln in lines[i:] if ln.strip()]
    if len(body) < nv + nf:
        raise ParseError(f"{path}: expected {nv + nf} data lines, "
                         f"found {len(body)}")
    verts = np.empty((nv, 3))
    for j in range(nv):
        toks = body[j].split()
        if len(toks) < 3:
            raise ParseError(f"{path}: vertex record {j + 1} too short")
        verts[j] = [float(t) for t in toks[:3]]
    faces = np.empty((nf, 3), dtype=np.int64)
    for j in range(nf):
        toks = body[nv + j].split()
        if len(toks) < 4 or toks[0] != "3":
            raise ParseError(f"{path}: face record {j + 1} is not a triangle")
        faces[j] = [int(t) for t in toks[1:4]]
    return validate_mesh(verts, faces)


def load_mesh(path, fmt: str | None = None) -> TriMesh:
    """Load and validate a mesh; format inferred from the suffix if omitted."""
    if fmt is None:
        fmt = "PLY" if str(path).lower().endswith(".ply") else "OFF"
    fmt = fmt.upper()
    if fmt == "OFF":
        return load_off(path)
    if fmt == "PLY":
        return load_ply(path)
    raise ParseError(f"unsupported format '{fmt}'")


def save_off(mesh: TriMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"3 {a} {b} {c}\n")


# -- differential quantities ----------------------------------------------


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length."""
    v, f = mesh.vertices, mesh.faces
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])  # 2*area*n
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, f[:, k], fn)
    norms = np.linalg.norm(acc, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmax(norms < 1e-12))
        raise DegenerateNormal(f"vertex {bad} has vanishing normal sum")
    return acc / norms[:, None]


def _corner_angles(mesh: TriMesh) -> np.ndarray:
    """(n_faces, 3) interior angles at each face corner."""
    v, f = mesh.vertices, mesh.faces
    angles = np.empty((f.shape[0], 3))
    for k in range(3):
        a = v[f[:, (k + 1) % 3]] - v[f[:, k]]
        b = v[f[:, (k + 2) % 3]] - v[f[:, k]]
        cosang = np.einsum("ij,ij->i", a, b) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles[:, k] = np.arccos(np.clip(cosang, -1.0, 1.0))
    return angles


def boundary_vertices(mesh: TriMesh) -> np.ndarray:
    """Boolean mask of vertices on a boundary edge (edge with one face)."""
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary = uniq[counts == 1]
    mask[on_boundary.ravel()] = True
    return mask


def angle_deficits(mesh: TriMesh) -> np.ndarray:
    """2*pi (pi on the boundary) minus the summed corner angles per vertex."""
    angles = _corner_angles(mesh)
    total = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(total, mesh.faces[:, k], angles[:, k])
    full = np.where(boundary_vertices(mesh), np.pi, 2.0 * np.pi)
    return full - total


def vertex_curvature(mesh: TriMesh) -> np.ndarray:
    """Discrete Gaussian curvature: angle deficit over barycentric area."""
    areas = face_areas(mesh)
    a_mixed = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(a_mixed, mesh.faces[:, k], areas / 3.0)
    if np.any(a_mixed < _AREA_FLOOR):
        bad = int(np.argmax(a_mixed < _AREA_FLOOR))
        raise ZeroAreaNeighborhood(f"vertex {bad} has near-zero one-ring area")
    return angle_deficits(mesh) / a_mixed


def compute_attributes(mesh: TriMesh) -> VertexAttributes:
    return VertexAttributes(normal=vertex_normals(mesh),
                            curvature=vertex_curvature(mesh))

import numpy as np
import pytest

from ecapnet.graph import FeatureGraph, normalize_pseudo
from ecapnet.synth import icosphere


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_graph(rng, n_nodes=12, n_feat=4, neighbors=3):
    """Small random connected-ish graph with valid pseudo-coordinates."""
    pos = rng.normal(size=(n_nodes, 3))
    pairs = set()
    for i in range(n_nodes):
        for j in rng.choice(n_nodes, neighbors, replace=False):
            if i != int(j):
                pairs.add((i, int(j)))
                pairs.add((int(j), i))
    edges = np.array(sorted(pairs), dtype=np.int64)
    delta = pos[edges[:, 1]] - pos[edges[:, 0]]
    scale = float(np.abs(delta).max())
    return FeatureGraph(node_features=rng.normal(size=(n_nodes, n_feat)),
                        edges=edges,
                        pseudo_coords=normalize_pseudo(delta, scale),
                        positions=pos, scale=scale)


@pytest.fixture(scope="session")
def unit_icosphere():
    return icosphere(3)


TETRA_OFF = """OFF
4 4 6
0 0 0
1 0 0
0 1 0
0 0 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
"""


def grid_mesh(n=4, flip=False):
    """Flat (n x n) triangulated square grid in the z=0 plane, CCW faces."""
    xs, ys = np.meshgrid(np.arange(n, dtype=float), np.arange(n, dtype=float))
    verts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(n * n)])
    faces = []
    for r in range(n - 1):
        for c in range(n - 1):
            a = r * n + c
            b, d, e = a + 1, a + n, a + n + 1
            faces += [[a, b, e], [a, e, d]]
    faces = np.array(faces, dtype=np.int64)
    if flip:
        faces = faces[:, ::-1]
    from ecapnet.mesh import TriMesh
    return TriMesh(verts, faces)

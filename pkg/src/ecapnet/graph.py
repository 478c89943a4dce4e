"""Mesh-to-graph conversion with edge pseudo-coordinates.

Node features are (curvature, normal_x, normal_y, normal_z) in that fixed
order. Each undirected mesh edge becomes two directed edges whose
pseudo-coordinates are the relative Cartesian offsets mapped into [0,1]^3
by a single per-graph scale, symmetric about 0.5.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyBatch, LengthMismatch, ZeroScale
from .mesh import TriMesh, VertexAttributes, undirected_edges

FEATURE_CHANNELS = ("curvature", "normal_x", "normal_y", "normal_z")
SCHEMA_VERSION = "fg-v1"


@dataclass(frozen=True)
class FeatureGraph:
    node_features: np.ndarray  # (n_nodes, 4)
    edges: np.ndarray          # (n_edges, 2) directed (src, dst)
    pseudo_coords: np.ndarray  # (n_edges, 3), each component in [0, 1]
    positions: np.ndarray      # (n_nodes, 3) mm, provenance
    scale: float               # the per-graph normalization scale

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]


@dataclass
class GraphBatch:
    """Disjoint union of graphs with per-node regression targets."""

    node_features: np.ndarray
    edges: np.ndarray
    pseudo_coords: np.ndarray
    targets: np.ndarray            # (n_nodes,) or (n_nodes, 1)
    node_offsets: list = field(default_factory=list)  # (start, stop) per graph

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]


def normalize_pseudo(delta: np.ndarray, scale: float) -> np.ndarray:
    """Map edge offsets into [0,1]^3: u = 0.5 + delta / (2 * scale)."""
    if scale <= 0:
        raise ZeroScale("pseudo-coordinate scale must be positive")
    u = 0.5 + np.asarray(delta, dtype=np.float64) / (2.0 * scale)
    return np.clip(u, 0.0, 1.0)  # clip only sands off 1-ulp overshoot


def build_graph(mesh: TriMesh, attrs: VertexAttributes) -> FeatureGraph:
    und = undirected_edges(mesh.faces)
    edges = np.concatenate([und, und[:, ::-1]])
    delta = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    scale = float(np.max(np.abs(delta)))
    if scale <= 0:
        raise ZeroScale("all mesh edges have zero length")
    feats = np.column_stack([attrs.curvature, attrs.normal])
    return FeatureGraph(node_features=feats,
                        edges=edges,
                        pseudo_coords=normalize_pseudo(delta, scale),
                        positions=np.array(mesh.vertices),
                        scale=scale)


def batch_graphs(graphs: list, targets: list) -> GraphBatch:
    if not graphs:
        raise EmptyBatch("cannot batch zero graphs")
    if len(graphs) != len(targets):
        raise LengthMismatch(f"{len(graphs)} graphs vs {len(targets)} targets")
    for k, (g, t) in enumerate(zip(graphs, targets)):
        if np.asarray(t).shape[0] != g.n_nodes:
            raise LengthMismatch(
                f"graph {k}: {g.n_nodes} nodes vs {np.asarray(t).shape[0]} targets")
    offsets, feats, edges, pseudo, targ = [], [], [], [], []
    start = 0
    for g, t in zip(graphs, targets):
        offsets.append((start, start + g.n_nodes))
        feats.append(g.node_features)
        edges.append(g.edges + start)
        pseudo.append(g.pseudo_coords)
        targ.append(np.asarray(t, dtype=np.float64).reshape(-1))
        start += g.n_nodes
    return GraphBatch(node_features=np.concatenate(feats),
                      edges=np.concatenate(edges),
                      pseudo_coords=np.concatenate(pseudo),
                      targets=np.concatenate(targ),
                      node_offsets=offsets)


def permute_graph(graph: FeatureGraph, perm: np.ndarray) -> FeatureGraph:
    """Relabel nodes: new index of old node i is perm[i]."""
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    new_edges = perm[graph.edges]
    return FeatureGraph(node_features=graph.node_features[inv],
                        edges=new_edges,
                        pseudo_coords=np.array(graph.pseudo_coords),
                        positions=graph.positions[inv],
                        scale=graph.scale)


def to_json(graph: FeatureGraph) -> str:
    doc = {
        "schema": SCHEMA_VERSION,
        "feature_channels": list(FEATURE_CHANNELS),
        "n_nodes": graph.n_nodes,
        "node_features": graph.node_features.tolist(),
        "edges": graph.edges.tolist(),
        "pseudo_coords": graph.pseudo_coords.tolist(),
        "positions": graph.positions.tolist(),
        "scale": graph.scale,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def from_json(text: str) -> FeatureGraph:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported graph schema {doc.get('schema')!r}")
    return FeatureGraph(node_features=np.array(doc["node_features"]),
                        edges=np.array(doc["edges"], dtype=np.int64),
                        pseudo_coords=np.array(doc["pseudo_coords"]),
                        positions=np.array(doc["positions"]),
                        scale=float(doc["scale"]))

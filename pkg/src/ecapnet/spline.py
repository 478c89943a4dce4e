"""Continuous B-spline kernel convolution over edge pseudo-coordinates.

The kernel is a tensor product of degree-1 (hat) B-splines on [0,1] with
k control points per dimension, so each pseudo-coordinate activates at
most 2^3 = 8 of the k^3 control weights. Messages from neighbors are
averaged (not summed) and a root weight plus bias handles the node's own
features.

Message passing runs through numba-jitted kernels when numba is
importable and falls back to a grouped-matmul numpy path otherwise; both
paths compute the same sums (edge order vs weight-group order), each
deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor
from .errors import OutOfDomain, ShapeMismatch

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@dataclass(frozen=True)
class SplineKernelSpec:
    dims: int = 3
    degree: int = 1
    kernel_size: int = 5

    def __post_init__(self):
        if self.degree != 1:
            raise ValueError("only degree-1 splines are supported")
        if self.kernel_size < 2:
            raise ValueError("kernel_size must be >= 2")

    @property
    def n_weights(self) -> int:
        return self.kernel_size**self.dims


def basis(u: np.ndarray, spec: SplineKernelSpec):
    """Active (flat_index, value) pairs for pseudo-coordinates u.

    u: (n, 3) in [0,1]^3. Returns (idx, val), both (n, 8); basis values of
    each row sum to 1 exactly. Flat index = ix*k^2 + iy*k + iz.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if u.shape[1] != spec.dims:
        raise ShapeMismatch(f"expected {spec.dims}-dim pseudo-coordinates")
    if np.any(u < -1e-12) or np.any(u > 1 + 1e-12):
        raise OutOfDomain("pseudo-coordinate outside [0, 1]")
    k = spec.kernel_size
    p = np.clip(u, 0.0, 1.0) * (k - 1)
    i0 = np.minimum(np.floor(p), k - 2).astype(np.int64)  # (n, 3)
    t = p - i0
    # per-dimension pairs: (i0, 1-t) and (i0+1, t); tensor product over dims
    n = u.shape[0]
    idx = np.empty((n, 8), dtype=np.int64)
    val = np.empty((n, 8))
    for a in range(8):
        dx, dy, dz = (a >> 2) & 1, (a >> 1) & 1, a & 1
        idx[:, a] = ((i0[:, 0] + dx) * k * k + (i0[:, 1] + dy) * k
                     + (i0[:, 2] + dz))
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        wy = t[:, 1] if dy else 1.0 - t[:, 1]
        wz = t[:, 2] if dz else 1.0 - t[:, 2]
        val[:, a] = wx * wy * wz
    return idx, val


class BasisCache:
    """Precomputed basis pairs for one graph/batch.

    Shared by all layers of a forward pass because pseudo-coordinates do
    not change through the network.
    """

    def __init__(self, edges: np.ndarray, pseudo: np.ndarray, n_nodes: int,
                 spec: SplineKernelSpec):
        self.edges = edges
        self.n_nodes = n_nodes
        self.spec = spec
        self.idx, self.val = basis(pseudo, spec)
        self.src = np.ascontiguousarray(edges[:, 0] if edges.size else
                                        np.zeros(0, dtype=np.int64))
        self.dst = np.ascontiguousarray(edges[:, 1] if edges.size else
                                        np.zeros(0, dtype=np.int64))
        deg = np.bincount(self.dst, minlength=n_nodes).astype(np.float64)
        self.inv_deg = 1.0 / np.maximum(deg, 1.0)
        self._groups = None

    @property
    def groups(self):
        """Edge-pair table sorted by flat weight index (numpy fallback)."""
        if self._groups is None:
            e8 = self.idx.size
            pair_edge = np.repeat(np.arange(self.idx.shape[0]), 8)
            order = np.argsort(self.idx.ravel(), kind="stable")
            pe = pair_edge[order]
            pv = self.val.ravel()[order]
            sorted_idx = self.idx.ravel()[order]
            gids, starts = np.unique(sorted_idx, return_index=True)
            slices = list(zip(starts, np.append(starts[1:], e8)))
            self._groups = (pe, pv, gids, slices)
        return self._groups


class SplineConvLayer:
    def __init__(self, in_channels: int, out_channels: int, name: str,
                 spec: SplineKernelSpec, rng: np.random.Generator):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.spec = spec
        nw = spec.n_weights
        active = 2**spec.dims / nw
        a = np.sqrt(6.0 / ((1 + active * nw) * in_channels + out_channels))
        self.weight = Parameter(
            rng.uniform(-a, a, size=(nw, in_channels, out_channels)),
            f"{name}.weight")
        a_root = np.sqrt(6.0 / (2 * in_channels + out_channels))
        self.root_weight = Parameter(
            rng.uniform(-a_root, a_root, size=(in_channels, out_channels)),
            f"{name}.root_weight")
        self.bias = Parameter(np.zeros(out_channels), f"{name}.bias")

    def parameters(self):
        return [self.weight, self.root_weight, self.bias]

    def __call__(self, x: Tensor, cache: BasisCache) -> Tensor:
        return spline_conv(x, self, cache)


# -- jitted message kernels ------------------------------------------------


@njit(cache=True)
def _msg_forward(f, w, src, dst, idx, val, inv_deg, n_nodes):
    n_edges, c_in = src.shape[0], f.shape[1]
    c_out = w.shape[2]
    out = np.zeros((n_nodes, c_out))
    for e in range(n_edges):
        s, d = src[e], dst[e]
        for a in range(8):
            p, v = idx[e, a], val[e, a]
            for ci in range(c_in):
                fv = v * f[s, ci]
                for co in range(c_out):
                    out[d, co] += fv * w[p, ci, co]
    for i in range(n_nodes):
        for co in range(c_out):
            out[i, co] *= inv_deg[i]
    return out


@njit(cache=True)
def _msg_backward(g, f, w, src, dst, idx, val, inv_deg):
    n_edges, c_in = src.shape[0], f.shape[1]
    c_out = w.shape[2]
    dw = np.zeros_like(w)
    df = np.zeros_like(f)
    gd = np.empty(c_out)
    for e in range(n_edges):
        s, d = src[e], dst[e]
        for co in range(c_out):
            gd[co] = g[d, co] * inv_deg[d]
        for a in range(8):
            p, v = idx[e, a], val[e, a]
            for ci in range(c_in):
                fv = v * f[s, ci]
                acc = 0.0
                for co in range(c_out):
                    dw[p, ci, co] += fv * gd[co]
                    acc += w[p, ci, co] * gd[co]
                df[s, ci] += v * acc
    return dw, df


def _msg_forward_np(f, w, cache, c_out):
    e = cache.src.shape[0]
    pe, pv, gids, slices = cache.groups
    f_src = f[cache.src]
    msg = np.zeros((e, c_out))
    for p, (lo, hi) in zip(gids, slices):
        rows = pe[lo:hi]
        msg[rows] += (pv[lo:hi, None] * f_src[rows]) @ w[p]
    agg = np.empty((cache.n_nodes, c_out))
    for c in range(c_out):
        agg[:, c] = np.bincount(cache.dst, weights=msg[:, c],
                                minlength=cache.n_nodes)
    return agg * cache.inv_deg[:, None]


def _msg_backward_np(g, f, w, cache):
    pe, pv, gids, slices = cache.groups
    f_src = f[cache.src]
    dmsg = g[cache.dst] * cache.inv_deg[cache.dst, None]
    dw = np.zeros_like(w)
    df_src = np.zeros_like(f_src)
    for p, (lo, hi) in zip(gids, slices):
        rows = pe[lo:hi]
        z = pv[lo:hi, None] * f_src[rows]
        d = dmsg[rows]
        dw[p] += z.T @ d
        df_src[rows] += pv[lo:hi, None] * (d @ w[p].T)
    df = np.zeros_like(f)
    for c in range(f.shape[1]):
        df[:, c] = np.bincount(cache.src, weights=df_src[:, c],
                               minlength=f.shape[0])
    return dw, df


def spline_conv(x: Tensor, layer: SplineConvLayer, cache: BasisCache) -> Tensor:
    """Forward pass with a hand-written reverse-mode backward.

    out_i = mean over incoming edges (j->i) of
                sum_p basis_p(u_ji) * f_j @ W[p]
            + f_i @ W_root + bias
    """
    f = x.data
    if f.shape[1] != layer.in_channels:
        raise ShapeMismatch(
            f"expected {layer.in_channels} input channels, got {f.shape[1]}")
    w, wr, b = layer.weight, layer.root_weight, layer.bias
    if _HAVE_NUMBA:
        agg = _msg_forward(f, w.data, cache.src, cache.dst, cache.idx,
                           cache.val, cache.inv_deg, cache.n_nodes)
    else:
        agg = _msg_forward_np(f, w.data, cache, layer.out_channels)
    out = Tensor(agg + f @ wr.data + b.data, _parents=(x, w, wr, b))

    def bw(g):
        if b.requires_grad:
            b._accum(g.sum(axis=0))
        if wr.requires_grad:
            wr._accum(f.T @ g)
        if w.requires_grad or x.requires_grad:
            if _HAVE_NUMBA:
                dw, df = _msg_backward(g, f, w.data, cache.src, cache.dst,
                                       cache.idx, cache.val, cache.inv_deg)
            else:
                dw, df = _msg_backward_np(g, f, w.data, cache)
            if w.requires_grad:
                w._accum(dw)
            if x.requires_grad:
                x._accum(df + g @ wr.data.T)

    out._backward = bw
    return out

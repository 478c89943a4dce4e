"""The ECAP prediction network, the FCN baseline, and checkpoint I/O.

The network is an input spline-conv transition, a stack of dense blocks
(each layer consumes the concatenation of the block input and all prior
in-block outputs), a node-wise linear transition closing each block, and
a final spline-conv head with no activation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNorm, Parameter, Tensor
from .errors import ConfigError, LengthMismatch, ShapeMismatch
from .graph import FEATURE_CHANNELS, FeatureGraph, GraphBatch
from .spline import BasisCache, SplineConvLayer, SplineKernelSpec

CKPT_SCHEMA = "ckpt-v1"
AGGREGATION = "mean"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 4
    hidden_channels: int = 32
    n_hidden_layers: int = 20
    dense_block_depth: int = 4
    dropout: float = 0.1
    kernel_size: int = 5
    spline_degree: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.n_hidden_layers % self.dense_block_depth != 0:
            raise ConfigError("n_hidden_layers must be divisible by "
                              "dense_block_depth")

    @property
    def n_blocks(self) -> int:
        return self.n_hidden_layers // self.dense_block_depth


class Linear:
    """Node-wise affine map."""

    def __init__(self, in_channels, out_channels, name, rng):
        a = np.sqrt(6.0 / (in_channels + out_channels))
        self.weight = Parameter(rng.uniform(-a, a, (in_channels, out_channels)),
                                f"{name}.weight")
        self.bias = Parameter(np.zeros(out_channels), f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.weight), self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class EcapNet:
    """Spline-convolution network predicting one scalar per mesh vertex."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.dropout_rng = np.random.default_rng(seed + 1)
        c = config
        spec = SplineKernelSpec(degree=c.spline_degree,
                                kernel_size=c.kernel_size)
        self.spec = spec
        h, d = c.hidden_channels, c.dense_block_depth
        self.in_conv = SplineConvLayer(c.in_channels, h, "in_conv", spec, rng)
        self.in_bn = BatchNorm(h, "in_bn")
        self.blocks = []
        for bi in range(c.n_blocks):
            convs, bns = [], []
            for li in range(d):
                convs.append(SplineConvLayer(h * (li + 1), h,
                                             f"block{bi}.conv{li}", spec, rng))
                bns.append(BatchNorm(h, f"block{bi}.bn{li}"))
            transition = Linear(h * (d + 1), h, f"block{bi}.transition", rng)
            self.blocks.append((convs, bns, transition))
        self.out_conv = SplineConvLayer(h, c.out_channels, "out_conv", spec, rng)

    # deterministic enumeration order: used for checkpoints and the optimizer
    def parameters(self):
        params = list(self.in_conv.parameters()) + self.in_bn.parameters()
        for convs, bns, transition in self.blocks:
            for conv, bn in zip(convs, bns):
                params += conv.parameters() + bn.parameters()
            params += transition.parameters()
        params += self.out_conv.parameters()
        return params

    def batch_norms(self):
        bns = [self.in_bn]
        for _, block_bns, _ in self.blocks:
            bns += block_bns
        return bns

    def forward(self, graph: FeatureGraph | GraphBatch, training: bool = False,
                cache: BasisCache | None = None) -> Tensor:
        if graph.node_features.shape[1] != self.config.in_channels:
            raise ShapeMismatch(
                f"expected {self.config.in_channels} feature channels")
        if cache is None:
            cache = BasisCache(graph.edges, graph.pseudo_coords,
                               graph.n_nodes, self.spec)
        p = self.config.dropout
        rng = self.dropout_rng

        def act(bn, t):
            t = bn(t, training)
            t = ad.elu(t)
            return ad.dropout(t, p, training, rng)

        x = act(self.in_bn, self.in_conv(Tensor(graph.node_features), cache))
        for convs, bns, transition in self.blocks:
            grown = [x]
            for conv, bn in zip(convs, bns):
                inp = grown[0] if len(grown) == 1 else ad.concat(grown, axis=1)
                grown.append(act(bn, conv(inp, cache)))
            x = transition(ad.concat(grown, axis=1))
        return self.out_conv(x, cache)

    def predict(self, graph) -> np.ndarray:
        return self.forward(graph, training=False).data


def count_parameters(model) -> int:
    return int(sum(p.data.size for p in model.parameters()))


class FcnBaseline:
    """MLP on flattened template coordinates; requires mesh correspondence."""

    def __init__(self, n_template: int, hidden_widths=(128,), seed: int = 0):
        self.n_template = n_template
        self.hidden_widths = tuple(hidden_widths)
        rng = np.random.default_rng(seed)
        widths = [3 * n_template, *hidden_widths, n_template]
        self.layers = [Linear(a, b, f"fc{i}", rng)
                       for i, (a, b) in enumerate(zip(widths, widths[1:]))]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, coords: Tensor) -> Tensor:
        if coords.data.shape[-1] != 3 * self.n_template:
            raise LengthMismatch(
                f"expected input length {3 * self.n_template}")
        x = coords
        for layer in self.layers[:-1]:
            x = ad.elu(layer(x))
        return self.layers[-1](x)

    def predict(self, flat_coords: np.ndarray) -> np.ndarray:
        return self.forward(Tensor(np.atleast_2d(flat_coords))).data


# -- checkpoint format -----------------------------------------------------


def _entries(net: EcapNet):
    """(name, array) pairs in serialization order: params then BN stats."""
    out = [(p.name, p.data) for p in net.parameters()]
    for bn in net.batch_norms():
        out.append((bn.gamma.name.rsplit(".", 1)[0] + ".running_mean",
                    bn.running_mean))
        out.append((bn.gamma.name.rsplit(".", 1)[0] + ".running_var",
                    bn.running_var))
    return out


def save_checkpoint(net: EcapNet, path) -> None:
    entries = _entries(net)
    table = {}
    offset = 0
    for name, arr in entries:
        nbytes = arr.size * 8
        table[name] = {"shape": list(arr.shape), "offset": offset,
                       "length": arr.size}
        offset += nbytes
    manifest = {
        "schema": CKPT_SCHEMA,
        "model_config": asdict(net.config),
        "feature_channels": list(FEATURE_CHANNELS),
        "aggregation": AGGREGATION,
        "seed": net.seed,
        "parameters": table,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> EcapNet:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(hlen).decode())
        blob = fh.read()
    if manifest.get("schema") != CKPT_SCHEMA:
        raise ConfigError(f"unsupported checkpoint schema "
                          f"{manifest.get('schema')!r}")
    if manifest["feature_channels"] != list(FEATURE_CHANNELS):
        raise ConfigError("checkpoint feature channel order mismatch")
    config = ModelConfig(**manifest["model_config"])
    net = EcapNet(config, seed=manifest["seed"])
    table = manifest["parameters"]
    arrays = {}
    for name, meta in table.items():
        start = meta["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=meta["length"],
                            offset=start).reshape(meta["shape"])
        arrays[name] = np.array(arr)
    for name, target in _entries(net):
        if name not in arrays:
            raise ConfigError(f"checkpoint missing entry {name!r}")
        if arrays[name].shape != target.shape:
            raise ConfigError(f"checkpoint shape mismatch for {name!r}")
        target[...] = arrays[name]
    return net

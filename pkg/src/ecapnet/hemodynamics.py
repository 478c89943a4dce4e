"""Thrombosis-risk indices from time-resolved wall shear stress.

TAWSS is the time-averaged WSS magnitude, OSI measures directional
oscillation in [0, 0.5], and ECAP = OSI / TAWSS. Integrals are
trapezoidal over a possibly non-uniform time grid; denominators are
floored at a small epsilon instead of propagating NaNs, with the number
of floored vertices reported.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeries, ParseError, ValidationError

WSS_SCHEMA = "wss-v1"


@dataclass(frozen=True)
class WssSeries:
    times: np.ndarray    # (T,) seconds, strictly increasing
    samples: np.ndarray  # (T, N, 3) Pa

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        samples = np.asarray(self.samples, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise DegenerateSeries("need at least 2 time samples")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("times must be strictly increasing")
        if samples.ndim != 3 or samples.shape[0] != times.size \
                or samples.shape[2] != 3:
            raise ValidationError("samples must have shape (T, N, 3)")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("non-finite WSS sample")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "samples", samples)

    @property
    def n_vertices(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class EcapField:
    tawss: np.ndarray  # (N,) Pa
    osi: np.ndarray    # (N,) in [0, 0.5]
    ecap: np.ndarray   # (N,) 1/Pa
    n_floored: int = 0  # vertices where a denominator hit the epsilon floor


def compute_indices(wss: WssSeries, eps: float = 1e-6) -> EcapField:
    t = wss.times
    tau = wss.samples
    t_len = t[-1] - t[0]
    mag = np.linalg.norm(tau, axis=2)                       # (T, N)
    mag_int = np.trapezoid(mag, t, axis=0)                      # (N,)
    vec_int = np.trapezoid(tau, t, axis=0)                      # (N, 3)
    vec_norm = np.linalg.norm(vec_int, axis=1)
    tawss = mag_int / t_len
    floored = (mag_int < eps) | (tawss < eps)
    osi = 0.5 * (1.0 - vec_norm / np.maximum(mag_int, eps))
    osi = np.clip(osi, 0.0, 0.5)
    # stagnant vertices carry no directional signal: report no oscillation
    osi[floored] = 0.0
    ecap = osi / np.maximum(tawss, eps)
    return EcapField(tawss=tawss, osi=osi, ecap=ecap,
                     n_floored=int(np.count_nonzero(floored)))


def threshold_map(field: EcapField, theta: float = 4.0) -> np.ndarray:
    """Boolean high-risk map: strictly ECAP > theta."""
    if theta <= 0:
        raise ValidationError("threshold must be positive")
    return field.ecap > theta


# -- wss-v1 file format ----------------------------------------------------


def save_wss(wss: WssSeries, path) -> None:
    header = {
        "schema": WSS_SCHEMA,
        "n_vertices": int(wss.n_vertices),
        "n_times": int(wss.times.size),
        "times": wss.times.tolist(),
        "units": {"time": "s", "wss": "Pa"},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(wss.samples, dtype="<f8").tobytes())


def load_wss(path) -> WssSeries:
    with open(path, "rb") as fh:
        raw = fh.read(8)
        if len(raw) != 8:
            raise ParseError(f"{path}: truncated header")
        (hlen,) = struct.unpack("<Q", raw)
        header = json.loads(fh.read(hlen).decode())
        blob = fh.read()
    if header.get("schema") != WSS_SCHEMA:
        raise ParseError(f"{path}: unsupported schema {header.get('schema')!r}")
    t, n = header["n_times"], header["n_vertices"]
    expected = t * n * 3 * 8
    if len(blob) != expected:
        raise ParseError(f"{path}: expected {expected} payload bytes, "
                         f"got {len(blob)}")
    samples = np.frombuffer(blob, dtype="<f8").reshape(t, n, 3)
    return WssSeries(times=np.array(header["times"]),
                     samples=np.array(samples))


def save_ecap_csv(field: EcapField, path) -> None:
    with open(path, "w") as fh:
        fh.write("vertex,tawss,osi,ecap\n")
        for i in range(field.ecap.size):
            fh.write(f"{i},{field.tawss[i]:.17g},{field.osi[i]:.17g},"
                     f"{field.ecap[i]:.17g}\n")


def load_ecap_csv(path) -> EcapField:
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header != "vertex,tawss,osi,ecap":
            raise ParseError(f"{path}: unexpected CSV header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(r[1]), float(r[2]), float(r[3])] for r in rows])
    if data.size == 0:
        data = data.reshape(0, 3)
    return EcapField(tawss=data[:, 0], osi=data[:, 1], ecap=data[:, 2])

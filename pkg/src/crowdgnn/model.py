"""Network blocks: spatio-temporal graph convolution + time-extrapolator CNN.

Shapes follow [time, pedestrians, channels]. The ST-GCN mixes node features
per frame with the normalized graph matrix, then convolves across observed
frames. The TXP stack treats the time axis as channels and convolves over
the (pedestrian, feature) plane, mapping T_obs frames to T_pred frames.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, prelu
from .gaussian import constrain
from .graphs import GraphConfig, build_graph_sequence

CHECKPOINT_MAGIC = b"CGNN"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    t_obs: int = 8
    t_pred: int = 12
    in_features: int = 2
    gaussian_channels: int = 5
    stgcn_temporal_kernel: int = 3
    txp_layers: int = 5
    txp_kernel: int = 3
    stgcn_residual: bool = True
    stgcn_bias: bool = True
    txp_residual: bool = True
    prelu_init: float = 0.25

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class ModelParameters:
    """Named parameter tensors with uniform +-1/sqrt(fan_in) initialization."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.tensors: dict[str, Var] = {}
        rng = np.random.default_rng(seed)
        c = cfg.gaussian_channels
        self._add("stgcn.w_spatial", (cfg.in_features, c), rng, cfg.in_features)
        self._add("stgcn.b_spatial", (c,), rng, cfg.in_features)
        self._add(
            "stgcn.w_temporal",
            (cfg.stgcn_temporal_kernel, c, c),
            rng,
            cfg.stgcn_temporal_kernel * c,
        )
        self._add("stgcn.b_temporal", (c,), rng, cfg.stgcn_temporal_kernel * c)
        if cfg.stgcn_residual:
            self._add("stgcn.w_residual", (cfg.in_features, c), rng, cfg.in_features)
            self._add("stgcn.b_residual", (c,), rng, cfg.in_features)
        self.tensors["stgcn.prelu"] = Var(np.array(cfg.prelu_init))

        k = cfg.txp_kernel
        fan1 = cfg.t_obs * k * k
        self._add("txp.0.w", (cfg.t_pred, cfg.t_obs, k, k), rng, fan1)
        self._add("txp.0.b", (cfg.t_pred,), rng, fan1)
        self.tensors["txp.0.prelu"] = Var(np.array(cfg.prelu_init))
        fan = cfg.t_pred * k * k
        for i in range(1, cfg.txp_layers):
            self._add(f"txp.{i}.w", (cfg.t_pred, cfg.t_pred, k, k), rng, fan)
            self._add(f"txp.{i}.b", (cfg.t_pred,), rng, fan)
            self.tensors[f"txp.{i}.prelu"] = Var(np.array(cfg.prelu_init))
        # linear readout keeps the parameter budget near the reference size
        self._add("txp.out.w", (cfg.t_pred, cfg.t_pred, k, k), rng, fan)
        self._add("txp.out.b", (cfg.t_pred,), rng, fan)

    def _add(self, name, shape, rng, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        self.tensors[name] = Var(rng.uniform(-bound, bound, size=shape))

    def __getitem__(self, name: str) -> Var:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def items(self):
        return self.tensors.items()

    def zero_grad(self):
        for v in self.tensors.values():
            v.grad = None

    def summary(self) -> dict:
        per_tensor = {name: int(v.data.size) for name, v in self.tensors.items()}
        return {"per_tensor": per_tensor, "total": sum(per_tensor.values())}

    # ---- checkpoint IO ---------------------------------------------------
    # layout: magic, u32 header length, JSON header (format version, config,
    # tensor table with offsets), then little-endian float64 payload

    def save(self, path, extra_config: dict | None = None) -> None:
        table = []
        offset = 0
        payload = bytearray()
        for name, v in self.tensors.items():
            table.append({"name": name, "shape": list(v.data.shape), "offset": offset})
            raw = np.ascontiguousarray(v.data, dtype="<f8").tobytes()
            payload.extend(raw)
            offset += len(raw)
        header = {
            "format_version": CHECKPOINT_VERSION,
            "model_config": self.cfg.to_dict(),
            "extra_config": extra_config or {},
            "tensors": table,
        }
        hbytes = json.dumps(header).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(hbytes)))
            fh.write(hbytes)
            fh.write(bytes(payload))

    @classmethod
    def load(cls, path) -> tuple["ModelParameters", dict]:
        with open(path, "rb") as fh:
            if fh.read(4) != CHECKPOINT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            if header["format_version"] != CHECKPOINT_VERSION:
                raise ValueError(
                    f"unsupported checkpoint version {header['format_version']}"
                )
            payload = fh.read()
        cfg = ModelConfig(**header["model_config"])
        params = cls.__new__(cls)
        params.cfg = cfg
        params.tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(
                payload, dtype="<f8", count=count, offset=entry["offset"]
            ).reshape(shape)
            params.tensors[entry["name"]] = Var(arr.copy())
        return params, header["extra_config"]


def _temporal_conv(x: Var, w: Var, b: Var) -> Var:
    """1D conv over the leading time axis, symmetric zero padding.

    x: [T, N, C], w: [K, C, C], b: [C]; stride 1, same output length.
    """
    k = w.shape[0]
    pad = k // 2
    t = x.shape[0]
    xp = x.pad(((pad, pad), (0, 0), (0, 0)))
    out = None
    for j in range(k):
        term = xp[j : j + t] @ w[j]
        out = term if out is None else out + term
    return out + b


def _plane_conv(x: Var, w: Var, b: Var) -> Var:
    """2D conv over the trailing (N, F) plane with time-as-channels.

    x: [C_in, N, F], w: [C_out, C_in, k, k], b: [C_out]; zero padding k//2.
    """
    c_out, c_in, k, _ = w.shape
    pad = k // 2
    n, f = x.shape[1], x.shape[2]
    xp = x.pad(((0, 0), (pad, pad), (pad, pad)))
    out = None
    for dn in range(k):
        for df in range(k):
            patch = xp[:, dn : dn + n, df : df + f].reshape(c_in, n * f)
            term = w[:, :, dn, df] @ patch
            out = term if out is None else out + term
    return (out + b.reshape(c_out, 1)).reshape(c_out, n, f)


def st_gcn_forward(v: Var, normalized: np.ndarray, params: ModelParameters) -> Var:
    """v: [T_obs, N, C_in], normalized: [T_obs, N, N] -> [T_obs, N, C]."""
    if v.shape[0] != normalized.shape[0] or v.shape[1] != normalized.shape[1]:
        raise ValueError(
            f"shape mismatch: features {v.shape} vs graphs {normalized.shape}"
        )
    cfg = params.cfg
    x = v @ params["stgcn.w_spatial"]
    if cfg.stgcn_bias:
        x = x + params["stgcn.b_spatial"]
    x = Var(normalized) @ x
    x = prelu(x, params["stgcn.prelu"])
    x = _temporal_conv(x, params["stgcn.w_temporal"], params["stgcn.b_temporal"])
    if cfg.stgcn_residual:
        res = v @ params["stgcn.w_residual"] + params["stgcn.b_residual"]
        x = x + res
    return x


def txp_forward(h: Var, params: ModelParameters) -> Var:
    """h: [T_obs, N, C] -> [T_pred, N, C], time axis treated as channels."""
    cfg = params.cfg
    if h.shape[0] != cfg.t_obs:
        raise ValueError(f"expected {cfg.t_obs} observed frames, got {h.shape[0]}")
    x = prelu(_plane_conv(h, params["txp.0.w"], params["txp.0.b"]), params["txp.0.prelu"])
    for i in range(1, cfg.txp_layers):
        y = prelu(
            _plane_conv(x, params[f"txp.{i}.w"], params[f"txp.{i}.b"]),
            params[f"txp.{i}.prelu"],
        )
        x = y + x if cfg.txp_residual else y
    return _plane_conv(x, params["txp.out.w"], params["txp.out.b"])


def forward_raw(window, graph_cfg: GraphConfig, params: ModelParameters) -> Var:
    """Window -> raw Gaussian channels [T_pred, N, 5]."""
    seq = build_graph_sequence(window, graph_cfg)
    v = Var(window.displacements[:, : window.t_obs].transpose(1, 0, 2))
    h = st_gcn_forward(v, seq.normalized, params)
    return txp_forward(h, params)


def forward_gaussians(window, graph_cfg: GraphConfig, params: ModelParameters):
    """Window -> constrained (mu, sigma, rho) Vars over [T_pred, N, ...]."""
    return constrain(forward_raw(window, graph_cfg, params))

"""Two-stream shared-weight convolutional regressor (the learned metric).

One stream is a VGG16-shaped stack: five blocks of 3x3 convolutions
(2-2-3-3-3 layers) with ReLU and 2x2 max pooling, then three fully connected
layers ending in a sigmoid. It maps a two-channel (ESM, GSM) image to a
perceptual-similarity score in (0, 1). Both streams of the pair network
reference the same parameter set, so the pair difference is exactly
antisymmetric. Everything is plain numpy with hand-written backprop.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidConfig, MalformedFile
from ..maps import minmax_normalize, resize_bilinear

BASE_CHANNELS = (64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512)
BLOCK_SIZES = (2, 2, 3, 3, 3)
IN_CHANNELS = 2
CHECKPOINT_MAGIC = b"CPJ1"


@dataclass(frozen=True)
class CpjConfig:
    input_res: int = 128
    width_multiplier: float = 1.0
    fc_dims: tuple[int, int, int] = (4096, 4096, 1)
    seed: int = 0
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 32
    max_iterations: int = 10_000
    lr_drop_factor: float = 0.1
    plateau_patience: int = 500

    def __post_init__(self):
        if self.input_res < 32 or self.input_res % 32 != 0:
            raise InvalidConfig(f"input_res must be a positive multiple of 32, got {self.input_res}")
        if not 0.0 < self.width_multiplier <= 1.0:
            raise InvalidConfig(f"width_multiplier must be in (0,1], got {self.width_multiplier}")
        if len(self.fc_dims) != 3 or self.fc_dims[-1] != 1 or min(self.fc_dims) < 1:
            raise InvalidConfig(f"fc_dims must be three positive sizes ending in 1, got {self.fc_dims}")
        if self.batch_size < 1 or self.max_iterations < 0:
            raise InvalidConfig("batch_size must be >= 1 and max_iterations >= 0")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise InvalidConfig("bad optimizer settings")
        object.__setattr__(self, "fc_dims", tuple(int(d) for d in self.fc_dims))

    @property
    def conv_channels(self) -> tuple[int, ...]:
        return tuple(max(1, round(c * self.width_multiplier)) for c in BASE_CHANNELS)

    @property
    def flat_dim(self) -> int:
        side = self.input_res // 32
        return side * side * self.conv_channels[-1]


def desk_config(**overrides) -> CpjConfig:
    """Default desk-scale configuration (trains in minutes on one core)."""
    base = dict(input_res=64, width_multiplier=0.125, fc_dims=(256, 256, 1))
    base.update(overrides)
    return CpjConfig(**base)


@dataclass
class CpjNetwork:
    """Parameters of one stream; the pair network clones nothing, it shares."""

    config: CpjConfig
    conv_w: list[np.ndarray]
    conv_b: list[np.ndarray]
    fc_w: list[np.ndarray]
    fc_b: list[np.ndarray]

    @property
    def dtype(self) -> np.dtype:
        return self.conv_w[0].dtype

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """All parameter tensors in the fixed checkpoint order."""
        out = []
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            out.append((f"conv{i}_w", w))
            out.append((f"conv{i}_b", b))
        for i, (w, b) in enumerate(zip(self.fc_w, self.fc_b)):
            out.append((f"fc{i}_w", w))
            out.append((f"fc{i}_b", b))
        return out

    def copy(self) -> "CpjNetwork":
        return CpjNetwork(
            self.config,
            [w.copy() for w in self.conv_w],
            [b.copy() for b in self.conv_b],
            [w.copy() for w in self.fc_w],
            [b.copy() for b in self.fc_b],
        )


def init_network(config: CpjConfig, dtype=np.float32) -> CpjNetwork:
    """Seeded Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    conv_w, conv_b = [], []
    c_in = IN_CHANNELS
    for c_out in config.conv_channels:
        limit = np.sqrt(6.0 / (c_in * 9 + c_out * 9))
        conv_w.append(rng.uniform(-limit, limit, (c_out, c_in, 3, 3)).astype(dtype))
        conv_b.append(np.zeros(c_out, dtype=dtype))
        c_in = c_out
    fc_w, fc_b = [], []
    d_in = config.flat_dim
    for d_out in config.fc_dims:
        limit = np.sqrt(6.0 / (d_in + d_out))
        fc_w.append(rng.uniform(-limit, limit, (d_in, d_out)).astype(dtype))
        fc_b.append(np.zeros(d_out, dtype=dtype))
        d_in = d_out
    return CpjNetwork(config, conv_w, conv_b, fc_w, fc_b)


# ---------------------------------------------------------------------------
# Forward / backward primitives.
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N*H*W, C*9) patch matrix for 3x3 same-padding conv."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (N, C, H, W, 3, 3)
    return cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)


def _conv_forward(x, w, b):
    n, _, h, wd = x.shape
    c_out = w.shape[0]
    cols = _im2col(x)
    out = cols @ w.reshape(c_out, -1).T + b
    return out.reshape(n, h, wd, c_out).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, w, x_shape):
    n, c_in, h, wd = x_shape
    c_out = w.shape[0]
    dflat = dout.transpose(0, 2, 3, 1).reshape(n * h * wd, c_out)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = _im2col(dout)  # (N*H*W, Cout*9)
    wback = np.flip(w, (2, 3)).transpose(0, 2, 3, 1).reshape(c_out * 9, c_in)
    dx = (dcols @ wback).reshape(n, h, wd, c_in).transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)  # first max wins: deterministic tie-break
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, x_shape):
    n, c, h, w = x_shape
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_batch(net: CpjNetwork, x: np.ndarray, keep_cache: bool = True):
    """Scores for a batch of (N, 2, R, R) inputs, plus the backprop cache.

    The cache also records every ReLU mask and pooling argmax so callers can
    tell whether two nearby evaluations stayed on the same smooth piece.
    """
    x = np.ascontiguousarray(x, dtype=net.dtype)
    cache = {"x_shapes": [], "cols": [], "relu": [], "pool_idx": [], "pool_shapes": [], "fc_in": []}
    layer = 0
    a = x
    for block in BLOCK_SIZES:
        for _ in range(block):
            z, cols = _conv_forward(a, net.conv_w[layer], net.conv_b[layer])
            mask = z > 0
            if keep_cache:
                cache["x_shapes"].append(a.shape)
                cache["cols"].append(cols)
                cache["relu"].append(mask)
            a = z * mask
            layer += 1
        if keep_cache:
            cache["pool_shapes"].append(a.shape)
        a, idx = _pool_forward(a)
        if keep_cache:
            cache["pool_idx"].append(idx)
    a = a.reshape(a.shape[0], -1)
    for i in range(len(net.fc_w)):
        if keep_cache:
            cache["fc_in"].append(a)
        z = a @ net.fc_w[i] + net.fc_b[i]
        if i < len(net.fc_w) - 1:
            mask = z > 0
            if keep_cache:
                cache["relu"].append(mask)
            a = z * mask
        else:
            s = _sigmoid(z[:, 0].astype(np.float64))
    if keep_cache:
        cache["scores"] = s
    return s, cache


def backward_batch(net: CpjNetwork, cache: dict, dscore: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(dscore * score) w.r.t. every parameter."""
    s = cache["scores"]
    grads: dict[str, np.ndarray] = {}
    dz = (dscore * s * (1.0 - s)).astype(net.dtype)[:, None]  # through the sigmoid

    n_fc = len(net.fc_w)
    relu_caches = cache["relu"]
    for i in range(n_fc - 1, -1, -1):
        a_in = cache["fc_in"][i]
        grads[f"fc{i}_w"] = a_in.T @ dz
        grads[f"fc{i}_b"] = dz.sum(axis=0)
        da = dz @ net.fc_w[i].T
        if i > 0:
            dz = da * relu_caches[len(net.conv_w) + i - 1]
    layer = len(net.conv_w) - 1
    shape = cache["pool_shapes"][-1]
    da = da.reshape(shape[0], shape[1], shape[2] // 2, shape[3] // 2)
    for b in range(len(BLOCK_SIZES) - 1, -1, -1):
        da = _pool_backward(da, cache["pool_idx"][b], cache["pool_shapes"][b])
        for _ in range(BLOCK_SIZES[b]):
            dz_conv = da * relu_caches[layer]
            da, dw, db = _conv_backward(dz_conv, cache["cols"][layer], net.conv_w[layer], cache["x_shapes"][layer])
            grads[f"conv{layer}_w"] = dw
            grads[f"conv{layer}_b"] = db
            layer -= 1
    return grads


def activation_signature(cache: dict) -> list[np.ndarray]:
    """The piecewise-linearity pattern of one forward pass (ReLU + pool choices)."""
    return [m for m in cache["relu"]] + [i for i in cache["pool_idx"]]


def same_signature(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# Scoring API.
# ---------------------------------------------------------------------------


def stack_input(esm: np.ndarray, gsm: np.ndarray, res: int) -> np.ndarray:
    """(2, res, res) network input: each map resized, then min-max normalized."""
    e = minmax_normalize(resize_bilinear(esm, res, res))
    g = minmax_normalize(resize_bilinear(gsm, res, res))
    return np.stack([e, g])


def score(net: CpjNetwork, esm: np.ndarray, gsm: np.ndarray) -> float:
    """Perceptual-similarity score of one (ESM, GSM) pair, in (0, 1)."""
    x = stack_input(esm, gsm, net.config.input_res)[None]
    s, _ = forward_batch(net, x, keep_cache=False)
    return float(s[0])


def score_many(net: CpjNetwork, pairs, chunk: int = 64) -> np.ndarray:
    """Scores for an iterable of (esm, gsm) pairs, batched for speed."""
    pairs = list(pairs)
    out = np.empty(len(pairs))
    res = net.config.input_res
    for start in range(0, len(pairs), chunk):
        block = pairs[start : start + chunk]
        x = np.stack([stack_input(e, g, res) for e, g in block])
        s, _ = forward_batch(net, x, keep_cache=False)
        out[start : start + len(block)] = s
    return out


def forward_pair(net: CpjNetwork, a: np.ndarray, b: np.ndarray, g: np.ndarray) -> float:
    """Stream difference score(a, g) - score(b, g), in (-1, 1)."""
    return score(net, a, g) - score(net, b, g)


# ---------------------------------------------------------------------------
# Checkpoints: magic + length-prefixed config JSON + float32 parameter blocks.
# ---------------------------------------------------------------------------


def save_checkpoint(net: CpjNetwork, path) -> None:
    cfg = json.dumps(asdict(net.config), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(cfg)))
        f.write(cfg)
        for _, p in net.parameters():
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path) -> CpjNetwork:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise MalformedFile(f"{path}: bad checkpoint magic {data[:4]!r}")
    (cfg_len,) = struct.unpack("<I", data[4:8])
    try:
        cfg_json = json.loads(data[8 : 8 + cfg_len].decode("utf-8"))
        cfg_json["fc_dims"] = tuple(cfg_json["fc_dims"])
        config = CpjConfig(**cfg_json)
    except (ValueError, KeyError, TypeError) as e:
        raise MalformedFile(f"{path}: bad checkpoint config") from e
    net = init_network(config, dtype=np.float32)
    pos = 8 + cfg_len
    for _, p in net.parameters():
        nbytes = p.size * 4
        block = data[pos : pos + nbytes]
        if len(block) != nbytes:
            raise MalformedFile(f"{path}: truncated parameter block")
        p[...] = np.frombuffer(block, dtype="<f4").reshape(p.shape)
        pos += nbytes
    if pos != len(data):
        raise MalformedFile(f"{path}: {len(data) - pos} trailing bytes")
    return net

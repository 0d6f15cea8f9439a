"""Convolution primitives, the CNN baseline encoder, and the heatmap decoder.

The CNN encoder is the deliberately plain stand-in used by the
reconstruction ablation: four stride-2 convolutions over channel-stacked
joint heatmaps followed by one affine map to an embedding matched in total
size to the grid encoder's concatenated per-joint features.  The decoder
maps an embedding back to heatmaps through an affine layer and two
upsample+convolution stages; both encoder variants share it so the
comparison isolates the embedding.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import Rng
from .tensor import Tensor, ShapeError, matmul, register, relu, reshape, transpose
from .tensor import _checked  # same finiteness policy as built-in primitives


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution (cross-correlation): (B,C,H,W) * (O,C,k,k) -> (B,O,OH,OW)."""
    bsz, c, h, wd = x.shape
    o, cw, k, k2 = w.shape
    if cw != c or k != k2:
        raise ShapeError(f"kernel {w.shape} does not match input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B, C, OH, OW, k, k)
    oh, ow = win.shape[2], win.shape[3]
    out_data = np.einsum("bcijkl,ockl->boij", win, w.data, optimize=True)
    out_data = out_data + b.data[:, None, None]
    out = Tensor(_checked(out_data.astype(x.dtype, copy=False), "conv2d"))

    def backward(g):
        gw = np.einsum("boij,bcijkl->ockl", g, win, optimize=True)
        gb = g.sum(axis=(0, 2, 3))
        gxp = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                patch = np.einsum("boij,oc->bcij", g, w.data[:, :, ki, kj], optimize=True)
                gxp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += patch
        gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
        return (gx.astype(x.dtype, copy=False), gw.astype(w.dtype, copy=False),
                gb.astype(b.dtype, copy=False))

    return register(out, (x, w, b), backward)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsampling; the adjoint sums each 2x2 block."""
    bsz, c, h, w = x.shape
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3))

    def backward(g):
        return (g.reshape(bsz, c, h, 2, w, 2).sum(axis=(3, 5)).astype(x.dtype, copy=False),)

    return register(out, (x,), backward)


def _xavier_conv(rng: Rng, o, c, k, dtype):
    lim = math.sqrt(6.0 / (c * k * k + o * k * k))
    return Tensor(rng.uniform(o * c * k * k, -lim, lim).reshape(o, c, k, k).astype(dtype))


def _xavier_lin(rng: Rng, out_dim, in_dim, dtype):
    lim = math.sqrt(6.0 / (in_dim + out_dim))
    return Tensor(rng.uniform(out_dim * in_dim, -lim, lim).reshape(out_dim, in_dim).astype(dtype))


def init_cnn_encoder_params(n_heatmaps: int, resolution: int, embed_dim: int,
                            base_channels: int, rng: Rng, dtype=np.float32,
                            prefix: str = "cnn") -> dict:
    """Four stride-2 3x3 convolutions then an affine map to ``embed_dim``."""
    if resolution % 16 != 0:
        raise ShapeError(f"CNN encoder needs resolution divisible by 16, got {resolution}")
    chans = [n_heatmaps, base_channels, 2 * base_channels,
             4 * base_channels, 4 * base_channels]
    p = {}
    for i in range(4):
        p[f"{prefix}.w{i}"] = _xavier_conv(rng, chans[i + 1], chans[i], 3, dtype)
        p[f"{prefix}.b{i}"] = Tensor(np.zeros(chans[i + 1], dtype=dtype))
    final = chans[4] * (resolution // 16) ** 2
    p[f"{prefix}.fc.w"] = _xavier_lin(rng, embed_dim, final, dtype)
    p[f"{prefix}.fc.b"] = Tensor(np.zeros(embed_dim, dtype=dtype))
    return p


def cnn_encode(hj: Tensor, params: dict, prefix: str = "cnn") -> Tensor:
    """Channel-stacked joint heatmaps (B, 2N, r, r) -> one shared embedding
    vector (B, embed_dim); per-heatmap correspondence is not preserved."""
    x = hj
    for i in range(4):
        x = relu(conv2d(x, params[f"{prefix}.w{i}"], params[f"{prefix}.b{i}"],
                        stride=2, pad=1))
    b = x.shape[0]
    x = reshape(x, (b, int(np.prod(x.shape[1:]))))
    return matmul(x, transpose(params[f"{prefix}.fc.w"])) + params[f"{prefix}.fc.b"]


def init_decoder_params(embed_dim: int, n_heatmaps: int, resolution: int,
                        rng: Rng, hidden_channels: int = 16, dtype=np.float32,
                        prefix: str = "dec") -> dict:
    if resolution % 4 != 0:
        raise ShapeError(f"decoder needs resolution divisible by 4, got {resolution}")
    base = resolution // 4
    p = {
        f"{prefix}.fc.w": _xavier_lin(rng, hidden_channels * base * base, embed_dim, dtype),
        f"{prefix}.fc.b": Tensor(np.zeros(hidden_channels * base * base, dtype=dtype)),
        f"{prefix}.c0.w": _xavier_conv(rng, hidden_channels, hidden_channels, 3, dtype),
        f"{prefix}.c0.b": Tensor(np.zeros(hidden_channels, dtype=dtype)),
        f"{prefix}.c1.w": _xavier_conv(rng, n_heatmaps, hidden_channels, 3, dtype),
        f"{prefix}.c1.b": Tensor(np.zeros(n_heatmaps, dtype=dtype)),
    }
    return p


def decode_heatmaps(embedding: Tensor, params: dict, n_heatmaps: int,
                    resolution: int, hidden_channels: int = 16,
                    prefix: str = "dec") -> Tensor:
    """Embedding (B, E) -> reconstructed heatmaps (B, 2N, r, r)."""
    fc_w = params[f"{prefix}.fc.w"]
    if embedding.shape[-1] != fc_w.shape[1]:
        raise ShapeError(
            f"embedding extent {embedding.shape[-1]} != decoder input {fc_w.shape[1]}")
    base = resolution // 4
    b = embedding.shape[0]
    x = relu(matmul(embedding, transpose(fc_w)) + params[f"{prefix}.fc.b"])
    x = reshape(x, (b, hidden_channels, base, base))
    x = upsample2x(x)
    x = relu(conv2d(x, params[f"{prefix}.c0.w"], params[f"{prefix}.c0.b"], stride=1, pad=1))
    x = upsample2x(x)
    return conv2d(x, params[f"{prefix}.c1.w"], params[f"{prefix}.c1.b"], stride=1, pad=1)

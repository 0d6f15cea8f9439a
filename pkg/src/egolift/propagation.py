"""Skeletal propagation network.

A limb-heatmap encoder produces per-limb relational features; two stacked
propagation units then recurse over the skeleton tree from the root to the
extremities, so each joint's state is computed from its parent's state, its
own joint feature and the relational feature of the limb joining them.

The propagation unit is an LSTM-variant cell.  Layer 1 adds two extra
forget gates driven by the joint feature: one scales the parent's hidden
state, the other the relational feature, before a standard gate block over
the concatenation [scaled parent hidden, scaled relational, joint feature]
updates the cell against the parent's cell state.  Layer 2's extra gate is
driven by layer 1's hidden state and scales the parent's layer-2 hidden
state; its gate block runs over [scaled parent hidden, layer-1 hidden].
The root (index 0) carries all-zero states and no features.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng
from .skeleton import SkeletonTree
from .tensor import (Tensor, ShapeError, concat, matmul, mul, relu, reshape,
                     sigmoid, tanh, transpose)


def encode_limb_features(hl: Tensor, params: dict, prefix: str = "er") -> Tensor:
    """Limb heatmaps (B, 2*N_L, 2, r, r) -> relational features (B, N_L, 2*feat).

    Each flattened two-channel limb heatmap passes through a shared 3-layer
    MLP (rectifier between layers, linear last); the stereo pair concatenates
    left view first.
    """
    b, n2 = hl.shape[0], hl.shape[1]
    if n2 % 2 != 0:
        raise ShapeError(f"limb heatmap count must be even, got {n2}")
    flat = int(np.prod(hl.shape[2:]))
    if params[f"{prefix}.w0"].shape[1] != flat:
        raise ShapeError(
            f"limb encoder expects input {params[f'{prefix}.w0'].shape[1]}, got {flat}")
    x = reshape(hl, (b, n2, flat))
    x = relu(matmul(x, transpose(params[f"{prefix}.w0"])) + params[f"{prefix}.b0"])
    x = relu(matmul(x, transpose(params[f"{prefix}.w1"])) + params[f"{prefix}.b1"])
    x = matmul(x, transpose(params[f"{prefix}.w2"])) + params[f"{prefix}.b2"]
    feat = x.shape[-1]
    return reshape(x, (b, n2 // 2, 2 * feat))


def _gate(x: Tensor, params: dict, name: str) -> Tensor:
    return matmul(x, transpose(params[name + ".w"])) + params[name + ".b"]


def _ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones(t.shape, dtype=t.dtype))


def pu_layer1_step(h_parent: Tensor, c_parent: Tensor, fj: Tensor, fr: Tensor,
                   params: dict, prefix: str = "pu1",
                   pin_extra_gates: bool = False):
    """One layer-1 propagation-unit step for a batch of one joint.

    All of h_parent, c_parent, fj, fr are (B, S).  ``pin_extra_gates``
    replaces the two extra forget gates' outputs with ones (a debug hook
    that reduces the cell to a standard LSTM step over input [fr, fj]).
    Returns (h, c).
    """
    s = fj.shape[-1]
    for name, t in (("h_parent", h_parent), ("c_parent", c_parent), ("fr", fr)):
        if t.shape[-1] != s:
            raise ShapeError(f"{name} extent {t.shape[-1]} != state size {s}")
    if pin_extra_gates:
        fgate_h = _ones_like(h_parent)
        fgate_r = _ones_like(fr)
    else:
        fgate_h = sigmoid(_gate(fj, params, f"{prefix}.fh"))
        fgate_r = sigmoid(_gate(fj, params, f"{prefix}.fr"))
    h_mod = mul(fgate_h, h_parent)
    r_mod = mul(fgate_r, fr)
    u = concat([h_mod, r_mod, fj], axis=-1)
    f = sigmoid(_gate(u, params, f"{prefix}.f"))
    i = sigmoid(_gate(u, params, f"{prefix}.i"))
    o = sigmoid(_gate(u, params, f"{prefix}.o"))
    c_tilde = tanh(_gate(u, params, f"{prefix}.c"))
    c = mul(f, c_parent) + mul(i, c_tilde)
    h = mul(o, tanh(c))
    return h, c


def pu_layer2_step(h_parent: Tensor, c_parent: Tensor, h1: Tensor,
                   params: dict, prefix: str = "pu2",
                   pin_extra_gates: bool = False):
    """One layer-2 propagation-unit step.

    The extra gate comes from the layer-1 hidden state and scales the
    parent's layer-2 hidden state; the gate block runs over
    [scaled parent hidden, h1] with the parent's layer-2 cell state.
    """
    if pin_extra_gates:
        g = _ones_like(h_parent)
    else:
        g = sigmoid(_gate(h1, params, f"{prefix}.g"))
    h_mod = mul(g, h_parent)
    u = concat([h_mod, h1], axis=-1)
    f = sigmoid(_gate(u, params, f"{prefix}.f"))
    i = sigmoid(_gate(u, params, f"{prefix}.i"))
    o = sigmoid(_gate(u, params, f"{prefix}.o"))
    c_tilde = tanh(_gate(u, params, f"{prefix}.c"))
    c = mul(f, c_parent) + mul(i, c_tilde)
    h = mul(o, tanh(c))
    return h, c


def propagate(tree: SkeletonTree, fj: Tensor, fr: Tensor, params: dict,
              pin_extra_gates: bool = False) -> Tensor:
    """Run both propagation-unit layers over the tree.

    fj is (B, N_J, S) joint features (root row unused), fr is (B, N_L, S)
    relational features indexed by child joint.  Joints are visited in
    ascending index so parents are always ready; the root supplies zero
    states.  Returns the layer-2 hidden state per non-root joint,
    (B, N_L, S).
    """
    b, n, s = fj.shape
    if n != tree.n_joints:
        raise ShapeError(f"joint features for {n} joints, tree has {tree.n_joints}")
    if fr.shape != (b, tree.n_limbs, s):
        raise ShapeError(f"relational features {fr.shape}, expected {(b, tree.n_limbs, s)}")
    zero = Tensor(np.zeros((b, s), dtype=fj.dtype))
    h1 = [zero] * n
    c1 = [zero] * n
    h2 = [zero] * n
    c2 = [zero] * n
    for i in range(1, n):
        p = int(tree.parents[i])
        fj_i = fj[:, i, :]
        fr_i = fr[:, i - 1, :]
        h1[i], c1[i] = pu_layer1_step(h1[p], c1[p], fj_i, fr_i, params,
                                      pin_extra_gates=pin_extra_gates)
        h2[i], c2[i] = pu_layer2_step(h2[p], c2[p], h1[i], params,
                                      pin_extra_gates=pin_extra_gates)
    rows = [reshape(h2[i], (b, 1, s)) for i in range(1, n)]
    return concat(rows, axis=1)


def init_propagation_params(state_dim: int, limb_input_dim: int, er_hidden,
                            feat_dim: int, rng: Rng, dtype=np.float32) -> dict:
    """Gate weights Xavier-uniform, all biases zero (no forget-bias offset),
    matching the zero-weight sigmoid(0)=0.5 baseline exactly at init."""
    import math

    def xavier(out_dim, in_dim):
        lim = math.sqrt(6.0 / (in_dim + out_dim))
        return Tensor(rng.uniform(out_dim * in_dim, -lim, lim)
                      .reshape(out_dim, in_dim).astype(dtype))

    def zeros(dim):
        return Tensor(np.zeros(dim, dtype=dtype))

    if len(er_hidden) != 2:
        raise ShapeError(f"limb encoder needs two hidden sizes, got {er_hidden}")
    p = {}
    dims = [limb_input_dim, *er_hidden, feat_dim]
    for i in range(3):
        p[f"er.w{i}"] = xavier(dims[i + 1], dims[i])
        p[f"er.b{i}"] = zeros(dims[i + 1])
    s = state_dim
    for gate in ("fh", "fr"):
        p[f"pu1.{gate}.w"] = xavier(s, s)
        p[f"pu1.{gate}.b"] = zeros(s)
    for gate in ("f", "i", "o", "c"):
        p[f"pu1.{gate}.w"] = xavier(s, 3 * s)
        p[f"pu1.{gate}.b"] = zeros(s)
    p["pu2.g.w"] = xavier(s, s)
    p["pu2.g.b"] = zeros(s)
    for gate in ("f", "i", "o", "c"):
        p[f"pu2.{gate}.w"] = xavier(s, 2 * s)
        p[f"pu2.{gate}.b"] = zeros(s)
    return p

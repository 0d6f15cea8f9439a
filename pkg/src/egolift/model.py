"""Full pose-lifting model: configuration, parameter init, forward pass,
and parameter (de)serialization.

Two encoders are available: the grid transformer encoder (the default) and
the CNN baseline used by the reconstruction ablation.  The propagation
network is optional; without it the head consumes joint features alone
(the "no propagation" reference model).  Two output heads exist: a shared
per-joint affine map over [propagated, joint] features (the root is pinned
to the rig origin and emits no learned row), and a single global affine
map over all concatenated features that can also produce extra targets
without heatmaps.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .convnet import cnn_encode, init_cnn_encoder_params
from .encoder import GridLayout, encode_heatmaps, init_encoder_params
from .propagation import encode_limb_features, init_propagation_params, propagate
from .rng import Rng
from .skeleton import SkeletonTree
from .tensor import Tensor, ShapeError, concat, matmul, reshape, transpose
from .tensor_io import read_tensor, write_tensor

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    n_joints: int = 15
    heatmap_res: int = 64
    patch_size: int = 16
    embed_dim: int = 1024
    n_heads: int = 8
    n_layers: int = 3
    mlp_dim: int = 4096
    ek_hidden: tuple = (2048, 512)
    feat_dim: int = 128
    er_hidden: tuple = (2048, 512)
    encoder: str = "grid"        # "grid" | "cnn"
    cnn_channels: int = 32
    propagation: bool = True
    head: str = "per-joint"      # "per-joint" | "global"
    n_extra_targets: int = 0
    dtype: str = "f32"

    def __post_init__(self):
        if self.encoder not in ("grid", "cnn"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.head not in ("per-joint", "global"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be f32 or f64, got {self.dtype!r}")
        if self.embed_dim % self.n_heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by "
                             f"{self.n_heads} heads")
        if self.heatmap_res % self.patch_size != 0:
            raise ValueError(f"heatmap_res {self.heatmap_res} not divisible by "
                             f"patch {self.patch_size}")
        if self.n_extra_targets and self.head != "global":
            raise ValueError("extra targets need the global head")

    @property
    def state_dim(self) -> int:
        return 2 * self.feat_dim

    @property
    def n_limbs(self) -> int:
        return self.n_joints - 1

    @property
    def n_outputs(self) -> int:
        return self.n_joints + self.n_extra_targets

    @property
    def np_dtype(self):
        return _DTYPES[self.dtype]

    @property
    def layout(self) -> GridLayout:
        return GridLayout(n_heatmaps=2 * self.n_joints,
                          heatmap_res=self.heatmap_res,
                          patch_size=self.patch_size)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ek_hidden"] = list(self.ek_hidden)
        d["er_hidden"] = list(self.er_hidden)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["ek_hidden"] = tuple(d["ek_hidden"])
        d["er_hidden"] = tuple(d["er_hidden"])
        return ModelConfig(**d)


def full_config(**overrides) -> ModelConfig:
    """Published-scale configuration (64x64 heatmaps, width 1024)."""
    return ModelConfig(**overrides)


def small_config(**overrides) -> ModelConfig:
    """Desk-scale training configuration: 16x16 heatmaps, width 64."""
    kw = dict(heatmap_res=16, patch_size=8, embed_dim=64, n_heads=2, n_layers=1,
              mlp_dim=256, ek_hidden=(128, 64), feat_dim=32, er_hidden=(128, 64),
              cnn_channels=16)
    kw.update(overrides)
    return ModelConfig(**kw)


def tiny_config(**overrides) -> ModelConfig:
    """Oracle/gradient-check scale: 4 joints, state size 8, one layer."""
    kw = dict(n_joints=4, heatmap_res=16, patch_size=8, embed_dim=64, n_heads=2,
              n_layers=1, mlp_dim=256, ek_hidden=(32, 16), feat_dim=4,
              er_hidden=(32, 16), cnn_channels=4, dtype="f64")
    kw.update(overrides)
    return ModelConfig(**kw)


def _head_input_dim(cfg: ModelConfig) -> int:
    s = cfg.state_dim
    if cfg.head == "per-joint":
        return 2 * s if cfg.propagation else s
    total = cfg.n_joints * s
    if cfg.propagation:
        total += cfg.n_limbs * s
    return total


def init_model_params(cfg: ModelConfig, seed_or_rng) -> dict:
    """All learnable state, keyed by dotted names in fixed creation order."""
    rng = seed_or_rng if isinstance(seed_or_rng, Rng) else Rng(int(seed_or_rng))
    dtype = cfg.np_dtype
    params: dict = {}
    if cfg.encoder == "grid":
        params.update(init_encoder_params(
            cfg.layout, cfg.embed_dim, cfg.n_layers, cfg.mlp_dim, cfg.ek_hidden,
            cfg.feat_dim, rng, dtype=dtype))
    else:
        params.update(init_cnn_encoder_params(
            2 * cfg.n_joints, cfg.heatmap_res, cfg.n_joints * cfg.state_dim,
            cfg.cnn_channels, rng, dtype=dtype))
    if cfg.propagation:
        params.update(init_propagation_params(
            cfg.state_dim, 2 * cfg.heatmap_res ** 2, cfg.er_hidden, cfg.feat_dim,
            rng, dtype=dtype))
    in_dim = _head_input_dim(cfg)
    out_dim = 3 if cfg.head == "per-joint" else 3 * cfg.n_outputs
    lim = math.sqrt(6.0 / (in_dim + out_dim))
    params["head.w"] = Tensor(rng.uniform(out_dim * in_dim, -lim, lim)
                              .reshape(out_dim, in_dim).astype(dtype))
    params["head.b"] = Tensor(np.zeros(out_dim, dtype=dtype))
    return params


def joint_features(hj: Tensor, params: dict, cfg: ModelConfig) -> Tensor:
    """Per-joint features (B, N_J, state_dim) from either encoder."""
    if cfg.encoder == "grid":
        return encode_heatmaps(hj, cfg.layout, params, cfg.n_layers, cfg.n_heads)
    emb = cnn_encode(hj, params)
    return reshape(emb, (hj.shape[0], cfg.n_joints, cfg.state_dim))


def model_forward(params: dict, cfg: ModelConfig, tree: SkeletonTree,
                  hj: Tensor, hl: Tensor | None = None,
                  pin_extra_gates: bool = False) -> Tensor:
    """Heatmaps -> 3D pose (B, n_outputs, 3), centimeters in the rig frame."""
    if tree.n_joints != cfg.n_joints:
        raise ShapeError(f"tree has {tree.n_joints} joints, config {cfg.n_joints}")
    b = hj.shape[0]
    fj = joint_features(hj, params, cfg)
    fp = None
    if cfg.propagation:
        if hl is None:
            raise ShapeError("propagation model needs limb heatmaps")
        fr = encode_limb_features(hl, params)
        fp = propagate(tree, fj, fr, params, pin_extra_gates=pin_extra_gates)
    if cfg.head == "per-joint":
        base = fj[:, 1:, :]
        x = concat([fp, base], axis=-1) if cfg.propagation else base
        y = matmul(x, transpose(params["head.w"])) + params["head.b"]
        root = Tensor(np.zeros((b, 1, 3), dtype=y.dtype))
        return concat([root, y], axis=1)
    parts = [reshape(fj, (b, cfg.n_joints * cfg.state_dim))]
    if cfg.propagation:
        parts.append(reshape(fp, (b, cfg.n_limbs * cfg.state_dim)))
    x = concat(parts, axis=-1) if len(parts) > 1 else parts[0]
    y = matmul(x, transpose(params["head.w"])) + params["head.b"]
    return reshape(y, (b, cfg.n_outputs, 3))


# ---------------------------------------------------------------------------
# parameter serialization (one container file per named tensor)

def save_params(directory, params: dict) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = sorted(params)
    for name in names:
        write_tensor(directory / f"{name}.bin", params[name].data)
    with open(directory / "index.json", "w") as fh:
        json.dump({"tensors": names}, fh, indent=2)
        fh.write("\n")


def load_params(directory) -> dict:
    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.exists():
        raise IOError(f"{directory}: no parameter index found")
    names = json.loads(index_path.read_text())["tensors"]
    return {name: Tensor(read_tensor(directory / f"{name}.bin")) for name in names}

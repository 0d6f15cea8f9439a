"""Grid transformer heatmap encoder.

All stereo joint heatmaps tile one square grid image ("fill in order",
stereo-interleaved: left_0, right_0, left_1, ...).  The grid is split into
patches; each patch is linearly embedded with a learnable projection plus a
learnable positional encoding, encoded by pre-norm transformer layers with
multi-head self-attention, regrouped per heatmap and compressed by a shared
MLP into one feature vector per heatmap.  Stereo features concatenate into
per-joint features.

Cells that hold no heatmap are masked by exclusion: their patches never
enter attention and their outputs are exact zeros, which makes mask
invariance bitwise-testable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .tensor import (Tensor, ShapeError, concat, gelu, layer_norm, matmul,
                     relu, reshape, softmax, take, transpose)


@dataclass(frozen=True)
class GridLayout:
    """Static geometry of the heatmap grid for one configuration."""
    n_heatmaps: int
    heatmap_res: int
    patch_size: int

    def __post_init__(self):
        if self.heatmap_res % self.patch_size != 0:
            raise ShapeError(
                f"heatmap resolution {self.heatmap_res} not divisible by "
                f"patch size {self.patch_size}")

    @property
    def cells_per_side(self) -> int:
        return math.ceil(math.sqrt(self.n_heatmaps))

    @property
    def image_side(self) -> int:
        return self.cells_per_side * self.heatmap_res

    @property
    def patches_per_cell_side(self) -> int:
        return self.heatmap_res // self.patch_size

    @property
    def patches_per_cell(self) -> int:
        return self.patches_per_cell_side ** 2

    @property
    def n_patches(self) -> int:
        return self.cells_per_side ** 2 * self.patches_per_cell

    @property
    def n_used_patches(self) -> int:
        return self.n_heatmaps * self.patches_per_cell

    @property
    def n_masked_cells(self) -> int:
        return self.cells_per_side ** 2 - self.n_heatmaps

    @property
    def used_patch_mask(self) -> np.ndarray:
        """True exactly on patches of assigned cells.  Cells fill in order,
        so used patches are a contiguous prefix of the patch sequence."""
        mask = np.zeros(self.n_patches, dtype=bool)
        mask[:self.n_used_patches] = True
        return mask


def assemble_grid(heatmaps: np.ndarray, patch_size: int):
    """Tile heatmaps (2N, r, r) into one grid image, row-major cell order.

    Returns (image (S, S) ndarray, GridLayout).  Unassigned cells stay zero.
    """
    n, res = heatmaps.shape[0], heatmaps.shape[-1]
    if heatmaps.shape[-2] != res:
        raise ShapeError(f"heatmaps must be square, got {heatmaps.shape}")
    layout = GridLayout(n_heatmaps=n, heatmap_res=res, patch_size=patch_size)
    cps = layout.cells_per_side
    image = np.zeros((layout.image_side, layout.image_side), dtype=heatmaps.dtype)
    for idx in range(n):
        r, c = divmod(idx, cps)
        image[r * res:(r + 1) * res, c * res:(c + 1) * res] = heatmaps[idx]
    return image, layout


def patchify(image: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Split a grid image into ordered patches (n_patches, patch_size**2).

    Order is cell-major (row-major over cells, so patch block j belongs to
    heatmap j for assigned cells), then row-major inside each cell.  Patches
    of unassigned cells are carried too; ``layout.used_patch_mask`` is False
    on them.
    """
    side = layout.image_side
    if image.shape != (side, side):
        raise ShapeError(f"expected image {(side, side)}, got {image.shape}")
    p, res, cps = layout.patch_size, layout.heatmap_res, layout.cells_per_side
    ppcs = layout.patches_per_cell_side
    out = np.empty((layout.n_patches, p * p), dtype=image.dtype)
    k = 0
    for cell in range(cps * cps):
        r, c = divmod(cell, cps)
        cell_img = image[r * res:(r + 1) * res, c * res:(c + 1) * res]
        for pr in range(ppcs):
            for pc in range(ppcs):
                out[k] = cell_img[pr * p:(pr + 1) * p, pc * p:(pc + 1) * p].reshape(-1)
                k += 1
    return out


def unpatchify(patches: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Inverse of ``patchify`` (exact partition, bitwise)."""
    p, res, cps = layout.patch_size, layout.heatmap_res, layout.cells_per_side
    ppcs = layout.patches_per_cell_side
    image = np.zeros((layout.image_side, layout.image_side), dtype=patches.dtype)
    k = 0
    for cell in range(cps * cps):
        r, c = divmod(cell, cps)
        for pr in range(ppcs):
            for pc in range(ppcs):
                image[r * res + pr * p:r * res + (pr + 1) * p,
                      c * res + pc * p:c * res + (pc + 1) * p] = patches[k].reshape(p, p)
                k += 1
    return image


def patches_from_heatmaps(hj: Tensor, layout: GridLayout) -> Tensor:
    """Differentiable fast path to the used patches.

    (B, 2N, r, r) -> (B, n_used_patches, patch**2), identical values and
    order to assembling the grid and patchifying (assigned cells first), but
    skipping the zero-filled masked cells entirely.
    """
    b, n, res, _ = hj.shape
    if n != layout.n_heatmaps or res != layout.heatmap_res:
        raise ShapeError(f"heatmaps {hj.shape} do not match layout {layout}")
    p, ppcs = layout.patch_size, layout.patches_per_cell_side
    x = reshape(hj, (b, n, ppcs, p, ppcs, p))
    x = transpose(x, (0, 1, 2, 4, 3, 5))
    return reshape(x, (b, n * ppcs * ppcs, p * p))


def embed_patches(patches: Tensor, params: dict, prefix: str = "enc") -> Tensor:
    """Project flattened patches and add positional encodings.

    Accepts either all patches (masked included) or the used prefix; the
    positional encodings of the corresponding grid positions are added.
    """
    wz, bz, pos = params[f"{prefix}.wz"], params[f"{prefix}.bz"], params[f"{prefix}.pos"]
    n_patch = patches.shape[-2]
    if patches.shape[-1] != wz.shape[1]:
        raise ShapeError(f"patch size {patches.shape[-1]} != projection input {wz.shape[1]}")
    if n_patch > pos.shape[0]:
        raise ShapeError(f"{n_patch} patches exceed {pos.shape[0]} positional encodings")
    z = matmul(patches, transpose(wz)) + bz
    return z + take(pos, slice(0, n_patch))


def _attention(x: Tensor, params: dict, key: str, n_heads: int) -> Tensor:
    b, n, d = x.shape
    dh = d // n_heads

    def proj(name, bias=True):
        h = matmul(x, transpose(params[f"{key}.w{name}"]))
        if bias:
            h = h + params[f"{key}.b{name}"]
        return transpose(reshape(h, (b, n, n_heads, dh)), (0, 2, 1, 3))

    # no key bias: softmax is invariant to a constant shift of the keys, so a
    # key bias is a provably dead parameter
    q, k, v = proj("q"), proj("k", bias=False), proj("v")
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    att = softmax(scores, axis=-1)
    ctx = transpose(matmul(att, v), (0, 2, 1, 3))
    ctx = reshape(ctx, (b, n, d))
    return matmul(ctx, transpose(params[f"{key}.wo"])) + params[f"{key}.bo"]


def transformer_encode(z: Tensor, mask: np.ndarray | None, params: dict,
                       n_layers: int, n_heads: int, prefix: str = "enc") -> Tensor:
    """Pre-norm transformer encoder over the unmasked patches.

    Masked patches are excluded from the sequence entirely (never keys nor
    queries) and their output rows are exact zeros.  ``mask`` True means
    used; it must be a contiguous prefix (grid fill order guarantees this).
    There is no classification token anywhere.
    """
    b, n, d = z.shape
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n,):
            raise ShapeError(f"mask length {mask.shape} != patch count {n}")
        n_used = int(mask.sum())
        if n_used == 0:
            raise ShapeError("all patches are masked; nothing to encode")
        if not mask[:n_used].all():
            raise ShapeError("used patches must form a contiguous prefix")
    else:
        n_used = n
    x = z if n_used == n else take(z, (slice(None), slice(0, n_used)))
    for i in range(n_layers):
        key = f"{prefix}.l{i}"
        h = layer_norm(x, params[f"{key}.ln1.g"], params[f"{key}.ln1.b"])
        x = x + _attention(h, params, key, n_heads)
        h = layer_norm(x, params[f"{key}.ln2.g"], params[f"{key}.ln2.b"])
        h = matmul(h, transpose(params[f"{key}.w1"])) + params[f"{key}.b1"]
        h = matmul(gelu(h), transpose(params[f"{key}.w2"])) + params[f"{key}.b2"]
        x = x + h
    if n_used < n:
        zeros = Tensor(np.zeros((b, n - n_used, d), dtype=z.dtype))
        x = concat([x, zeros], axis=1)
    return x


def regroup_and_compress(zp: Tensor, layout: GridLayout, params: dict,
                         prefix: str = "enc") -> Tensor:
    """Concatenate each heatmap's patch embeddings and compress them.

    The shared compression MLP (rectifier between layers, linear last) maps
    the concatenated per-heatmap embedding to one feature per heatmap:
    (B, >=n_used, D) -> (B, n_heatmaps, feat).
    """
    b, n, d = zp.shape
    ppc = layout.patches_per_cell
    n_used = layout.n_used_patches
    if n < n_used:
        raise ShapeError(f"got {n} patch embeddings, layout needs {n_used}")
    x = zp if n == n_used else take(zp, (slice(None), slice(0, n_used)))
    x = reshape(x, (b, layout.n_heatmaps, ppc * d))
    x = relu(matmul(x, transpose(params[f"{prefix}.ek.w0"])) + params[f"{prefix}.ek.b0"])
    x = relu(matmul(x, transpose(params[f"{prefix}.ek.w1"])) + params[f"{prefix}.ek.b1"])
    return matmul(x, transpose(params[f"{prefix}.ek.w2"])) + params[f"{prefix}.ek.b2"]


def stereo_concat(k: Tensor) -> Tensor:
    """Pair stereo features per joint, left view first: (B, 2N, f) -> (B, N, 2f)."""
    b, n2, f = k.shape
    if n2 % 2 != 0:
        raise ShapeError(f"stereo features need an even count, got {n2}")
    return reshape(k, (b, n2 // 2, 2 * f))


def encode_heatmaps(hj: Tensor, layout: GridLayout, params: dict,
                    n_layers: int, n_heads: int, prefix: str = "enc") -> Tensor:
    """Full encoder: stereo joint heatmaps (B, 2N, r, r) -> joint features
    (B, N, 2*feat)."""
    patches = patches_from_heatmaps(hj, layout)
    z = embed_patches(patches, params, prefix)
    zp = transformer_encode(z, None, params, n_layers, n_heads, prefix)
    k = regroup_and_compress(zp, layout, params, prefix)
    return stereo_concat(k)


def _xavier(rng: Rng, out_dim: int, in_dim: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(out_dim * in_dim, -limit, limit).reshape(out_dim, in_dim).astype(dtype)


def init_encoder_params(layout: GridLayout, embed_dim: int, n_layers: int,
                        mlp_dim: int, ek_hidden, feat_dim: int, rng: Rng,
                        dtype=np.float32, prefix: str = "enc") -> dict:
    """Learnable encoder state: projection and compression MLPs Xavier-uniform,
    positional encodings normal(0, 0.02), biases and norm offsets zero."""
    if len(ek_hidden) != 2:
        raise ShapeError(f"compression MLP needs two hidden sizes, got {ek_hidden}")
    p = {}
    patch_sq = layout.patch_size ** 2
    # fixed creation order: projection, positions, layers, compression
    p[f"{prefix}.wz"] = Tensor(_xavier(rng, embed_dim, patch_sq, dtype))
    p[f"{prefix}.bz"] = Tensor(np.zeros(embed_dim, dtype=dtype))
    p[f"{prefix}.pos"] = Tensor((rng.normal((layout.n_patches, embed_dim)) * 0.02).astype(dtype))
    for i in range(n_layers):
        key = f"{prefix}.l{i}"
        p[f"{key}.ln1.g"] = Tensor(np.ones(embed_dim, dtype=dtype))
        p[f"{key}.ln1.b"] = Tensor(np.zeros(embed_dim, dtype=dtype))
        for name in ("q", "k", "v", "o"):
            p[f"{key}.w{name}"] = Tensor(_xavier(rng, embed_dim, embed_dim, dtype))
            if name != "k":
                p[f"{key}.b{name}"] = Tensor(np.zeros(embed_dim, dtype=dtype))
        p[f"{key}.ln2.g"] = Tensor(np.ones(embed_dim, dtype=dtype))
        p[f"{key}.ln2.b"] = Tensor(np.zeros(embed_dim, dtype=dtype))
        p[f"{key}.w1"] = Tensor(_xavier(rng, mlp_dim, embed_dim, dtype))
        p[f"{key}.b1"] = Tensor(np.zeros(mlp_dim, dtype=dtype))
        p[f"{key}.w2"] = Tensor(_xavier(rng, embed_dim, mlp_dim, dtype))
        p[f"{key}.b2"] = Tensor(np.zeros(embed_dim, dtype=dtype))
    dims = [layout.patches_per_cell * embed_dim, *ek_hidden, feat_dim]
    for i in range(3):
        p[f"{prefix}.ek.w{i}"] = Tensor(_xavier(rng, dims[i + 1], dims[i], dtype))
        p[f"{prefix}.ek.b{i}"] = Tensor(np.zeros(dims[i + 1], dtype=dtype))
    return p

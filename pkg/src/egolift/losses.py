"""Training losses.

The pose loss is the joints' average Euclidean distance; the limb-cosine
loss is the mean cosine similarity between predicted and ground-truth limb
vectors (child minus parent position, root excluded).  The total is
``w_p * L_p + w_c * L_c`` with defaults w_p = 0.1, w_c = -0.01 — the cosine
weight is negative because higher similarity means a better pose.

The reconstruction loss for the heatmap-decoder ablation is a mean squared
error plus a conditional min-max penalty that only engages while the MSE
exceeds a threshold, steering decoders away from all-zero collapse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .skeleton import SkeletonTree
from .tensor import Tensor, ShapeError, absolute, concat, mul, reduce_mean, reshape, sqrt, sub, tensor


@dataclass(frozen=True)
class LossWeights:
    pose: float = 0.1
    cosine: float = -0.01


@dataclass(frozen=True)
class ReconLossConfig:
    threshold: float = 5.5e-4
    recon_weight: float = 1.0
    minmax_weight: float = 1e-3

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")


def _as_pose(t) -> Tensor:
    t = tensor(t)
    if t.ndim == 2:
        t = reshape(t, (1,) + t.shape)
    if t.ndim != 3 or t.shape[-1] != 3:
        raise ShapeError(f"expected (B, J, 3) poses, got {t.shape}")
    return t


def pose_loss(pred, gt) -> Tensor:
    """Mean over batch and joints of per-joint Euclidean distance."""
    pred, gt = _as_pose(pred), _as_pose(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"pose shapes differ: {pred.shape} vs {gt.shape}")
    diff = sub(pred, gt)
    sq = mul(diff, diff).sum(axis=-1)
    return reduce_mean(sqrt(sq))


def _limb_vectors(pose: Tensor, tree: SkeletonTree) -> Tensor:
    rows = [pose[:, i:i + 1, :] - pose[:, int(tree.parents[i]):int(tree.parents[i]) + 1, :]
            for i in range(1, tree.n_joints)]
    return concat(rows, axis=1)


def cosine_loss(pred, gt, tree: SkeletonTree):
    """Mean cosine similarity of limb vectors over non-root joints.

    Joints whose predicted or ground-truth limb vector has zero length are
    excluded from the mean (the formula would divide by zero there); the
    number of exclusions is reported alongside the loss.  Returns
    (Tensor, excluded_count).
    """
    pred, gt = _as_pose(pred), _as_pose(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"pose shapes differ: {pred.shape} vs {gt.shape}")
    if pred.shape[1] != tree.n_joints:
        raise ShapeError(f"{pred.shape[1]} joints but tree has {tree.n_joints}")
    v_pred = _limb_vectors(pred, tree)
    v_gt = _limb_vectors(gt, tree)
    dot = mul(v_pred, v_gt).sum(axis=-1)
    n_pred = sqrt(mul(v_pred, v_pred).sum(axis=-1))
    n_gt = sqrt(mul(v_gt, v_gt).sum(axis=-1))
    norms = n_pred.data * n_gt.data
    degenerate = norms == 0.0
    excluded = int(degenerate.sum())
    if excluded == 0:
        cos = dot / mul(n_pred, n_gt)
        return reduce_mean(cos), 0
    if degenerate.all():
        return Tensor(np.zeros((), dtype=pred.dtype)), excluded
    keep = np.nonzero(~degenerate.reshape(-1))[0]
    flat_dot = reshape(dot, (-1,))
    flat_norm = reshape(mul(n_pred, n_gt), (-1,))
    cos = flat_dot[keep] / flat_norm[keep]
    return reduce_mean(cos), excluded


def total_loss(pred, gt, tree: SkeletonTree, weights: LossWeights = LossWeights()):
    """Weighted sum ``w_p * pose + w_c * cosine``.

    Returns (loss Tensor, dict of component floats incl. the degenerate-limb
    counter).
    """
    lp = pose_loss(pred, gt)
    lc, excluded = cosine_loss(pred, gt, tree)
    loss = lp * weights.pose + lc * weights.cosine
    parts = {"pose": float(lp.item()), "cosine": float(lc.item()),
             "degenerate_limbs": excluded}
    return loss, parts


def recon_loss(target, recon, cfg: ReconLossConfig = ReconLossConfig()):
    """Heatmap reconstruction loss with conditional min-max penalty.

    ``L_r`` is the MSE over all pixels.  When ``L_r`` exceeds the threshold
    (strictly), per-heatmap |min - min'| and |max - max'| means are added,
    weighted; otherwise the penalty is exactly zero.  Total is
    ``w_r * (L_r + w_m * L_m)``.  Returns (loss Tensor, components dict).
    """
    target, recon = tensor(target), tensor(recon)
    if target.shape != recon.shape:
        raise ShapeError(f"heatmap shapes differ: {target.shape} vs {recon.shape}")
    diff = sub(target, recon)
    l_r = reduce_mean(mul(diff, diff))
    parts = {"mse": float(l_r.item())}
    if parts["mse"] > cfg.threshold:
        flat_t = reshape(target, (-1, int(np.prod(target.shape[-2:]))))
        flat_r = reshape(recon, (-1, int(np.prod(recon.shape[-2:]))))
        l_min = reduce_mean(absolute(flat_t.min(axis=-1) - flat_r.min(axis=-1)))
        l_max = reduce_mean(absolute(flat_t.max(axis=-1) - flat_r.max(axis=-1)))
        l_m = l_min + l_max
        parts["minmax"] = float(l_m.item())
        loss = (l_r + l_m * cfg.minmax_weight) * cfg.recon_weight
    else:
        parts["minmax"] = 0.0
        loss = l_r * cfg.recon_weight
    parts["total"] = float(loss.item())
    return loss, parts

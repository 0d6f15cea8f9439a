"""Evaluation metrics: MPJPE, Procrustes-aligned MPJPE, propagation
potential/effect, and the CSV report format.

MPJPE is the mean per-joint Euclidean position error, computed per sample
and averaged over a set.  PA-MPJPE first aligns the prediction to the
ground truth with a full similarity Procrustes fit (rotation, translation
and uniform scale, reflection-guarded SVD), so it is invariant to any
similarity transform of the prediction.

For a pair of models evaluated on identical samples (NP without
propagation, P with it), the propagation potential of a non-root joint is
the NP child-minus-parent error gap, an upper-bound proxy for what parent
information could contribute; the propagation effect is the child's actual
error reduction from NP to P.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .skeleton import SkeletonTree


def per_joint_errors(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Euclidean error per joint; accepts (J, 3) or (S, J, 3)."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pose shapes differ: {pred.shape} vs {gt.shape}")
    return np.linalg.norm(pred - gt, axis=-1)


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-joint position error in dataset units (cm)."""
    return float(per_joint_errors(pred, gt).mean())


def procrustes_align(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Similarity-align pred to gt: rotation + translation + uniform scale.

    Raises for degenerate inputs (all points coincident), where no
    alignment is defined.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ValueError(f"need matching (J, 3) point sets, got {pred.shape} / {gt.shape}")
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    xc, yc = pred - mu_p, gt - mu_g
    norm_x = float((xc * xc).sum())
    norm_y = float((yc * yc).sum())
    if norm_x == 0.0 or norm_y == 0.0:
        raise ValueError("degenerate point set: all joints coincide, alignment undefined")
    u, d, vt = np.linalg.svd(xc.T @ yc)
    sign = np.sign(np.linalg.det(u @ vt))
    flip = np.ones(3)
    flip[-1] = sign if sign != 0 else 1.0
    rot = (u * flip) @ vt
    scale = float((d * flip).sum()) / norm_x
    return scale * (xc @ rot) + mu_g


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """MPJPE after per-sample similarity Procrustes alignment."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.ndim == 2:
        return mpjpe(procrustes_align(pred, gt), gt)
    if pred.shape != gt.shape:
        raise ValueError(f"pose shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.mean([mpjpe(procrustes_align(p, g), g) for p, g in zip(pred, gt)]))


def propagation_metrics(errors_np: np.ndarray, errors_p: np.ndarray,
                        tree: SkeletonTree):
    """Per-sample, per-non-root-joint potential and effect.

    ``errors_np`` / ``errors_p`` are (S, N_J) per-joint errors from the
    no-propagation and propagation models on identical samples.  Returns
    (pp, pe), each (S, N_J - 1), column i-1 for joint i.
    """
    errors_np = np.atleast_2d(np.asarray(errors_np, dtype=np.float64))
    errors_p = np.atleast_2d(np.asarray(errors_p, dtype=np.float64))
    if errors_np.shape != errors_p.shape:
        raise ValueError(f"error tables differ: {errors_np.shape} vs {errors_p.shape}")
    if errors_np.shape[1] != tree.n_joints:
        raise ValueError(f"{errors_np.shape[1]} joints but tree has {tree.n_joints}")
    parents = tree.parents[1:]
    pp = errors_np[:, 1:] - errors_np[:, parents]
    pe = errors_np[:, 1:] - errors_p[:, 1:]
    return pp, pe


def pp_pe_regression(pp: np.ndarray, pe: np.ndarray):
    """Least-squares fit of effect against potential.

    Returns (slope, intercept, p_value) where the p-value tests the
    zero-slope null hypothesis.
    """
    x, y = np.ravel(pp), np.ravel(pe)
    if x.size != y.size or x.size < 3:
        raise ValueError("regression needs matching samples, at least 3")
    if np.allclose(y, y[0]) and np.allclose(x, x[0]):
        return 0.0, float(y[0]), 1.0
    res = stats.linregress(x, y)
    pvalue = 1.0 if np.isnan(res.pvalue) else float(res.pvalue)
    slope = 0.0 if np.isnan(res.slope) else float(res.slope)
    return slope, float(res.intercept), pvalue


@dataclass
class EvalReport:
    """Per-sample metrics plus the per-joint error table.

    ``joint_errors`` covers the model's reported joints; ``joint_ids`` maps
    its columns back to skeleton joint indices (the root is omitted by the
    per-joint head, which pins it to the rig origin).
    """
    sample_mpjpe: np.ndarray   # (S,)
    sample_pa_mpjpe: np.ndarray  # (S,)
    joint_errors: np.ndarray   # (S, len(joint_ids))
    joint_ids: list

    @property
    def mpjpe(self) -> float:
        return float(self.sample_mpjpe.mean())

    @property
    def pa_mpjpe(self) -> float:
        # NaN rows mark degenerate (coincident) predictions; they carry no
        # defined alignment and are excluded from the aggregate
        return float(np.nanmean(self.sample_pa_mpjpe))

    @property
    def mean_joint_errors(self) -> np.ndarray:
        return self.joint_errors.mean(axis=0)

    def write_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "mpjpe", "pa_mpjpe"]
                            + [f"err_joint_{j}" for j in self.joint_ids])
            for i in range(len(self.sample_mpjpe)):
                writer.writerow([i, repr(float(self.sample_mpjpe[i])),
                                 repr(float(self.sample_pa_mpjpe[i]))]
                                + [repr(float(v)) for v in self.joint_errors[i]])

    @staticmethod
    def read_csv(path) -> "EvalReport":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        joint_ids = [int(name.split("_")[-1]) for name in header[3:]]
        data = np.array([[float(v) for v in row[1:]] for row in body], dtype=np.float64)
        return EvalReport(sample_mpjpe=data[:, 0], sample_pa_mpjpe=data[:, 1],
                          joint_errors=data[:, 2:], joint_ids=joint_ids)

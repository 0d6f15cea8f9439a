"""Training loop, evaluation, and checkpointing.

Training is bitwise deterministic for a fixed seed: the per-epoch shuffle
derives from (seed, epoch), batches are processed as contiguous chunks in
ascending sample order, and chunk gradients are summed in that order.  A
resumed run therefore reproduces an uninterrupted one exactly.  Checkpoints
hold the model parameters, optimizer moments and a manifest with the full
configuration.
"""

from __future__ import annotations

import csv
import json
import math
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .losses import LossWeights, total_loss
from .metrics import EvalReport, pa_mpjpe, per_joint_errors
from .model import ModelConfig, load_params, model_forward, save_params
from .optim import OptState, Schedule, adamw_step, clip_gradients, lr_at
from .rng import Rng
from .skeleton import SkeletonTree
from .tensor import Tape, Tensor
from .tensor_io import read_tensor, write_tensor


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 16
    batch_size: int = 32
    peak_lr: float = 1e-3
    warmup_epochs: float = 1.0
    weight_decay: float = 1e-2
    pose_weight: float = 0.1
    cosine_weight: float = -0.01
    seed: int = 0
    workers: int = 1
    clip_norm: float | None = None
    eval_batch_size: int = 64

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


def _loss_and_grads(params, cfg, tree, hj, hl, gt, weights, workers):
    """Mean batch loss and its gradients.

    The batch splits into ``workers`` contiguous chunks processed in
    ascending order with gradients accumulated in that fixed order, so the
    result is independent of how the chunks would be scheduled.
    """
    n = hj.shape[0]
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1, dtype=int)
    grads: dict = {}
    loss_value = 0.0
    parts_sum = {"pose": 0.0, "cosine": 0.0, "degenerate_limbs": 0}
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a == b:
            continue
        frac = (b - a) / n
        with Tape() as tape:
            pred = model_forward(params, cfg, tree, Tensor(hj[a:b]),
                                 None if hl is None else Tensor(hl[a:b]))
            loss, parts = total_loss(pred, Tensor(gt[a:b]), tree, weights)
        g = tape.backward(loss)
        loss_value += float(loss.item()) * frac
        parts_sum["pose"] += parts["pose"] * frac
        parts_sum["cosine"] += parts["cosine"] * frac
        parts_sum["degenerate_limbs"] += parts["degenerate_limbs"]
        for name, p in params.items():
            contrib = g.wrt(p) * p.dtype.type(frac)
            if name in grads:
                grads[name] += contrib
            else:
                grads[name] = contrib
    return loss_value, parts_sum, grads


def evaluate(params: dict, cfg: ModelConfig, tree: SkeletonTree, ds: Dataset,
             batch_size: int = 64) -> EvalReport:
    """Deterministic evaluation over a dataset.

    With the per-joint head the root is pinned to the rig origin by
    construction, so errors cover the non-root joints; the global head's
    learned rows are all evaluated (extra targets have no ground truth and
    are skipped).
    """
    preds = predict(params, cfg, tree, ds, batch_size)
    if cfg.head == "per-joint":
        joint_ids = list(range(1, tree.n_joints))
    else:
        joint_ids = list(range(tree.n_joints))
    pred_rows = preds[:, joint_ids, :]
    gt_rows = ds.poses[:, joint_ids, :]
    errs = per_joint_errors(pred_rows, gt_rows)
    pa = np.empty(len(ds))
    for i, (p, g) in enumerate(zip(pred_rows, gt_rows)):
        try:
            pa[i] = pa_mpjpe(p, g)
        except ValueError:
            pa[i] = np.nan  # degenerate (coincident) prediction: undefined
    return EvalReport(sample_mpjpe=errs.mean(axis=1), sample_pa_mpjpe=pa,
                      joint_errors=errs, joint_ids=joint_ids)


def predict(params: dict, cfg: ModelConfig, tree: SkeletonTree, ds: Dataset,
            batch_size: int = 64) -> np.ndarray:
    """Forward the whole dataset without recording; (S, n_outputs, 3)."""
    outs = []
    dtype = cfg.np_dtype
    for a in range(0, len(ds), batch_size):
        b = min(a + batch_size, len(ds))
        hj = Tensor(ds.joint_heatmaps[a:b].astype(dtype, copy=False))
        hl = None
        if cfg.propagation:
            hl = Tensor(ds.limb_heatmaps[a:b].astype(dtype, copy=False))
        outs.append(model_forward(params, cfg, tree, hj, hl).data)
    return np.concatenate(outs, axis=0)


# ---------------------------------------------------------------------------
# checkpointing

def save_checkpoint(directory, params: dict, cfg: ModelConfig, tree: SkeletonTree,
                    meta: dict, opt_state: OptState | None = None) -> None:
    directory = Path(directory)
    if directory.exists():
        shutil.rmtree(directory)
    save_params(directory / "weights", params)
    manifest = {
        "model_config": cfg.to_dict(),
        "skeleton": tree.to_dict(),
        "meta": meta,
    }
    if opt_state is not None:
        opt_dir = directory / "opt"
        opt_dir.mkdir(parents=True, exist_ok=True)
        for name in sorted(opt_state.m):
            write_tensor(opt_dir / f"m__{name}.bin", opt_state.m[name])
            write_tensor(opt_dir / f"v__{name}.bin", opt_state.v[name])
        manifest["opt"] = {"step": opt_state.step, "beta1": opt_state.beta1,
                           "beta2": opt_state.beta2, "eps": opt_state.eps,
                           "weight_decay": opt_state.weight_decay}
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory):
    """Returns (params, cfg, tree, meta, opt_state-or-None)."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise IOError(f"{directory}: no checkpoint manifest found")
    manifest = json.loads(manifest_path.read_text())
    params = load_params(directory / "weights")
    cfg = ModelConfig.from_dict(manifest["model_config"])
    tree = SkeletonTree.from_dict(manifest["skeleton"])
    opt_state = None
    if "opt" in manifest:
        o = manifest["opt"]
        opt_state = OptState(
            m={name: np.array(read_tensor(directory / "opt" / f"m__{name}.bin"))
               for name in params},
            v={name: np.array(read_tensor(directory / "opt" / f"v__{name}.bin"))
               for name in params},
            step=o["step"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
            weight_decay=o["weight_decay"])
    return params, cfg, tree, manifest["meta"], opt_state


def _epoch_dirs(out_dir: Path):
    return sorted(d for d in out_dir.glob("epoch_*") if d.is_dir())


@dataclass
class FitResult:
    params: dict
    history: list          # one dict per epoch
    schedule: Schedule
    lr_trace: list         # lr used at every optimizer step


def fit(params: dict, cfg: ModelConfig, tree: SkeletonTree, train_ds: Dataset,
        eval_ds: Dataset | None, tcfg: TrainConfig, out_dir=None,
        resume: bool = False, log=None) -> FitResult:
    """Train with the decoupled-decay optimizer under the warmup+cosine
    schedule; deterministic for a fixed seed.

    Writes a checkpoint per epoch under ``out_dir`` when given.  ``resume``
    continues from the newest epoch checkpoint there, reproducing the
    uninterrupted run bitwise (shuffles derive from (seed, epoch)).
    """
    if len(train_ds) == 0:
        raise ValueError("training dataset is empty")
    n = len(train_ds)
    steps_per_epoch = math.ceil(n / tcfg.batch_size)
    total_steps = tcfg.epochs * steps_per_epoch
    warmup_steps = min(int(round(tcfg.warmup_epochs * steps_per_epoch)),
                       total_steps - 1)
    schedule = Schedule(total_steps=total_steps, warmup_steps=warmup_steps,
                        peak_lr=tcfg.peak_lr)
    weights = LossWeights(pose=tcfg.pose_weight, cosine=tcfg.cosine_weight)
    opt = OptState.for_params(params, weight_decay=tcfg.weight_decay)
    start_epoch = 0
    history: list = []
    lr_trace: list = []
    if resume:
        if out_dir is None:
            raise ValueError("resume needs an output directory")
        found = _epoch_dirs(Path(out_dir))
        if found:
            params, cfg_l, tree_l, meta, opt_l = load_checkpoint(found[-1])
            if cfg_l != cfg:
                raise ValueError("checkpoint model config does not match")
            opt = opt_l if opt_l is not None else opt
            start_epoch = meta["epoch"] + 1
            history = meta.get("history", [])
            lr_trace = meta.get("lr_trace", [])

    master = Rng(tcfg.seed)
    dtype = cfg.np_dtype
    for epoch in range(start_epoch, tcfg.epochs):
        perm = master.derive(epoch).shuffle(n)
        epoch_loss = 0.0
        epoch_pose = 0.0
        for step_in_epoch in range(steps_per_epoch):
            idx = perm[step_in_epoch * tcfg.batch_size:(step_in_epoch + 1) * tcfg.batch_size]
            hj = train_ds.joint_heatmaps[idx].astype(dtype, copy=False)
            hl = train_ds.limb_heatmaps[idx].astype(dtype, copy=False) if cfg.propagation else None
            gt = train_ds.poses[idx].astype(dtype, copy=False)
            loss, parts, grads = _loss_and_grads(
                params, cfg, tree, hj, hl, gt, weights, tcfg.workers)
            global_step = epoch * steps_per_epoch + step_in_epoch
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at step {global_step}")
            if tcfg.clip_norm is not None:
                grads = clip_gradients(grads, tcfg.clip_norm)
            lr = lr_at(global_step, schedule)
            lr_trace.append(lr)
            params = adamw_step(params, grads, opt, lr)
            epoch_loss += loss
            epoch_pose += parts["pose"]
        row = {"epoch": epoch, "train_loss": float(epoch_loss / steps_per_epoch),
               "train_pose_cm": float(epoch_pose / steps_per_epoch),
               "lr_last": float(lr_trace[-1])}
        if eval_ds is not None:
            report = evaluate(params, cfg, tree, eval_ds, tcfg.eval_batch_size)
            row["eval_mpjpe"] = report.mpjpe
            row["eval_pa_mpjpe"] = report.pa_mpjpe
        history.append(row)
        if log:
            log(row)
        if out_dir is not None:
            meta = {"epoch": epoch, "train_config": tcfg.to_dict(),
                    "history": history, "lr_trace": lr_trace}
            save_checkpoint(Path(out_dir) / f"epoch_{epoch:03d}", params, cfg,
                            tree, meta, opt_state=opt)
    return FitResult(params=params, history=history, schedule=schedule,
                     lr_trace=lr_trace)


def write_history_csv(history: list, path) -> None:
    if not history:
        return
    keys = list(history[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in history:
            writer.writerow(row)

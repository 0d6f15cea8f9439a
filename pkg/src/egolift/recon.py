"""Heatmap-reconstruction ablation.

A fresh decoder is trained per frozen pose-model encoder to rebuild the
joint heatmaps from its embedding; the test-set per-pixel MSE then ranks
how much heatmap information each embedding retains, against an all-zeros
baseline.  Decoder training can collapse to near-zero output; collapse is
detected (three consecutive epochs whose probe reconstructions stay below
a threshold) and triggers a restart with a fresh seed, up to a cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convnet import decode_heatmaps, init_decoder_params
from .dataset import Dataset
from .losses import ReconLossConfig, recon_loss
from .model import ModelConfig, joint_features
from .optim import OptState, Schedule, adamw_step, lr_at
from .rng import Rng
from .skeleton import SkeletonTree
from .tensor import Tape, Tensor


@dataclass(frozen=True)
class ReconExperimentConfig:
    epochs: int = 6
    batch_size: int = 32
    peak_lr: float = 1e-3
    warmup_epochs: float = 0.5
    seed: int = 0
    hidden_channels: int = 16
    collapse_max_value: float = 1e-3
    collapse_epochs: int = 3
    max_restarts: int = 5
    loss: ReconLossConfig = ReconLossConfig()


def frozen_embeddings(params: dict, cfg: ModelConfig, tree: SkeletonTree,
                      ds: Dataset, batch_size: int = 64) -> np.ndarray:
    """Per-sample embedding from a frozen encoder: the concatenated
    per-joint features, (S, n_joints * state_dim)."""
    outs = []
    dtype = cfg.np_dtype
    for a in range(0, len(ds), batch_size):
        b = min(a + batch_size, len(ds))
        hj = Tensor(ds.joint_heatmaps[a:b].astype(dtype, copy=False))
        fj = joint_features(hj, params, cfg)
        outs.append(fj.data.reshape(b - a, -1))
    return np.concatenate(outs, axis=0)


def zeros_baseline_mse(heatmaps: np.ndarray, chunk: int = 256) -> float:
    """Per-pixel MSE of the all-zeros prediction, accumulated in chunks."""
    total = 0.0
    count = 0
    flat = heatmaps.reshape(heatmaps.shape[0], -1)
    for a in range(0, flat.shape[0], chunk):
        part = flat[a:a + chunk].astype(np.float64)
        total += float((part * part).sum())
        count += part.size
    return total / count


def decoder_mse(dec_params: dict, embeddings: np.ndarray, targets: np.ndarray,
                hidden_channels: int, batch_size: int = 64) -> float:
    """Test per-pixel MSE of decoded heatmaps against targets."""
    n_heatmaps, res = targets.shape[1], targets.shape[-1]
    total, count = 0.0, 0
    for a in range(0, len(embeddings), batch_size):
        b = min(a + batch_size, len(embeddings))
        rec = decode_heatmaps(Tensor(embeddings[a:b]), dec_params, n_heatmaps,
                              res, hidden_channels).data
        diff = rec.astype(np.float64) - targets[a:b].astype(np.float64)
        total += float((diff * diff).sum())
        count += diff.size
    return total / count


def train_decoder(embeddings: np.ndarray, targets: np.ndarray,
                  rcfg: ReconExperimentConfig, log=None):
    """Train a decoder on frozen embeddings with the reconstruction loss.

    Returns (decoder params, dict with epochs/restarts/collapsed).  Each
    restart re-initializes from a new seed; a run that still collapses after
    the restart cap is returned as-is, flagged.
    """
    n = len(embeddings)
    n_heatmaps, res = targets.shape[1], targets.shape[-1]
    embed_dim = embeddings.shape[1]
    steps_per_epoch = math.ceil(n / rcfg.batch_size)
    schedule = Schedule(total_steps=rcfg.epochs * steps_per_epoch,
                        warmup_steps=int(round(rcfg.warmup_epochs * steps_per_epoch)),
                        peak_lr=rcfg.peak_lr)
    probe = slice(0, min(n, 256))
    dtype = targets.dtype

    for restart in range(rcfg.max_restarts + 1):
        rng = Rng(rcfg.seed).derive(restart)
        params = init_decoder_params(embed_dim, n_heatmaps, res, rng,
                                     hidden_channels=rcfg.hidden_channels, dtype=dtype)
        opt = OptState.for_params(params, weight_decay=0.0)
        shuffler = Rng(rcfg.seed).derive(1000 + restart)
        low_epochs = 0
        collapsed = False
        for epoch in range(rcfg.epochs):
            perm = shuffler.shuffle(n)
            for step in range(steps_per_epoch):
                idx = perm[step * rcfg.batch_size:(step + 1) * rcfg.batch_size]
                with Tape() as tape:
                    rec = decode_heatmaps(Tensor(embeddings[idx]), params,
                                          n_heatmaps, res, rcfg.hidden_channels)
                    loss, parts = recon_loss(Tensor(targets[idx]), rec, rcfg.loss)
                grads = tape.backward(loss)
                lr = lr_at(epoch * steps_per_epoch + step, schedule)
                params = adamw_step(params, {k: grads.wrt(p) for k, p in params.items()},
                                    opt, lr)
            probe_rec = decode_heatmaps(Tensor(embeddings[probe]), params,
                                        n_heatmaps, res, rcfg.hidden_channels)
            peak = float(np.abs(probe_rec.data).max())
            low_epochs = low_epochs + 1 if peak < rcfg.collapse_max_value else 0
            if log:
                log({"restart": restart, "epoch": epoch, "loss": parts["total"],
                     "probe_peak": peak})
            if low_epochs >= rcfg.collapse_epochs:
                collapsed = True
                break
        if not collapsed:
            return params, {"epochs": rcfg.epochs, "restarts": restart, "collapsed": False}
    return params, {"epochs": rcfg.epochs, "restarts": rcfg.max_restarts,
                    "collapsed": True}


def run_reconstruction_experiment(grid_model, cnn_model, train_ds: Dataset,
                                  test_ds: Dataset, rcfg: ReconExperimentConfig,
                                  log=None) -> list:
    """Train a fresh decoder per frozen encoder variant and measure test MSE.

    ``grid_model`` / ``cnn_model`` are (params, ModelConfig, SkeletonTree)
    triples of trained pose models.  Returns one row per variant (grid
    transformer, CNN baseline, zeros) with per-pixel MSE, epochs and restart
    counts.
    """
    rows = []
    for variant, (params, cfg, tree) in (("grid_vit", grid_model), ("cnn", cnn_model)):
        train_emb = frozen_embeddings(params, cfg, tree, train_ds)
        test_emb = frozen_embeddings(params, cfg, tree, test_ds)
        dec, info = train_decoder(train_emb, train_ds.joint_heatmaps, rcfg, log=log)
        mse = decoder_mse(dec, test_emb, test_ds.joint_heatmaps, rcfg.hidden_channels)
        rows.append({"variant": variant, "per_pixel_mse": mse,
                     "epochs": info["epochs"], "restarts": info["restarts"],
                     "collapsed": info["collapsed"]})
    rows.append({"variant": "zeros", "per_pixel_mse": zeros_baseline_mse(test_ds.joint_heatmaps),
                 "epochs": 0, "restarts": 0, "collapsed": False})
    return rows

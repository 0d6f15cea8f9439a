"""Finite-difference gradient verification.

The oracle is independent of the tape: it re-evaluates the loss function at
coordinate-wise perturbed parameters and compares central differences
``(f(p+h) - f(p-h)) / 2h`` against the analytic adjoints from one backward
pass.  Use float64 parameters for tight tolerances.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng
from .tensor import Tape, Tensor


def _perturbed(params: dict, name: str, flat_index: int, delta: float) -> dict:
    base = params[name].data
    bumped = base.copy()
    bumped.reshape(-1)[flat_index] += delta
    out = dict(params)
    out[name] = Tensor(bumped)
    return out


def grad_check(f, params: dict, h: float = 1e-5,
               coords_per_param: int | None = None, rng: Rng | None = None,
               refine_h: float | None = None, refine_below: float = 1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f(params) -> Tensor`` must produce a scalar loss.  When
    ``coords_per_param`` is given, only that many randomly chosen coordinates
    of each parameter are probed (full sweeps are infeasible for whole
    models); otherwise every coordinate is checked.  The relative error uses
    denominator ``max(|analytic|, |numeric|, 1e-8)``.

    Central differences cancel ~15 significant digits of the loss, so a
    coordinate whose gradient magnitude is near the resulting noise floor
    cannot be resolved at a small ``h``.  When ``refine_h`` is given,
    coordinates with both magnitudes under ``refine_below`` are re-probed at
    that larger, better-conditioned step, and the better of the two
    estimates is kept: the small step fails on cancellation noise, the large
    one on crossing an activation kink, and a genuinely wrong gradient
    disagrees with both.
    """
    if h <= 0 or (refine_h is not None and refine_h <= 0):
        raise ValueError(f"step sizes must be > 0, got h={h} refine_h={refine_h}")
    for name, p in params.items():
        if not np.isfinite(p.data).all():
            raise ValueError(f"parameter {name!r} contains non-finite values")

    with Tape() as tape:
        loss = f(params)
    grads = tape.backward(loss)
    analytic = {name: grads.wrt(p) for name, p in params.items()}

    if rng is None:
        rng = Rng(0)
    worst = 0.0
    for name, p in sorted(params.items()):
        n = p.size
        if coords_per_param is None or n <= coords_per_param:
            coords = range(n)
        else:
            coords = rng.shuffle(n)[:coords_per_param]
        flat_analytic = analytic[name].reshape(-1)
        for idx in coords:
            a = float(flat_analytic[idx])
            numeric = _central(f, params, name, idx, h)
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if refine_h is not None and max(abs(a), abs(numeric)) < refine_below:
                refined = _central(f, params, name, idx, refine_h)
                err = min(err, abs(a - refined) / max(abs(a), abs(refined), 1e-8))
            if err > worst:
                worst = err
    return worst


def _central(f, params, name, idx, h):
    lo = f(_perturbed(params, name, idx, -h)).item()
    hi = f(_perturbed(params, name, idx, +h)).item()
    return (hi - lo) / (2.0 * h)


def full_model_check(seed: int, h: float = 2e-6, refine_h: float = 1e-3,
                     probes_per_param: int = 2, jitter: float = 0.02,
                     residual: float = 0.02) -> float:
    """End-to-end check: total training loss through the whole tiny model.

    Builds a 4-joint tree, renders a 2-sample 16x16 synthetic batch, jitters
    the float64 initial parameters so no activation sits exactly on a kink,
    and places the ground truth near the model output so the central
    differences stay well above their cancellation noise.  Returns the max
    relative gradient error over the probed coordinates.
    """
    import numpy as np

    from .camera import default_rig
    from .dataset import generate_dataset
    from .heatmaps import OcclusionPolicy
    from .losses import total_loss
    from .model import init_model_params, model_forward, tiny_config
    from .skeleton import build_skeleton

    cfg = tiny_config()
    tree = build_skeleton({"parents": [-1, 0, 1, 1], "bone_lengths": [0, 10, 12, 9]})
    rig = default_rig(resolution=cfg.heatmap_res)
    ds = generate_dataset(2, seed=seed, tree=tree, rig=rig,
                          policy=OcclusionPolicy(rate=0.2), sigma=1.0, limb_width=1.0)
    params = init_model_params(cfg, seed)
    jr = Rng(seed + 1000)
    params = {k: Tensor(p.data + jitter * jr.normal(p.shape))
              for k, p in params.items()}
    hj = Tensor(ds.joint_heatmaps.astype(np.float64))
    hl = Tensor(ds.limb_heatmaps.astype(np.float64))
    base = model_forward(params, cfg, tree, hj, hl).data
    gt = Tensor(base + jr.uniform(base.size, -residual, residual).reshape(base.shape))

    def f(p):
        pred = model_forward(p, cfg, tree, hj, hl)
        return total_loss(pred, gt, tree)[0]

    return grad_check(f, params, h=h, coords_per_param=probes_per_param,
                      rng=Rng(seed), refine_h=refine_h)

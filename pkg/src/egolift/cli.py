"""Command-line interface.

Commands: gen-data, train, eval, prop-metrics, ablate-recon, grad-check.
Every command writes a manifest embedding its fully resolved configuration
and the tool version into its output directory, so a run can be reproduced
from the manifest alone (``--config`` accepts either a flat JSON dict of
flag names or a previously written manifest).  Flags override config-file
values.  The environment variable ``ETAP_SEED`` supplies the default seed.

Exit codes: 0 success, 1 validation error, 2 runtime failure.  Report paths
emit CSV plus a rendered figure (suppress with --no-plots).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ValidationError(Exception):
    """Bad flags, config, or input files; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _default_seed() -> int:
    env = os.environ.get("ETAP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"ETAP_SEED must be an integer, got {env!r}") from None


def _write_manifest(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump({"command": command, "version": __version__, "config": config},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolved_config(args: argparse.Namespace) -> dict:
    # 'out' names the directory the manifest itself lives in; leaving it out
    # makes a rerun from the manifest into a fresh directory bitwise identical
    skip = {"config", "func", "command", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {p} is not valid JSON: {exc}") from None
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]  # a previously written command manifest
    elif isinstance(data.get("run"), dict) and isinstance(data["run"].get("config"), dict):
        data = data["run"]["config"]  # a dataset manifest carrying its run record
    if not isinstance(data, dict):
        raise ValidationError(f"config file {p} must hold a JSON object")
    return data


def _add_config_flag(p) -> None:
    p.add_argument("--config", default=None,
                   help="JSON file of flag defaults (flat keys or a manifest)")


def _write_csv(path, rows: list, fieldnames: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# gen-data

def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="generate a synthetic stereo dataset")
    _add_config_flag(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--occlusion", type=float, default=0.0,
                   help="per-joint per-view occlusion probability")
    p.add_argument("--depth-gamma", type=float, default=0.0,
                   help="depth weighting exponent: farther joints likelier occluded")
    p.add_argument("--limb-factor", type=float, default=0.5,
                   help="attenuation of limbs incident to an occluded joint")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--sigma", type=float, default=None,
                   help="joint heatmap Gaussian width in pixels (default scales with resolution)")
    p.add_argument("--limb-width", type=float, default=None,
                   help="limb band half-width in pixels (default scales with resolution)")
    p.add_argument("--fov", type=float, default=130.0)
    p.add_argument("--baseline", type=float, default=8.0)
    p.add_argument("--pitch", type=float, default=55.0)
    p.add_argument("--skeleton-file", default=None,
                   help="JSON skeleton config; default is the 15-joint humanoid")
    p.set_defaults(func=cmd_gen_data)


def cmd_gen_data(args) -> int:
    from .camera import default_rig
    from .dataset import generate_dataset, write_dataset
    from .heatmaps import OcclusionPolicy
    from .skeleton import build_skeleton

    if args.samples < 1:
        raise ValidationError(f"--samples must be >= 1, got {args.samples}")
    if not 0.0 <= args.occlusion <= 1.0:
        raise ValidationError(f"--occlusion must be in [0, 1], got {args.occlusion}")
    if args.resolution < 16 or args.resolution % 16:
        raise ValidationError("--resolution must be a positive multiple of 16")
    seed = args.seed if args.seed is not None else _default_seed()
    sigma = args.sigma if args.sigma is not None else 2.0 * args.resolution / 64.0
    width = args.limb_width if args.limb_width is not None else max(1.0, 1.5 * args.resolution / 64.0)
    tree = build_skeleton(json.loads(Path(args.skeleton_file).read_text())
                          if args.skeleton_file else None)
    rig = default_rig(resolution=args.resolution, fov_deg=args.fov,
                      baseline=args.baseline, pitch_deg=args.pitch)
    policy = OcclusionPolicy(rate=args.occlusion, depth_gamma=args.depth_gamma,
                             limb_factor=args.limb_factor)
    ds = generate_dataset(args.samples, seed, tree=tree, rig=rig, policy=policy,
                          sigma=sigma, limb_width=width)
    out = Path(args.out)
    config = _resolved_config(args)
    config["seed"] = seed
    config["sigma"] = sigma
    config["limb_width"] = width
    # the run record shares the dataset manifest rather than clobbering it
    ds.meta["run"] = {"command": "gen-data", "version": __version__, "config": config}
    write_dataset(ds, out)
    nz = float((np.abs(ds.joint_heatmaps).max(axis=(2, 3)) > 0).mean())
    print(f"wrote {len(ds)} samples ({tree.n_joints} joints, {args.resolution}px) to {out}")
    print(f"visible joint heatmaps: {100 * nz:.1f}%")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

def _add_train(sub):
    p = sub.add_parser("train", help="train a pose-lifting model")
    _add_config_flag(p)
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", default=None)
    p.add_argument("--holdout", type=float, default=0.1,
                   help="held-out fraction of --data when --eval-data is absent")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=16)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--warmup-epochs", type=float, default=1.0)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--preset", choices=["auto", "full", "small", "tiny"], default="auto")
    p.add_argument("--encoder", choices=["grid", "cnn"], default="grid")
    p.add_argument("--no-propagation", action="store_true",
                   help="joint features only: the no-propagation reference model")
    p.add_argument("--head", choices=["per-joint", "global"], default="per-joint")
    p.add_argument("--extra-targets", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_train)


def _model_config_for(args, ds):
    from .model import full_config, small_config, tiny_config

    preset = args.preset
    res = ds.resolution
    if preset == "auto":
        preset = {64: "full", 16: "small"}.get(res)
        if preset is None:
            raise ValidationError(
                f"no auto preset for resolution {res}; pass --preset explicitly")
    builder = {"full": full_config, "small": small_config, "tiny": tiny_config}[preset]
    cfg = builder(encoder=args.encoder, propagation=not args.no_propagation,
                  head=args.head, n_extra_targets=args.extra_targets,
                  n_joints=ds.tree.n_joints)
    if cfg.heatmap_res != res:
        raise ValidationError(
            f"preset {preset} expects {cfg.heatmap_res}px heatmaps, dataset has {res}px")
    return cfg


def _load_dataset(path: str):
    from .dataset import DatasetError, read_dataset

    p = Path(path)
    if not p.exists():
        raise ValidationError(f"dataset directory not found: {p}")
    try:
        return read_dataset(p)
    except DatasetError as exc:
        raise ValidationError(str(exc)) from None


def cmd_train(args) -> int:
    from .model import init_model_params
    from .train import TrainConfig, evaluate, fit, write_history_csv

    ds = _load_dataset(args.data)
    if args.eval_data:
        train_ds, eval_ds = ds, _load_dataset(args.eval_data)
        if eval_ds.tree.to_dict() != ds.tree.to_dict():
            raise ValidationError("train and eval datasets use different skeletons")
    else:
        if not 0.0 < args.holdout < 1.0:
            raise ValidationError(f"--holdout must be in (0, 1), got {args.holdout}")
        n_eval = max(1, int(round(args.holdout * len(ds))))
        if n_eval >= len(ds):
            raise ValidationError("holdout leaves no training samples")
        train_ds = ds.subset(np.arange(0, len(ds) - n_eval))
        eval_ds = ds.subset(np.arange(len(ds) - n_eval, len(ds)))
    seed = args.seed if args.seed is not None else _default_seed()
    cfg = _model_config_for(args, ds)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, peak_lr=args.lr,
                       warmup_epochs=args.warmup_epochs, weight_decay=args.weight_decay,
                       seed=seed, workers=args.workers, clip_norm=args.clip_norm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _resolved_config(args)
    config["seed"] = seed
    config["model_config"] = cfg.to_dict()
    _write_manifest(out, "train", config)
    params = init_model_params(cfg, seed)

    def log(row):
        msg = (f"epoch {row['epoch']:3d}  loss {row['train_loss']:.4f}  "
               f"pose {row['train_pose_cm']:.2f}cm")
        if "eval_mpjpe" in row:
            msg += f"  eval MPJPE {row['eval_mpjpe']:.2f}cm"
        print(msg)

    result = fit(params, cfg, ds.tree, train_ds, eval_ds, tcfg, out_dir=out,
                 resume=args.resume, log=log)
    write_history_csv(result.history, out / "metrics.csv")
    report = evaluate(result.params, cfg, ds.tree, eval_ds)
    report.write_csv(out / "eval_report.csv")
    with open(out / "eval_summary.json", "w") as fh:
        json.dump({"mpjpe": report.mpjpe, "pa_mpjpe": report.pa_mpjpe,
                   "n_samples": int(len(report.sample_mpjpe))}, fh, indent=2)
        fh.write("\n")
    if not args.no_plots:
        from .plots import save_lr_trace, save_training_curves
        save_training_curves(result.history, out / "training_curves.png")
        save_lr_trace(result.lr_trace, out / "lr_schedule.png")
    print(f"final eval MPJPE {report.mpjpe:.2f}cm, PA-MPJPE {report.pa_mpjpe:.2f}cm")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval

def _resolve_checkpoint(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"checkpoint not found: {p}")
    if (p / "manifest.json").exists() and (p / "weights").exists():
        return p
    epochs = sorted(d for d in p.glob("epoch_*") if (d / "manifest.json").exists())
    if not epochs:
        raise ValidationError(f"{p} holds no checkpoint (no manifest.json or epoch_* dirs)")
    return epochs[-1]


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_config_flag(p)
    p.add_argument("--ckpt", required=True, help="checkpoint dir or training output dir")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-joint", action="store_true",
                   help="add per-joint error columns and the per-joint figure")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_eval)


def cmd_eval(args) -> int:
    from .train import evaluate, load_checkpoint

    ckpt_dir = _resolve_checkpoint(args.ckpt)
    params, cfg, tree, meta, _ = load_checkpoint(ckpt_dir)
    ds = _load_dataset(args.data)
    if ds.tree.n_joints != tree.n_joints or ds.resolution != cfg.heatmap_res:
        raise ValidationError(
            f"dataset ({ds.tree.n_joints} joints, {ds.resolution}px) does not match "
            f"model ({tree.n_joints} joints, {cfg.heatmap_res}px)")
    report = evaluate(params, cfg, tree, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.per_joint:
        report.write_csv(out / "report.csv")
        rows = [{"joint": j, "mean_error_cm": float(e)}
                for j, e in zip(report.joint_ids, report.mean_joint_errors)]
        _write_csv(out / "per_joint.csv", rows, ["joint", "mean_error_cm"])
    else:
        _write_csv(out / "report.csv",
                   [{"sample_id": i, "mpjpe": repr(float(m)), "pa_mpjpe": repr(float(p))}
                    for i, (m, p) in enumerate(zip(report.sample_mpjpe, report.sample_pa_mpjpe))],
                   ["sample_id", "mpjpe", "pa_mpjpe"])
    with open(out / "summary.json", "w") as fh:
        json.dump({"mpjpe": report.mpjpe, "pa_mpjpe": report.pa_mpjpe,
                   "n_samples": int(len(report.sample_mpjpe)),
                   "checkpoint": str(ckpt_dir)}, fh, indent=2)
        fh.write("\n")
    if args.per_joint and not args.no_plots:
        from .plots import save_per_joint_errors
        save_per_joint_errors(report.mean_joint_errors, report.joint_ids,
                              out / "per_joint_errors.png", names=ds.tree.names)
    _write_manifest(out, "eval", _resolved_config(args))
    print(f"MPJPE {report.mpjpe:.3f}cm  PA-MPJPE {report.pa_mpjpe:.3f}cm "
          f"({len(report.sample_mpjpe)} samples)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# prop-metrics

def _add_prop_metrics(sub):
    p = sub.add_parser("prop-metrics",
                       help="propagation potential/effect from paired eval reports")
    _add_config_flag(p)
    p.add_argument("--np-report", required=True,
                   help="report.csv of the no-propagation model (eval --per-joint)")
    p.add_argument("--p-report", required=True,
                   help="report.csv of the propagation model (eval --per-joint)")
    p.add_argument("--data", required=True, help="dataset dir (for the skeleton)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_prop_metrics)


def cmd_prop_metrics(args) -> int:
    from .metrics import EvalReport, pp_pe_regression, propagation_metrics

    ds = _load_dataset(args.data)
    reports = []
    for path in (args.np_report, args.p_report):
        if not Path(path).exists():
            raise ValidationError(f"report not found: {path}")
        rep = EvalReport.read_csv(path)
        if rep.joint_errors.shape[1] == 0:
            raise ValidationError(
                f"{path} has no per-joint columns; re-run eval with --per-joint")
        reports.append(rep)
    rep_np, rep_p = reports
    if rep_np.joint_errors.shape != rep_p.joint_errors.shape or \
            rep_np.joint_ids != rep_p.joint_ids:
        raise ValidationError("reports are not aligned: differing samples or joints")
    n = ds.tree.n_joints
    full_np = np.zeros((rep_np.joint_errors.shape[0], n))
    full_p = np.zeros_like(full_np)
    full_np[:, rep_np.joint_ids] = rep_np.joint_errors
    full_p[:, rep_p.joint_ids] = rep_p.joint_errors
    pp, pe = propagation_metrics(full_np, full_p, ds.tree)
    slope, intercept, p_value = pp_pe_regression(pp, pe)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in range(pp.shape[0]):
        for j in range(pp.shape[1]):
            rows.append({"sample_id": s, "joint": j + 1,
                         "pp": repr(float(pp[s, j])), "pe": repr(float(pe[s, j]))})
    _write_csv(out / "pp_pe.csv", rows, ["sample_id", "joint", "pp", "pe"])
    summary = {"slope": slope, "intercept": intercept, "p_value": p_value,
               "mean_pp": float(pp.mean()), "mean_pe": float(pe.mean()),
               "n_instances": int(pp.size)}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if not args.no_plots:
        from .plots import save_pp_pe
        save_pp_pe(pp, pe, slope, intercept, p_value, out / "pp_pe.png")
    _write_manifest(out, "prop-metrics", _resolved_config(args))
    print(f"mean PP {summary['mean_pp']:.3f}cm  mean PE {summary['mean_pe']:.3f}cm  "
          f"slope {slope:.4f} (p={p_value:.3g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ablate-recon

def _add_ablate_recon(sub):
    p = sub.add_parser("ablate-recon",
                       help="heatmap-reconstruction comparison of frozen encoders")
    _add_config_flag(p)
    p.add_argument("--grid", required=True, help="grid-encoder model checkpoint")
    p.add_argument("--cnn", required=True, help="CNN-baseline model checkpoint")
    p.add_argument("--train-data", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden-channels", type=int, default=16)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_ablate_recon)


def cmd_ablate_recon(args) -> int:
    from .recon import ReconExperimentConfig, run_reconstruction_experiment
    from .train import load_checkpoint

    seed = args.seed if args.seed is not None else _default_seed()
    models = {}
    for name, path in (("grid", args.grid), ("cnn", args.cnn)):
        params, cfg, tree, _, _ = load_checkpoint(_resolve_checkpoint(path))
        if cfg.encoder != name:
            raise ValidationError(f"--{name} checkpoint holds a {cfg.encoder!r} encoder")
        models[name] = (params, cfg, tree)
    train_ds = _load_dataset(args.train_data)
    test_ds = _load_dataset(args.test_data)
    rcfg = ReconExperimentConfig(epochs=args.epochs, batch_size=args.batch,
                                 peak_lr=args.lr, seed=seed,
                                 hidden_channels=args.hidden_channels)
    rows = run_reconstruction_experiment(models["grid"], models["cnn"], train_ds,
                                         test_ds, rcfg,
                                         log=lambda r: print(f"  {r}"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_rows = [{**row, "per_pixel_mse": repr(float(row["per_pixel_mse"]))} for row in rows]
    _write_csv(out / "recon_mse.csv", csv_rows,
               ["variant", "per_pixel_mse", "epochs", "restarts", "collapsed"])
    if not args.no_plots:
        from .plots import save_recon_mse
        save_recon_mse(rows, out / "recon_mse.png")
    config = _resolved_config(args)
    config["seed"] = seed
    _write_manifest(out, "ablate-recon", config)
    for row in rows:
        print(f"{row['variant']:>8}: per-pixel MSE {row['per_pixel_mse']:.3e} "
              f"(restarts {row['restarts']})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# grad-check

def _add_grad_check(sub):
    p = sub.add_parser("grad-check",
                       help="finite-difference check of the full pipeline gradient")
    _add_config_flag(p)
    p.add_argument("--threshold", type=float, default=1e-5)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--probes", type=int, default=2,
                   help="coordinates probed per parameter tensor")
    p.add_argument("--out", default=None, help="optional report JSON path")
    p.set_defaults(func=cmd_grad_check)


def cmd_grad_check(args) -> int:
    from .gradcheck import full_model_check

    if args.seeds < 1:
        raise ValidationError(f"--seeds must be >= 1, got {args.seeds}")
    errors = []
    for seed in range(args.seeds):
        err = full_model_check(seed, probes_per_param=args.probes)
        errors.append(err)
        print(f"seed {seed:3d}: max relative error {err:.3e}")
    worst = max(errors)
    print(f"max over {args.seeds} seeds: {worst:.3e} (threshold {args.threshold:g})")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"errors": errors, "max": worst, "threshold": args.threshold,
                       "passed": bool(worst <= args.threshold)}, fh, indent=2)
            fh.write("\n")
    return EXIT_OK if worst <= args.threshold else EXIT_VALIDATION


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="egolift",
                     description="stereo egocentric heatmap-to-3D pose lifting")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_gen_data, _add_train, _add_eval, _add_prop_metrics,
                _add_ablate_recon, _add_grad_check):
        add(sub)
    return parser, dict(sub.choices)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            # config file sets defaults for this command; explicit flags win
            file_values = _load_config_file(args.config)
            command_parser = commands[args.command]
            dests = {a.dest for a in command_parser._actions}
            known = {k: v for k, v in file_values.items()
                     if k in dests and not isinstance(v, (dict, list))}
            command_parser.set_defaults(**known)
            args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())

"""Command-line entry point: ``prsdepth {simulate,reconstruct,train,eval,gradcheck}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import baselines, io
from .core import DetectorConfig, PulseModel, Scene
from .loss_metrics import avg_variance, csv_header, csv_row, evaluate
from .scenes import KINDS, synth_scene
from .shrinkage import classic_denoise
from .simulator import SbrTarget, simulate
from .windowing import WindowConfig, default_window

METHODS = ("argmax", "lmfilter", "shrinkage", "prsnet")


class CliError(Exception):
    pass


def _size(text):
    m, sep, n = text.lower().partition("x")
    try:
        return (int(m), int(n)) if sep else (int(m), int(m))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MxN, got {text!r}") from None


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _detector(args) -> DetectorConfig:
    return DetectorConfig(T=args.bins, delta=args.bin_ps * 1e-12)


# ---------------------------------------------------------------- simulate

def cmd_simulate(args):
    det = _detector(args)
    if args.scene:
        Z = io.read_depth(args.scene).astype(np.float64)
        scene = Scene(Z, 1.0)
    else:
        M, N = args.size
        lo, hi = args.depth_range or (0.1 * det.max_range, 0.9 * det.max_range)
        scene = synth_scene(args.synth, M, N, (lo, hi), steps=args.steps,
                            reflectivity=args.reflectivity, cfg=det)
    pulse = PulseModel(args.fwhm_ps * 1e-12)
    cube = simulate(scene, det, pulse, SbrTarget(args.signal, args.background), args.seed)
    io.write_cube(args.out, cube)
    gt = args.gt_out or os.path.splitext(args.out)[0] + ".gt.pfm"
    io.write_depth(gt, scene.Z)
    print(f"wrote {args.out} ({cube.shape[0]}x{cube.shape[1]}x{cube.T}) and {gt}")


# ------------------------------------------------------------- reconstruct

def _patch_starts(n, p, stride):
    starts = list(range(0, n - p + 1, stride))
    if starts[-1] != n - p:
        starts.append(n - p)
    return starts


def reconstruct_patches(fn, counts, patch=None, stride=None):
    """Apply ``fn(counts) -> (depth, dist or None)`` patch by patch.

    Patches are ``patch x patch`` crops every ``stride`` pixels (the last row
    and column of patches are pinned to the border); overlapping predictions
    are averaged.
    """
    M, N, T = counts.shape
    if not patch:
        return fn(counts)
    p = min(patch, M, N)
    stride = stride or p
    if stride < 1:
        raise CliError("--stride must be >= 1")
    z = np.zeros((M, N))
    hits = np.zeros((M, N))
    dist = None
    for r in _patch_starts(M, p, stride):
        for c in _patch_starts(N, p, stride):
            zp, dp = fn(counts[r:r + p, c:c + p])
            z[r:r + p, c:c + p] += zp
            hits[r:r + p, c:c + p] += 1
            if dp is not None:
                if dist is None:
                    dist = np.zeros((M, N, dp.shape[-1]))
                dist[r:r + p, c:c + p] += dp
    z /= hits
    if dist is not None:
        dist /= hits[..., None]
    return z, dist


def _method_fn(args, cube):
    det = cube.meta
    pulse = PulseModel(args.fwhm_ps * 1e-12)
    if args.method == "argmax":
        return lambda h: (baselines.argmax_depth(h, det).z, None)
    if args.method == "lmfilter":
        if args.background is not None:
            det = det.replace(n_b=args.background / (det.T * det.delta * det.n_illum))
        else:
            det = det.replace(n_b=baselines.estimate_background(cube, pulse, det))
        sig = args.signal if args.signal is not None else baselines.estimate_signal(cube, det)
        return lambda h: (baselines.log_matched_filter(h, pulse, det, sig).z, None)
    if args.method == "shrinkage":
        w = WindowConfig(args.window) if args.window else default_window(det, pulse)
        return lambda h: (baselines.argmax_depth(classic_denoise(h, w, args.s0), det).z, None)
    from .loss_metrics import soft_argmax
    from .nn.checkpoint import load_model
    from .nn.model import PrsNet

    if not args.model:
        raise CliError("--method prsnet needs --model")
    cfg, params, _ = load_model(args.model)
    if cfg.T_in != det.T:
        raise CliError(f"model expects {cfg.T_in} bins but the cube has {det.T}")
    net = PrsNet(cfg)

    def run(h):
        p = net.predict_proba(params, h)[0]
        return soft_argmax(p, det), p
    return run


def cmd_reconstruct(args):
    cube = io.read_cube(args.cube)
    if args.rebin:
        cube = io.rebin_cube(cube, args.rebin)
    z, dist = reconstruct_patches(_method_fn(args, cube), cube.counts, args.patch, args.stride)
    io.write_depth(args.out, z)
    if args.dist_out:
        if dist is None:
            raise CliError(f"method {args.method} produces no distribution; drop --dist-out")
        with open(args.dist_out, "wb") as f:
            np.save(f, dist)
    print(f"wrote {args.out}")


# ------------------------------------------------------------------- train

def cmd_train(args):
    from .nn.checkpoint import save_model
    from .nn.model import PrsNetConfig
    from .nn.train import TrainConfig, make_dataset, train

    with open(args.config) as f:
        conf = json.load(f)
    unknown = set(conf) - {"model", "train", "data"}
    if unknown:
        raise CliError(f"unknown config sections: {sorted(unknown)}")
    model_cfg = PrsNetConfig.from_dict(conf.get("model", {}))
    tdict = dict(conf.get("train", {}))
    if args.seed is not None:
        tdict["seed"] = args.seed
    tc = TrainConfig.from_dict(tdict)
    data = {"n_scenes": 8, "size": 32, "bin_ps": 80.0, "fwhm_ps": 400.0, "sbrs": ["2:50"]}
    data.update(conf.get("data", {}))
    det = DetectorConfig(T=model_cfg.T_in, delta=data["bin_ps"] * 1e-12)
    pulse = PulseModel(data["fwhm_ps"] * 1e-12)
    M, N = _size(str(data["size"]))
    samples = make_dataset(int(data["n_scenes"]), M, N, det, pulse, tuple(data["sbrs"]), seed=tc.seed)
    result = train(model_cfg, tc, samples, det, pulse, log_every=args.log_every)
    save_model(args.out_model, model_cfg, result.params, {"train": tc.to_dict(), "data": data})
    print(f"trained {tc.steps} steps: loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}; "
          f"wrote {args.out_model}")


# -------------------------------------------------------------------- eval

def cmd_eval(args):
    Z = io.read_depth(args.gt).astype(np.float64)
    Z_hat = io.read_depth(args.pred).astype(np.float64)
    p_hat = None
    if args.dist:
        p_hat = np.load(args.dist, allow_pickle=False)
    metrics = evaluate(Z, Z_hat, deltas=args.delta)
    if p_hat is not None:
        metrics["avg_var"] = avg_variance(p_hat)
    print(csv_header(args.delta))
    print(csv_row(metrics))


# --------------------------------------------------------------- gradcheck

def cmd_gradcheck(args):
    from .nn.gradsuite import CHECKS, run_all

    names = args.only or list(CHECKS)
    bad = [n for n in names if n not in CHECKS]
    if bad:
        raise CliError(f"unknown checks {bad}; choose from {list(CHECKS)}")
    reports = run_all(args.seed, names)
    for name, rep in reports.items():
        print(f"{name:18s} {rep}")
    return 0 if all(r.passed for r in reports.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prsdepth", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a photon-counting cube")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="ground-truth depth map (PFM, meters)")
    src.add_argument("--synth", choices=KINDS, help="synthetic scene kind")
    s.add_argument("--size", type=_size, default=(32, 32), help="MxN for --synth")
    s.add_argument("--depth-range", type=_floats, help="near,far in meters for --synth")
    s.add_argument("--steps", type=int, default=4)
    s.add_argument("--reflectivity", choices=("constant", "ramp"), default="constant")
    s.add_argument("--signal", type=float, default=2.0, help="mean signal photons per pixel")
    s.add_argument("--background", type=float, default=50.0, help="background counts per pixel")
    s.add_argument("--bins", type=int, default=1024)
    s.add_argument("--bin-ps", type=float, default=80.0)
    s.add_argument("--fwhm-ps", type=float, default=400.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--gt-out", help="ground-truth PFM (default: <out>.gt.pfm)")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reconstruct", help="estimate depth from a cube")
    r.add_argument("--cube", required=True)
    r.add_argument("--method", choices=METHODS, required=True)
    r.add_argument("--model", help="trained model for --method prsnet")
    r.add_argument("--s0", type=float, default=0.5, help="shrinkage threshold scale")
    r.add_argument("--window", type=int, help="odd window length (default: pulse FWHM in bins)")
    r.add_argument("--fwhm-ps", type=float, default=400.0)
    r.add_argument("--signal", type=float, help="known signal photons per pixel (lmfilter)")
    r.add_argument("--background", type=float, help="known background counts per pixel (lmfilter)")
    r.add_argument("--rebin", type=int, help="sum bin pairs and zero-pad to this many bins")
    r.add_argument("--patch", type=int, help="square patch size")
    r.add_argument("--stride", type=int, help="patch stride (default: patch)")
    r.add_argument("--seed", type=int, default=0, help="accepted for uniformity; inference is deterministic")
    r.add_argument("--out", required=True)
    r.add_argument("--dist-out", help="save per-pixel distributions (.npy, prsnet only)")
    r.set_defaults(func=cmd_reconstruct)

    t = sub.add_parser("train", help="train the toy network on simulated scenes")
    t.add_argument("--config", required=True, help="JSON with model/train/data sections")
    t.add_argument("--seed", type=int)
    t.add_argument("--out-model", required=True)
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a depth map against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--delta", type=_floats, default=(1.01, 1.02, 1.03))
    e.add_argument("--dist", help="distributions (.npy) for the averaged variance")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--only", nargs="+")
    g.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (CliError, io.FormatError, OSError, ValueError, KeyError) as exc:
        print(f"prsdepth {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

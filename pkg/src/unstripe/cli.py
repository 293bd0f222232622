"""Command-line interface: detect, simulate, destripe, evaluate.

Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 numerical
abort. All randomness is controlled by the config seed (overridable with
--seed) and --threads 1 gives bit-reproducible outputs.
"""

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

import numpy as np
import torch

from .config import RunConfig, load_config, save_config
from .metrics import psnr, ssim, ssim_slice
from .pipeline import destripe_volume, detect_corruption
from .simulate import StripeComponent, StripeModel, degrade, generate_stripe_field, make_phantom
from .unroll import NumericalAbort
from .volume import Volume, load_volume, save_mask, save_volume


def _write_json(obj, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cfg(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, rng_seed=args.seed)
    return cfg


def _parse_direction(text):
    if text in ("auto", "volume", "horizontal", "vertical"):
        return text
    return float(text)


def cmd_detect(args):
    cfg = _load_cfg(args)
    vol = load_volume(args.input, args.format)
    result = detect_corruption(vol, cfg, _parse_direction(args.direction))
    os.makedirs(args.out_dir, exist_ok=True)
    w_vol = Volume(
        data=result.field.W.astype(np.float32),
        voxel_spacing=vol.voxel_spacing,
        stripe_axis=vol.stripe_axis,
    )
    save_volume(w_vol, os.path.join(args.out_dir, "W.raw"), "raw_f32")
    save_mask(result.field.M, os.path.join(args.out_dir, "M.raw"))
    report_path = args.report or os.path.join(args.out_dir, "detect_report.json")
    _write_json(result.report(), report_path)
    return 0


def _stripe_model_from_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    for key in ("thin_quasi_periodic", "thick_aperiodic"):
        if key in d:
            d[key] = StripeComponent(**d[key])
    if d.get("modulation_scale_px") is None:
        d["modulation_scale_px"] = math.inf
    return StripeModel(**d)


def cmd_simulate(args):
    cfg = _load_cfg(args)
    model = _stripe_model_from_json(args.stripe_model) if args.stripe_model else StripeModel()
    shape = tuple(args.shape)
    clean = make_phantom(shape, cfg.rng_seed)
    field = generate_stripe_field(shape, model, cfg.rng_seed)
    degraded = degrade(clean, field)
    os.makedirs(args.out_dir, exist_ok=True)
    save_volume(clean, os.path.join(args.out_dir, "clean.raw"), "raw_f32")
    save_volume(field, os.path.join(args.out_dir, "stripes.raw"), "raw_f32")
    save_volume(degraded, os.path.join(args.out_dir, "degraded.raw"), "raw_f32")
    model_dict = model.to_dict()
    if math.isinf(model_dict["modulation_scale_px"]):
        model_dict["modulation_scale_px"] = None
    _write_json(
        {"schema_version": 1, "stripe_model": model_dict, "seed": cfg.rng_seed},
        os.path.join(args.out_dir, "stripe_model.json"),
    )
    return 0


def _write_training_log(log, cfg, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    cols = ["epoch", "mse", "isotropy", "total"]
    cols += [f"mu_{k}" for k in range(cfg.unroll_K)]
    cols += [f"alpha_{k}" for k in range(cfg.unroll_K)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for entry in log:
            writer.writerow({c: repr(entry[c]) if c != "epoch" else entry[c] for c in cols})


def cmd_destripe(args):
    cfg = _load_cfg(args)
    vol = load_volume(args.input, args.format)
    ckpt_out = args.save_checkpoint or (args.out + ".ckpt")
    result = destripe_volume(
        vol,
        cfg,
        direction=_parse_direction(args.direction),
        checkpoint_in=args.checkpoint,
        checkpoint_out=ckpt_out,
    )
    save_volume(result.output, args.out, args.format)
    if result.model is not None and result.trained:
        log_path = args.log or (args.out + ".train.csv")
        _write_training_log(result.log, cfg, log_path)
    report_path = args.report or (args.out + ".report.json")
    _write_json(result.report(), report_path)
    return 0


def cmd_evaluate(args):
    a = load_volume(args.volume_a, args.format)
    b = load_volume(args.volume_b, args.format)
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    overall_psnr = psnr(a.data, b.data, args.peak)
    overall_ssim = ssim(a.data, b.data, args.peak)
    per_slice = []
    for k in range(a.data.shape[0]):
        p = psnr(a.data[k], b.data[k], args.peak)
        per_slice.append(
            {
                "slice": k,
                "psnr_db": "identical" if math.isinf(p) else p,
                "ssim": ssim_slice(a.data[k], b.data[k], args.peak),
            }
        )
    report = {
        "schema_version": 1,
        "psnr_db": "identical" if math.isinf(overall_psnr) else overall_psnr,
        "ssim": overall_ssim,
        "per_slice": per_slice,
    }
    if args.out:
        _write_json(report, args.out)
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="unstripe",
        description="Self-supervised stripe artifact removal for light-sheet stacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_seed=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--threads", type=int, default=1)
        if with_seed:
            p.add_argument("--seed", type=int, default=None, help="override config rng_seed")

    p = sub.add_parser("detect", help="localize corrupted Fourier bins")
    p.add_argument("input")
    p.add_argument("--format", default="raw_f32", choices=["raw_f32", "tiff_multipage"])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--direction", default="volume")
    p.add_argument("--report")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="generate (clean, stripes, degraded) triplet")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--shape", type=int, nargs=3, default=[8, 64, 64], metavar=("D", "H", "W"))
    p.add_argument("--stripe-model", help="JSON StripeModel to use instead of the default")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("destripe", help="full self-supervised restoration")
    p.add_argument("input")
    p.add_argument("--format", default="raw_f32", choices=["raw_f32", "tiff_multipage"])
    p.add_argument("--out", required=True)
    p.add_argument("--direction", default="volume")
    p.add_argument("--checkpoint", help="load parameters and skip training")
    p.add_argument("--save-checkpoint")
    p.add_argument("--log", help="training log CSV path")
    p.add_argument("--report")
    common(p)
    p.set_defaults(func=cmd_destripe)

    p = sub.add_parser("evaluate", help="PSNR/SSIM between two volumes")
    p.add_argument("volume_a")
    p.add_argument("volume_b")
    p.add_argument("--format", default="raw_f32", choices=["raw_f32", "tiff_multipage"])
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--out", help="write the metrics JSON here instead of stdout")
    common(p, with_seed=False)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

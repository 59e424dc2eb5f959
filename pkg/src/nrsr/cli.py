"""Command-line entry point.

Subcommands cover the whole pipeline: mask generation, sensor
simulation, two-phase training, reconstruction, evaluation, gradient
checking and shift-augmentation curves. Exit codes: 0 success, 2
usage/config error, 3 numerical failure.

Heavy imports happen inside the command handlers so that --threads (or
the NRSR_THREADS environment variable) can cap the BLAS thread pools
before numpy loads; --threads 1 gives the bit-exact single-threaded
mode.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

SENSOR_CHOICES = ("quarter", "three-quarter", "low-resolution")
SHIFT_FACTOR_CHOICES = (1, 2, 4, 8, 16)


def _set_threads(threads: int | None) -> None:
    if threads is None:
        env = os.environ.get("NRSR_THREADS")
        if not env:
            return
        threads = int(env)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrsr",
        description="Non-regular sampling sensor simulation and neural reconstruction.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("mask", help="generate a sampling mask file")
    p.add_argument("--kind", required=True, choices=("quarter", "three-quarter"),
                   help="sensor kind the mask is for")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--out", required=True, help="output NRSMASK file")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("sample", help="simulate a sensor on one image")
    p.add_argument("--sensor", required=True, choices=SENSOR_CHOICES, help="sensor kind")
    p.add_argument("--mask", help="NRSMASK file (required unless low-resolution)")
    p.add_argument("--in", dest="input", required=True, help="input PGM/PPM image")
    p.add_argument("--out", required=True, help="output base path (.f32 + .json sidecar)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="two-phase training (LFCR, then frozen-LFCR + VDSR)")
    p.add_argument("--sensor", required=True, choices=SENSOR_CHOICES, help="sensor kind")
    p.add_argument("--mask", help="NRSMASK file (required unless low-resolution)")
    p.add_argument("--data", required=True, help="directory of grayscale training images")
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--out", required=True, help="output directory (checkpoints + CSV logs)")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--batch-size", type=int, help="override config batch size")
    p.add_argument("--lr", type=float, help="override config initial learning rate")
    p.add_argument("--shift-da", type=int, choices=SHIFT_FACTOR_CHOICES,
                   help="shift data-augmentation factor (default: config shift set)")
    p.add_argument("--no-flips", action="store_true", help="disable flip/rotate augmentation")
    p.add_argument("--phase", choices=("both", "lfcr", "vdsr"), default="both",
                   help="which training phase(s) to run (default both)")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--resume", action="store_true",
                   help="continue from the latest checkpoint in --out")
    p.add_argument("--threads", type=int, help="BLAS thread cap (1 = bit-exact mode)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct image(s) from a checkpoint")
    p.add_argument("--sensor", required=True, choices=SENSOR_CHOICES, help="sensor kind")
    p.add_argument("--mask", help="NRSMASK file (required unless low-resolution)")
    p.add_argument("--checkpoint", required=True, help="NRSR1 checkpoint file")
    p.add_argument("--in", dest="input", required=True, help="input PGM/PPM image")
    p.add_argument("--out", required=True, help="output image (.pgm) or raw base (.f32)")
    p.add_argument("--stage", choices=("lfcr", "full"), default="full",
                   help="stop after LFCR or run LFCR+VDSR (default full)")
    p.add_argument("--threads", type=int, help="BLAS thread cap (1 = bit-exact mode)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report over a dataset directory")
    p.add_argument("--dataset", required=True, help="directory of PGM/PPM images")
    p.add_argument("--methods", default="bicubic",
                   help="comma list of reference,bicubic,lfcr,lfcr+vdsr (default bicubic)")
    p.add_argument("--checkpoint", help="NRSR1 checkpoint for the lfcr/lfcr+vdsr methods")
    p.add_argument("--out", help="write per-image CSV here (default stdout table)")
    p.add_argument("--summary", help="write dataset-mean summary JSON here")
    p.add_argument("--threads", type=int, help="BLAS thread cap (1 = bit-exact mode)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference validation of every operator")
    p.add_argument("--seed", type=int, default=0, help="seed for shapes and samples")
    p.add_argument("--tolerance", type=float, default=1e-4,
                   help="max relative error accepted (default 1e-4)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("curves", help="shift-augmentation PSNR-gain curve CSV")
    p.add_argument("--dataset", required=True, help="directory of PGM/PPM images")
    p.add_argument("--factors", default="1,4,8,16",
                   help="comma list of shift factors (default 1,4,8,16)")
    p.add_argument("--checkpoint-pattern", required=True,
                   help="checkpoint path template with {factor}, e.g. run-f{factor}/final.nrsr")
    p.add_argument("--stage", choices=("lfcr", "full"), default="full",
                   help="reconstruction stage to score (default full)")
    p.add_argument("--out", help="write curve CSV here (default stdout)")
    p.add_argument("--threads", type=int, help="BLAS thread cap (1 = bit-exact mode)")
    p.set_defaults(func=cmd_curves)

    return parser


def _load_mask_for(sensor: str, mask_path: str | None):
    from .masks import load_mask

    if sensor == "low-resolution":
        return None
    if not mask_path:
        raise UsageError(f"--mask is required for sensor '{sensor}'")
    mask = load_mask(mask_path)
    if mask.kind != sensor:
        raise UsageError(f"mask kind '{mask.kind}' does not match sensor '{sensor}'")
    return mask


class UsageError(ValueError):
    pass


def cmd_mask(args) -> int:
    from .masks import generate_mask, quadrant_histogram, save_mask

    mask = generate_mask(args.kind, args.seed)
    save_mask(mask, args.out)
    hist = quadrant_histogram(mask)
    print(f"wrote {args.out}")
    print("quadrant histogram: " + " ".join(f"{q}:{hist[q]}" for q in range(4)))
    return EXIT_OK


def cmd_sample(args) -> int:
    import numpy as np

    from .imageio import read_image_gray, save_raw
    from .sensors import sample_low_resolution, sample_quarter, sample_three_quarter

    mask = _load_mask_for(args.sensor, args.mask)
    image = np.asarray(read_image_gray(args.input), dtype=np.float32)
    meta = {"sensor": args.sensor, "source": os.path.basename(args.input),
            "mask": os.path.basename(args.mask) if args.mask else None,
            "hr_dims": list(image.shape)}
    if args.sensor == "quarter":
        values = sample_quarter(image, mask)
    elif args.sensor == "three-quarter":
        values = sample_three_quarter(image, mask).values
    else:
        values = sample_low_resolution(image).values
    raw, sidecar = save_raw(args.out, values, meta)
    print(f"wrote {raw} and {sidecar}")
    return EXIT_OK


def _load_dataset_images(data_dir: str):
    import numpy as np

    from .evaluate import list_dataset
    from .imageio import read_image_gray

    paths = list_dataset(data_dir)
    if not paths:
        raise UsageError(f"no PGM/PPM images found in {data_dir}")
    images = [np.asarray(read_image_gray(p), dtype=np.float32) for p in paths]
    return images, [p.name for p in paths]


def _find_resume(ckdir, prefix: str):
    from pathlib import Path

    files = sorted(Path(ckdir).glob(f"{prefix}-epoch*.nrsr"))
    return files[-1] if files else None


def cmd_train(args) -> int:
    from dataclasses import replace
    from pathlib import Path

    from .checkpoint import load_checkpoint, save_checkpoint
    from .lfcr import build_lfcr
    from .training import (SHIFT_FACTORS, TrainConfig, build_patch_set, load_config,
                           save_config, train_lfcr, train_vdsr, write_log_csv)
    from .vdsr import build_vdsr

    mask = _load_mask_for(args.sensor, args.mask)
    config = load_config(args.config) if args.config else TrainConfig()
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.lr is not None:
        overrides["initial_lr"] = args.lr
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.shift_da is not None:
        overrides["shift_set"] = SHIFT_FACTORS[args.shift_da]
    if args.no_flips:
        overrides["flips_rotations"] = False
    if overrides:
        config = replace(config, **overrides)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckdir = out / "checkpoints"
    save_config(config, out / "train_config.txt")

    images, ids = _load_dataset_images(args.data)
    patch_set = build_patch_set(images, config, image_ids=ids)
    print(f"training samples: {len(patch_set)} "
          f"({len(images)} images, shift x{len(config.shift_set)}, "
          f"flips {'x8' if config.flips_rotations else 'off'})")

    lfcr_model = None
    state = None
    start_epoch = 0
    resume_phase = "lfcr"
    if args.resume:
        latest_vdsr = _find_resume(ckdir, "vdsr")
        latest_lfcr = _find_resume(ckdir, "lfcr")
        latest = latest_vdsr or latest_lfcr
        if latest is not None:
            ck = load_checkpoint(latest)
            lfcr_model = ck.lfcr
            state = ck.adam
            start_epoch = ck.epoch
            resume_phase = ck.phase or "lfcr"
            print(f"resuming from {latest} (phase {resume_phase}, epoch {start_epoch})")

    if lfcr_model is None:
        lfcr_model = build_lfcr(mask, args.sensor, seed=config.seed)

    run_lfcr = args.phase in ("both", "lfcr") and resume_phase == "lfcr"
    run_vdsr = args.phase in ("both", "vdsr")
    vdsr_model = None

    if run_lfcr:
        res = train_lfcr(lfcr_model, patch_set, config, checkpoint_dir=ckdir,
                         state=state if resume_phase == "lfcr" else None,
                         start_epoch=start_epoch if resume_phase == "lfcr" else 0)
        write_log_csv(out / "lfcr_train_log.csv", res.rows)
        print(f"phase 1 done: {len(res.rows)} steps, "
              f"final epoch loss {res.epoch_losses[-1]:.6g}" if res.epoch_losses
              else "phase 1: nothing to do")
        state = None
        start_epoch = 0

    if run_vdsr:
        if args.resume and resume_phase == "vdsr":
            ck = load_checkpoint(_find_resume(ckdir, "vdsr"))
            vdsr_model = ck.vdsr
        if vdsr_model is None:
            vdsr_model = build_vdsr(seed=config.seed + 1)
        res = train_vdsr(lfcr_model, vdsr_model, patch_set, config, checkpoint_dir=ckdir,
                         state=state if resume_phase == "vdsr" else None,
                         start_epoch=start_epoch if resume_phase == "vdsr" else 0)
        write_log_csv(out / "vdsr_train_log.csv", res.rows)
        if res.epoch_losses:
            print(f"phase 2 done: {len(res.rows)} steps, "
                  f"final epoch loss {res.epoch_losses[-1]:.6g}")

    final = out / "final.nrsr"
    save_checkpoint(final, lfcr=lfcr_model, vdsr=vdsr_model)
    print(f"wrote {final}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    import numpy as np

    from .checkpoint import load_checkpoint
    from .evaluate import pad_to_multiple
    from .imageio import read_image_gray, save_raw, write_pgm
    from .lfcr import lfcr_forward
    from .vdsr import vdsr_forward

    mask = _load_mask_for(args.sensor, args.mask)
    ck = load_checkpoint(args.checkpoint)
    if ck.lfcr is None:
        raise UsageError(f"{args.checkpoint}: no LFCR model records")
    if ck.sensor_kind != args.sensor:
        raise UsageError(f"checkpoint was trained for sensor '{ck.sensor_kind}', "
                         f"not '{args.sensor}'")
    if mask is not None and ck.mask is not None and not np.array_equal(mask.pattern, ck.mask.pattern):
        raise UsageError("mask file does not match the checkpoint's mask pattern")
    if args.stage == "full" and ck.vdsr is None:
        raise UsageError(f"{args.checkpoint}: no VDSR records; use --stage lfcr")

    image = np.asarray(read_image_gray(args.input), dtype=np.float32)
    padded, (h, w) = pad_to_multiple(image)
    out = lfcr_forward(ck.lfcr, padded)
    if args.stage == "full":
        _, out = vdsr_forward(ck.vdsr, out)
    out = out[:h, :w]
    if args.out.endswith(".f32"):
        save_raw(args.out[: -len(".f32")], out,
                 {"sensor": args.sensor, "stage": args.stage,
                  "source": os.path.basename(args.input)})
    else:
        write_pgm(args.out, out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _checkpoint_models(path: str):
    from .checkpoint import load_checkpoint

    ck = load_checkpoint(path)
    if ck.lfcr is None:
        raise UsageError(f"{path}: no LFCR model records")
    return ck


def cmd_evaluate(args) -> int:
    from pathlib import Path

    from .evaluate import METHODS, evaluate

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method '{m}' (choose from {', '.join(METHODS)})")

    ck = None
    if args.checkpoint and Path(args.checkpoint).exists():
        ck = _checkpoint_models(args.checkpoint)

    reports = []
    absent = []
    for method in methods:
        if method in ("lfcr", "lfcr+vdsr"):
            if ck is None or (method == "lfcr+vdsr" and ck.vdsr is None):
                absent.append(method)
                continue
            reports.append(evaluate(method, args.dataset, lfcr=ck.lfcr, vdsr=ck.vdsr))
        else:
            reports.append(evaluate(method, args.dataset))

    csv_lines = ["image,method,sensor,psnr_db,ssim"]
    for rep in reports:
        csv_lines.extend(rep.to_csv().splitlines()[1:])
    for method in absent:
        csv_lines.append(f"absent,{method},absent,absent,absent")
    csv_text = "\n".join(csv_lines) + "\n"
    if args.out:
        Path(args.out).write_text(csv_text)
        print(f"wrote {args.out}")
    else:
        for rep in reports:
            print(f"== {rep.method} (sensor {rep.sensor}) ==")
            print(rep.table(), end="")
    if args.summary:
        import json

        summary = {rep.method: rep.summary() for rep in reports}
        for method in absent:
            summary[method] = {"method": method, "absent": True}
        Path(args.summary).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.summary}")
    for method in absent:
        print(f"method {method}: checkpoint missing, marked absent")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_standard_checks

    results = run_standard_checks(seed=args.seed)
    worst = 0.0
    for name, err in results.items():
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name:24s} max rel err {err:.3e}  {status}")
        worst = max(worst, err)
    if worst > args.tolerance:
        print(f"gradient check failed: {worst:.3e} > {args.tolerance:.1e}")
        return EXIT_NUMERIC
    print("all gradient checks passed")
    return EXIT_OK


def cmd_curves(args) -> int:
    import math
    from pathlib import Path

    from .evaluate import evaluate

    factors = []
    for part in args.factors.split(","):
        part = part.strip()
        if part:
            try:
                factors.append(int(part))
            except ValueError:
                raise UsageError(f"bad factor '{part}'")

    results: dict[int, float | None] = {}
    for factor in factors:
        path = Path(args.checkpoint_pattern.format(factor=factor))
        if not path.exists():
            results[factor] = None
            continue
        ck = _checkpoint_models(str(path))
        method = "lfcr" if (args.stage == "lfcr" or ck.vdsr is None) else "lfcr+vdsr"
        rep = evaluate(method, args.dataset, lfcr=ck.lfcr, vdsr=ck.vdsr)
        results[factor] = rep.mean_psnr

    base = results.get(factors[0]) if factors else None
    lines = ["factor,psnr_db,gain_db"]
    for factor in factors:
        v = results[factor]
        if v is None or math.isnan(v):
            lines.append(f"{factor},absent,absent")
        elif base is None or math.isnan(base):
            lines.append(f"{factor},{v:.4f},absent")
        else:
            lines.append(f"{factor},{v:.4f},{v - base:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(getattr(args, "threads", None))
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # covers usage, config, mask/checkpoint/image format and shape errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        # non-finite losses/gradients and friends
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``lfdiff {synth,train,sample,eval,convert,info}``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 non-finite loss.
``LFSR_THREADS`` caps BLAS worker threads.
"""

from __future__ import annotations

import os
import sys

_threads = os.environ.get("LFSR_THREADS")
if _threads:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse
import contextlib
import fcntl
import json
from pathlib import Path
from typing import List, Optional

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def _out_lock(directory: Path):
    """Advisory lock so two invocations do not write the same output dir."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / ".lfdiff.lock"
    fh = open(path, "w")
    try:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            raise UsageError(f"{directory} is in use by another lfdiff process") from exc
        yield
    finally:
        fh.close()
        with contextlib.suppress(OSError):
            path.unlink()


def _load_scenes(root):
    from .io import list_scenes, read_scene

    dirs = list_scenes(root)
    return dirs, [read_scene(d)[0] for d in dirs]


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    from .io import write_scene
    from .pipeline.synth import SyntheticSceneSpec, synth_scene

    spec = SyntheticSceneSpec.from_json(args.spec)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    out = Path(args.out)
    with _out_lock(out):
        for i in range(args.count):
            d = spec.to_dict()
            d["seed"] = spec.seed + i
            s = SyntheticSceneSpec(**d)
            lf, disp = synth_scene(s)
            write_scene(out / f"scene_{i:04d}", lf, disparity=disp, extra={"spec": s.to_dict()})
    print(f"wrote {args.count} scene(s) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .pipeline import (
        LossLog,
        ModelBundle,
        TrainConfig,
        build,
        load_bundle,
        make_patches,
        save_bundle,
        train_stage1,
        train_stage2,
    )

    cfg = TrainConfig.from_json(args.config)
    stage = "joint" if args.joint else args.stage
    _, scenes = _load_scenes(args.data)
    if not scenes:
        raise FileNotFoundError(f"{args.data}: no scenes found")
    data = make_patches(scenes, cfg.sr_scale, cfg.hr_patch, cfg.patch_stride)
    out = Path(args.out)
    with _out_lock(out):
        if stage == "2":
            if not args.encoder:
                raise UsageError("--stage 2 needs --encoder <stage-1 checkpoint> (or use --joint)")
            prev = load_bundle(args.encoder)
            bundle = build(cfg, with_head=False)
            bundle.encoder.load_state_dict(prev.encoder.state_dict())
        else:
            bundle = build(cfg, with_unet=stage != "1", with_head=stage in ("1", "both"))
        if stage in ("1", "both"):
            log = LossLog(out / "loss_stage1.csv")
            try:
                train_stage1(bundle.encoder, bundle.head, data, cfg, log=log)
            finally:
                log.close()
            save_bundle(out / "stage1.ckpt", ModelBundle(cfg, bundle.encoder, None, bundle.head, stage="1"))
            bundle.head = None
        if stage != "1":
            bundle.stage = "joint" if stage == "joint" else "2"
            bundle.direct = bool(args.direct)

            def snapshot(it):
                save_bundle(out / f"ckpt_{it:06d}.ckpt", bundle)

            log = LossLog(out / "loss.csv")
            try:
                train_stage2(
                    bundle.unet, bundle.encoder, data, cfg, joint=stage == "joint",
                    direct=args.direct, log=log, checkpoint=snapshot,
                )
            finally:
                log.close()
            save_bundle(out / "final.ckpt", bundle)
    print(f"training finished; checkpoints in {out}")
    return EXIT_OK


def _sample_bundle(path):
    from .pipeline import load_bundle

    bundle = load_bundle(path)
    if bundle.unet is None or bundle.stage == "1":
        raise ValueError(f"{path}: checkpoint has no denoiser (stage-1 only)")
    return bundle


def cmd_sample(args) -> int:
    from .io import read_scene, view_name, write_grid, write_png
    from .lightfield import LightField
    from .pipeline import infer

    if args.num_samples < 1:
        raise UsageError("--num-samples must be >= 1")
    bundle = _sample_bundle(args.ckpt)
    cfg = bundle.cfg
    if args.scale != cfg.sr_scale:
        raise ValueError(f"--scale {args.scale} does not match the checkpoint's scale {cfg.sr_scale}")
    lr, _ = read_scene(args.input)
    res = infer(
        bundle.unet, bundle.encoder, lr, args.num_samples, not args.deterministic, args.seed,
        cfg.diffusion.make_schedule(), cfg.sr_scale, bundle.residual_mode, cfg.residual_scale,
        clip_x0=cfg.diffusion.clip_x0,
    )
    out = Path(args.out)
    with _out_lock(out):
        for k, s in enumerate(res.samples):
            for u, v, img in LightField(s).views():
                write_png(out / f"sample{k}_{view_name(u, v)}", img)
        for u, v, img in res.sr.views():
            write_png(out / f"ensemble_{view_name(u, v)}", img)
        write_grid(out / "std_grid.png", LightField(res.std_map))
        meta = {
            "checkpoint": str(args.ckpt),
            "input": str(args.input),
            "num_samples": args.num_samples,
            "deterministic": bool(args.deterministic),
            "seed": args.seed,
            "scale": args.scale,
            "shape": list(res.sr.shape),
            "std_mean": float(res.std_map.mean()),
            "std_grid_note": "per-pixel std over samples, written unscaled (value 1.0 = white)",
        }
        (out / "result.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {res.K} sample(s), ensemble and std map to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .pipeline import evaluate

    if args.num_samples < 1:
        raise UsageError("--num-samples must be >= 1")
    bundle = _sample_bundle(args.ckpt)
    dirs, scenes = _load_scenes(args.data)
    if not scenes:
        raise FileNotFoundError(f"{args.data}: no scenes found")
    cfg = bundle.cfg
    report, _ = evaluate(
        bundle.unet, bundle.encoder, scenes, args.num_samples, cfg.diffusion.make_schedule(),
        cfg.sr_scale, stochastic=not args.deterministic, seed=args.seed,
        residual_mode=bundle.residual_mode, residual_scale=cfg.residual_scale,
        names=[d.name for d in dirs], clip_x0=cfg.diffusion.clip_x0,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    agg = report["aggregate"]
    for key in ("bicubic", "single", "single_mean_mse", "ensemble"):
        print(f"{key:16s} PSNR {agg[key]['psnr']:.3f} dB")
    return EXIT_OK


def cmd_convert(args) -> int:
    from .io import read_png, read_scene, read_scene_meta, write_grid, write_scene
    from .lightfield import from_sai_grid

    if args.grid:
        if args.u is None or args.v is None or not args.out:
            raise UsageError("--grid needs --u, --v and --out")
        img, bits = read_png(args.grid, with_bits=True)
        if bits == 8 and not np.array_equal(np.round(img * 255.0) / 255.0, img):
            bits = 16  # luma from RGB needs the finer grid
        lf = from_sai_grid(img, args.u, args.v)
        write_scene(args.out, lf, bits=bits, extra={"bits": bits})
        print(f"wrote {args.u * args.v} views to {args.out}")
    else:
        if not args.dir or not args.grid_out:
            raise UsageError("use either --grid/--u/--v/--out or --dir/--grid-out")
        lf, _ = read_scene(args.dir)
        bits = int(read_scene_meta(args.dir).get("bits", 16))
        write_grid(args.grid_out, lf, bits=bits)
        print(f"wrote grid {args.grid_out}")
    return EXIT_OK


def cmd_info(args) -> int:
    from .checkpoint import parameter_count, read_header, load_checkpoint

    header, _, _ = read_header(args.ckpt)
    load_checkpoint(args.ckpt)  # validates payload extents
    print("config:")
    print(json.dumps(header["config"], indent=2, sort_keys=True))
    print(f"parameters: {parameter_count(header)}")
    print("tensors:")
    for name, e in header["tensors"].items():
        print(f"  {name:48s} {e['dtype']:8s} {tuple(e['shape'])!s:20s} @ {e['offset']}")
    return EXIT_OK


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lfdiff", description="Diffusion light-field super-resolution toolchain")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="render synthetic layered scenes")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train the encoder and/or the denoiser")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--stage", choices=["1", "2", "joint", "both"], default="both")
    s.add_argument("--joint", action="store_true", help="train encoder and denoiser together")
    s.add_argument("--direct", action="store_true", help="diffuse HR images instead of residuals")
    s.add_argument("--encoder", help="stage-1 checkpoint providing the frozen encoder")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="super-resolve one LR scene")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--scale", type=int, required=True)
    s.add_argument("--num-samples", type=int, default=1)
    s.add_argument("--deterministic", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("eval", help="score HR scenes against their degraded copies")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--num-samples", type=int, default=1)
    s.add_argument("--deterministic", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("convert", help="SAI grid image <-> scene directory")
    s.add_argument("--grid")
    s.add_argument("--u", type=int)
    s.add_argument("--v", type=int)
    s.add_argument("--out")
    s.add_argument("--dir")
    s.add_argument("--grid-out")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("info", help="print a checkpoint's config and tensor directory")
    s.add_argument("--ckpt", required=True)
    s.set_defaults(func=cmd_info)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    from .checkpoint import CheckpointError
    from .io import DataError
    from .pipeline import ConfigError, DataEmptyError, NumericalError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lfdiff {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"lfdiff {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DataError, CheckpointError, DataEmptyError, OSError, ValueError, KeyError) as exc:
        print(f"lfdiff {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

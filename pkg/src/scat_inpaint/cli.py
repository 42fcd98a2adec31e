"""Command-line entry points: train, eval, infer, make-masks, serve.

Exit codes: 0 success, 1 runtime abort, 2 bad configuration or arguments,
3 empty filename intersection in eval, 4 infer size mismatch without
--resize.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from PIL import Image

from .errors import ScatInpaintError, TrainingDiverged
from .masks import (
    BrushParams,
    generate_freeform_mask,
    load_mask,
    mask_ratio,
    save_mask,
    write_manifest,
)
from .metrics import InceptionV3Extractor, evaluate
from .service import (
    ServiceConfig,
    inpaint_u8,
    load_frozen_generator,
    serve_forever,
)
from .trainer import fit, load_train_config

CHECKPOINT_ENV = "SCAT_INPAINT_CHECKPOINT"

EXIT_OK = 0
EXIT_ABORT = 1
EXIT_BAD_CONFIG = 2
EXIT_EMPTY_EVAL = 3
EXIT_SIZE_MISMATCH = 4


def _fail(code: int, message: str) -> int:
    print(f"scat-inpaint: {message}", file=sys.stderr)
    return code


def cmd_train(args) -> int:
    try:
        config = load_train_config(args.config)
        fit(config, resume_from=args.resume)
    except TrainingDiverged as exc:
        return _fail(EXIT_ABORT, str(exc))
    except ScatInpaintError as exc:
        return _fail(EXIT_BAD_CONFIG, str(exc))
    return EXIT_OK


def _png_names(directory: str) -> set:
    return {f for f in os.listdir(directory) if f.lower().endswith(".png")}


def cmd_eval(args) -> int:
    for d in (args.results, args.truth, args.masks):
        if not os.path.isdir(d):
            return _fail(EXIT_BAD_CONFIG, f"directory not found: {d}")
    common = _png_names(args.results) & _png_names(args.truth) & _png_names(args.masks)
    if not common:
        return _fail(
            EXIT_EMPTY_EVAL, "no filenames shared by results, truth, and masks"
        )
    extractor = None
    if args.extractor_weights:
        try:
            extractor = InceptionV3Extractor(args.extractor_weights)
        except ScatInpaintError as exc:
            return _fail(EXIT_BAD_CONFIG, str(exc))
    else:
        print(
            "scat-inpaint: no --extractor-weights given, FID will be null",
            file=sys.stderr,
        )
    try:
        report = evaluate(
            args.results,
            args.truth,
            args.masks,
            extractor=extractor,
            mask_invert=args.mask_invert,
        )
    except ScatInpaintError as exc:
        return _fail(EXIT_ABORT, str(exc))
    with open(args.report_out, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")
    print(report.render_table())
    return EXIT_OK


def cmd_infer(args) -> int:
    checkpoint = args.checkpoint or os.environ.get(CHECKPOINT_ENV)
    if not checkpoint:
        return _fail(
            EXIT_BAD_CONFIG,
            f"no checkpoint: pass --checkpoint or set {CHECKPOINT_ENV}",
        )
    try:
        generator, _, _ = load_frozen_generator(checkpoint)
        img = Image.open(args.image)
        img.load()
        image_u8 = np.asarray(img.convert("RGB"), dtype=np.uint8)
        mask = load_mask(args.mask, invert=args.mask_invert)
    except (ScatInpaintError, OSError) as exc:
        return _fail(EXIT_BAD_CONFIG, str(exc))

    if mask.shape != image_u8.shape[:2]:
        if not args.resize:
            return _fail(
                EXIT_SIZE_MISMATCH,
                f"mask is {mask.shape[::-1]}, image is {image_u8.shape[1::-1]}; "
                "pass --resize to rescale the mask",
            )
        # nearest keeps the mask binary
        resized = Image.fromarray((mask * 255).astype(np.uint8), mode="L").resize(
            (image_u8.shape[1], image_u8.shape[0]), Image.NEAREST
        )
        mask = (np.asarray(resized) >= 128).astype(np.float32)

    out = inpaint_u8(generator, image_u8, mask, raw=args.raw)
    Image.fromarray(out, mode="RGB").save(args.out, format="PNG")
    return EXIT_OK


def cmd_make_masks(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        brush = BrushParams(
            num_strokes=tuple(args.num_strokes),
            num_vertices=tuple(args.num_vertices),
            width_frac=tuple(args.width_frac),
            segment_frac=tuple(args.segment_frac),
            angle_jitter=args.angle_jitter,
            num_rects=tuple(args.num_rects),
            rect_frac=tuple(args.rect_frac),
        )
    except ScatInpaintError as exc:
        return _fail(EXIT_BAD_CONFIG, str(exc))
    files, ratios = [], []
    for i in range(args.count):
        m = generate_freeform_mask(args.size, args.size, seed=args.seed + i, brush=brush)
        path = os.path.join(args.out_dir, f"mask_{i:05d}.png")
        save_mask(m, path)
        files.append(path)
        ratios.append(mask_ratio(m))
    write_manifest(files, ratios, os.path.join(args.out_dir, "manifest.json"))
    print(f"wrote {args.count} masks to {args.out_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    checkpoint = args.checkpoint or os.environ.get(CHECKPOINT_ENV)
    if not checkpoint:
        return _fail(
            EXIT_BAD_CONFIG,
            f"no checkpoint: pass --checkpoint or set {CHECKPOINT_ENV}",
        )
    try:
        config = ServiceConfig(
            checkpoint_path=checkpoint,
            port=args.port,
            max_concurrent_inferences=args.max_concurrent,
            max_image_dim=args.max_image_dim,
        )
        serve_forever(config, host=args.host, frontend_dir=args.frontend_dir)
    except ScatInpaintError as exc:
        return _fail(EXIT_BAD_CONFIG, str(exc))
    return EXIT_OK


def _range_arg(parser, name: str, default: tuple, typ=float, help=""):
    parser.add_argument(
        name, nargs=2, type=typ, default=list(default), metavar=("LO", "HI"), help=help
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scat-inpaint",
        description="Train, evaluate, and serve the inpainting model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run training from a JSON config")
    p.add_argument("config", help="path to a TrainConfig JSON file")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("results")
    p.add_argument("truth")
    p.add_argument("masks")
    p.add_argument("report_out", help="where to write the JSON report")
    p.add_argument("--extractor-weights", default=None, help="inception weights file")
    p.add_argument("--mask-invert", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="inpaint one image with one mask")
    p.add_argument("image")
    p.add_argument("mask")
    p.add_argument("out")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--resize", action="store_true", help="rescale mask to the image")
    p.add_argument("--raw", action="store_true", help="write the raw generator output")
    p.add_argument("--mask-invert", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("make-masks", help="generate a mask set with a manifest")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    d = BrushParams()
    _range_arg(p, "--num-strokes", d.num_strokes, typ=int)
    _range_arg(p, "--num-vertices", d.num_vertices, typ=int)
    _range_arg(p, "--width-frac", d.width_frac)
    _range_arg(p, "--segment-frac", d.segment_frac)
    p.add_argument("--angle-jitter", type=float, default=d.angle_jitter)
    _range_arg(p, "--num-rects", d.num_rects, typ=int)
    _range_arg(p, "--rect-frac", d.rect_frac)
    p.set_defaults(func=cmd_make_masks)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-concurrent", type=int, default=2)
    p.add_argument("--max-image-dim", type=int, default=1024)
    p.add_argument(
        "--frontend-dir",
        default="frontend/dist",
        help="static UI bundle to serve at / (skipped if absent)",
    )
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScatInpaintError as exc:
        return _fail(EXIT_ABORT, str(exc))


def entrypoint():
    sys.exit(main())

#!/usr/bin/env python3
"""Run the four-ablation smoke matrix on synthetic textures and print a
per-mode summary of the reconstruction curve.

Usage:
    python3 scripts/smoke_ablations.py out/smoke --steps 200 --size 64
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from scat_inpaint.data import save_unit_image, signed_to_unit, synthetic_textures
from scat_inpaint.losses import ABLATION_MODES
from scat_inpaint.networks import NetworkSettings
from scat_inpaint.trainer import OptimizerSettings, TrainConfig, fit

SMOKE_NETS = NetworkSettings(
    generator_base=16,
    generator_blocks=2,
    dilation_rates=(1, 2, 4, 8),
    discriminator_base=16,
    discriminator_taps=3,
    segmentation_base=8,
    segmentation_depth=3,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--images", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--g-lr", type=float, default=1e-3,
                        help="generator lr; 1e-3 clears the early textural hump at this scale")
    args = parser.parse_args()

    data_dir = os.path.join(args.out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)
    for i, img in enumerate(synthetic_textures(args.images, args.size, seed=1)):
        save_unit_image(signed_to_unit(img), os.path.join(data_dir, f"tex_{i:03d}.png"))

    for ablation in ABLATION_MODES:
        run_dir = os.path.join(args.out_dir, f"run_{ablation}")
        config = TrainConfig(
            dataset_dir=data_dir,
            out_dir=run_dir,
            image_size=args.size,
            batch_size=8,
            max_steps=args.steps,
            optimizer=OptimizerSettings(g_lr=args.g_lr),
            networks=SMOKE_NETS,
            ablation=ablation,
            seed=args.seed,
            checkpoint_every=0,
            log_every=1,
        )
        start = time.time()
        fit(config)
        elapsed = time.time() - start
        lines = [
            json.loads(l)
            for l in open(os.path.join(run_dir, "train_log.jsonl"))
        ]
        recs = [l["rec"] for l in lines]
        print(
            f"{ablation:>10}: rec {recs[0]:.4f} -> {recs[-1]:.4f} "
            f"(x{recs[-1] / recs[0]:.3f}), total_G {lines[-1]['total_G']:.3f}, "
            f"{elapsed:.0f}s for {args.steps} steps"
        )


if __name__ == "__main__":
    main()

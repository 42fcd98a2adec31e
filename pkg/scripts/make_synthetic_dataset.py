#!/usr/bin/env python3
"""Write a folder of synthetic texture PNGs for smoke runs and demos.

Usage:
    python3 scripts/make_synthetic_dataset.py out/textures --count 16 --size 64
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from scat_inpaint.data import save_unit_image, signed_to_unit, synthetic_textures


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--count", type=int, default=16)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    imgs = synthetic_textures(args.count, args.size, seed=args.seed)
    for i, img in enumerate(imgs):
        path = os.path.join(args.out_dir, f"tex_{i:04d}.png")
        save_unit_image(signed_to_unit(img), path)
    print(f"wrote {args.count} images ({args.size}x{args.size}) to {args.out_dir}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Write a folder of synthetic face images for desk-scale experiments.

The faces are procedurally drawn (no downloads, no personal data) and are
deterministic per seed, so datasets regenerate bit-identically anywhere.
With --identities > 0 the images are grouped as jittered variations of that
many base faces, which is the layout the recognition experiment expects.
"""

from __future__ import annotations

import argparse

from facefill import make_face_dataset, make_identity_dataset
from facefill.data import save_image_folder


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--count", type=int, default=64, help="number of faces")
    ap.add_argument("--size", type=int, default=128, help="image side in pixels")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--identities", type=int, default=0, help="group images as N identities (count becomes images per identity)")
    args = ap.parse_args(argv)

    if args.identities > 0:
        groups = make_identity_dataset(args.identities, args.count, size=args.size, seed=args.seed)
        written = 0
        for identity, images in groups.items():
            written += len(save_image_folder(images, f"{args.out}/{identity}"))
        print(f"wrote {written} images for {args.identities} identities under {args.out}")
        return 0
    images = make_face_dataset(args.count, size=args.size, seed=args.seed)
    paths = save_image_folder(images, args.out)
    print(f"wrote {len(paths)} images to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

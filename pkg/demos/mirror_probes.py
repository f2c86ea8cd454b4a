"""Render mirror-ball probes at several points of the box room.

The light field of a single panorama is re-projected to each probe center,
so probes near a wall see that wall (and the lamp on the ceiling) grow.
Writes one PNG per probe and prints the fraction of directly filled
directions, which drops as the probe moves away from the camera.

    python demos/mirror_probes.py [--out /tmp/probes]
"""

import argparse
import os

import numpy as np

from panorelight import envlight, io, render, synth

POINTS = {
    "camera": (0.0, 0.0, 0.0),
    "near_lamp": (0.0, 0.9, 0.0),
    "floor": (0.5, -1.0, 0.3),
    "corner": (1.2, -0.6, 1.2),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--height", type=int, default=256)
    ap.add_argument("--out", default="probes")
    args = ap.parse_args()

    scene = synth.BoxScene(texture=True)
    gt = synth.render_ground_truth(scene, None, (args.height, 2 * args.height))
    lights = envlight.build_light_field(gt["image"], gt["depth"])
    os.makedirs(args.out, exist_ok=True)
    for name, at in POINTS.items():
        at = np.asarray(at)
        illum = envlight.reconstruct_illumination(lights, at, (128, 256))
        patch, mask = render.render_mirror_probe(lights, at, 0.1, [0.0, 0.0, 1.0], (128, 128),
                                                 (128, 256))
        io.write_png(os.path.join(args.out, f"{name}_mirror.png"), patch, exposure=0.5,
                     alpha=mask)
        io.write_png(os.path.join(args.out, f"{name}_map.png"), illum.radiance, exposure=0.5)
        print(f"{name:10s} at {at}: {illum.filled_mask.mean():.1%} directly filled")
    print(f"wrote {2 * len(POINTS)} images to {args.out}")


if __name__ == "__main__":
    main()

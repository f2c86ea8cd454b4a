"""Walk through the whole pipeline on the synthetic box room.

Renders a vertical stereo pair, recovers depth, builds the light field,
decomposes the top image into normals, shading and reflectance, refines
the last two, and prints how each stage compares with the ground truth.

    python demos/box_room_walkthrough.py [--height 128] [--out /tmp/walkthrough]
"""

import argparse
import os
import time

import numpy as np

from panorelight import envlight, geometry, io, metrics, refine, render, stereo, synth
from panorelight.equirect import CameraRig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--height", type=int, default=128)
    ap.add_argument("--illum-height", type=int, default=64)
    ap.add_argument("--iterations", type=int, default=1000)
    ap.add_argument("--out", default=None, help="write PNG previews here")
    args = ap.parse_args()

    h, w = args.height, 2 * args.height
    scene = synth.BoxScene(texture=True)
    rig = CameraRig(0.2)

    t = time.perf_counter()
    pair = synth.generate_stereo_pair(scene, rig, (h, w), supersample=2)
    truth = pair["truth"]
    print(f"stereo pair {h}x{w}: {time.perf_counter() - t:.1f} s")

    t = time.perf_counter()
    disp = stereo.match_vertical(pair["top"], pair["bottom"],
                                 stereo.MatchConfig(max_disparity=max(8, h // 8)))
    depth = stereo.disparity_to_depth(disp, rig)
    m = depth.mask
    rel = np.abs(depth.values[m] - truth["depth"][m]) / truth["depth"][m]
    print(f"depth: {m.mean():.0%} valid, median relative error {np.median(rel):.2%}"
          f" ({time.perf_counter() - t:.1f} s)")
    dense = depth.filled()

    t = time.perf_counter()
    lights = envlight.build_light_field(pair["top"], dense, rig)
    normals = geometry.normals_from_depth(dense, rig)
    mae = metrics.mae_degrees(normals.values, truth["normal"], normals.mask)
    print(f"normals: MAE {mae:.2f} deg on {normals.mask.mean():.0%} of pixels")

    cfg = render.RenderConfig(illum_resolution=(args.illum_height, 2 * args.illum_height),
                              stride=2)
    shading = render.render_shading(lights, dense, normals, rig, cfg)
    R0 = geometry.reflectance_init(pair["top"], shading)
    print(f"shading + reflectance: {time.perf_counter() - t:.1f} s;"
          f" sMSE(S) {metrics.smse(shading, truth['shading']):.4f},"
          f" sMSE(R) {metrics.smse(R0.values, truth['reflectance']):.4f}")

    t = time.perf_counter()
    R, S, trace = refine.tv_refine(pair["top"], R0, shading,
                                   refine.RefineConfig(iterations=args.iterations))
    s = trace.scales[-1]
    closure = np.sqrt(np.mean((pair["top"] - s * R * S) ** 2)) / np.sqrt(np.mean(pair["top"]**2))
    print(f"refine: energy {trace.energies[0]:.4g} -> {trace.energies[-1]:.4g},"
          f" closure {closure:.2%}, sMSE(R) {metrics.smse(R, truth['reflectance']):.4f}"
          f" ({time.perf_counter() - t:.1f} s)")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        io.write_png(os.path.join(args.out, "top.png"), pair["top"], exposure=0.5)
        io.write_normal_png(os.path.join(args.out, "normal.png"), normals.values)
        io.write_png(os.path.join(args.out, "shading.png"), S * s, exposure=0.5)
        io.write_png(os.path.join(args.out, "reflectance.png"), R / max(R.max(), 1e-9))
        print(f"previews in {args.out}")


if __name__ == "__main__":
    main()

"""Acceptance criteria 1-11, one PASS/FAIL line each.

Every test records its measurement with :func:`_record`, which prints the
line immediately and keeps it for the end-of-session summary (see
``conftest.py``). Run standalone with ``python tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from panorelight import envlight, geometry, metrics, refine, render, stereo, synth
from panorelight.equirect import CameraRig, dir_to_pixel, pixel_solid_angle, pixel_to_dir

RESULTS = []


def _record(number, title, ok, detail, elapsed, budget):
    in_time = elapsed < budget
    passed = bool(ok and in_time)
    line = (f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}; "
            f"runtime {elapsed:.1f} s (limit {budget:g} s)")
    RESULTS.append(line)
    print(line)
    return passed


def _rel_rms(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)) / np.sqrt(np.mean(b**2)))


def test_criterion_01_triangulation_round_trip():
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 10_000
    theta = rng.uniform(0.01, np.pi - 0.02, n)
    delta = rng.uniform(0.001, 1.0, n) * (np.pi - theta - 0.005)
    b = rng.uniform(0.05, 1.0, n)
    depth = stereo.depth_from_disparity(theta, delta, b)
    back = stereo.disparity_from_depth(theta, depth, b)
    err = float(np.max(np.abs(back - delta) / delta))
    ok = bool(np.all(np.isfinite(depth)) and err < 1e-9)
    assert _record(1, "triangulation exactness", ok, f"max relative error {err:.2e} (< 1e-9)",
                   time.perf_counter() - t, 1.0)


def test_criterion_02_projection_invariants():
    t = time.perf_counter()
    dims = (512, 1024)
    rng = np.random.default_rng(2)
    u = rng.uniform(0, dims[1], 100_000)
    v = rng.uniform(0.01, dims[0] - 1, 100_000)
    u2, v2 = dir_to_pixel(pixel_to_dir(u, v, dims), dims)
    du = np.abs(u2 - u)
    du = np.minimum(du, dims[1] - du)
    px = float(max(du.max(), np.abs(v2 - v).max()))
    total = float(pixel_solid_angle(np.arange(dims[0]), dims).sum() * dims[1])
    ok = px < 1e-6 and abs(total - 4 * np.pi) < 1e-3
    assert _record(2, "projection invariants", ok,
                   f"round trip {px:.2e} px (< 1e-6); solid-angle sum - 4 pi = "
                   f"{total - 4 * np.pi:.2e} (|.| < 1e-3)", time.perf_counter() - t, 5.0)


def test_criterion_03_illumination_identity():
    t = time.perf_counter()
    scene = synth.BoxScene(texture=True)
    gt = synth.render_ground_truth(scene, None, (512, 1024))
    lights = envlight.build_light_field(gt["image"], gt["depth"])
    illum = envlight.reconstruct_illumination(lights, np.zeros(3), (512, 1024))
    value = metrics.psnr(illum.radiance, gt["image"], illum.filled_mask)
    ok = value > 30
    assert _record(3, "illumination identity", ok,
                   f"PSNR {value:.1f} dB over {illum.filled_mask.mean():.1%} filled (> 30)",
                   time.perf_counter() - t, 30.0)


def test_criterion_04_irradiance_oracle():
    t = time.perf_counter()
    L = 0.8
    src = (128, 256)
    lights = envlight.build_light_field(np.full(src + (3,), L), np.full(src, 4.0))
    illum = envlight.reconstruct_illumination(lights, np.zeros(3), (128, 256))
    rng = np.random.default_rng(4)
    normals = rng.normal(size=(100, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    cfg = render.RenderConfig(illum_resolution=(128, 256))
    shade = np.array([render.shade_point(illum, n, cfg) for n in normals])
    err = float(np.max(np.abs(shade - np.pi * L)) / (np.pi * L))
    ok = err < 0.01
    assert _record(4, "irradiance oracle", ok, f"max relative error {err:.2e} (< 1%)",
                   time.perf_counter() - t, 10.0)


def test_criterion_05_patch_light_oracle():
    t = time.perf_counter()
    scene = synth.BoxScene(texture=False)
    src = synth.render_ground_truth(scene, None, (256, 512))
    emitters = envlight.build_light_field(src["emission"], src["depth"])
    probe = synth.render_ground_truth(scene, None, (16, 32))
    cfg = render.RenderConfig(illum_resolution=(256, 512))
    shade = render.render_shading(emitters, probe["depth"], probe["normal"], cfg=cfg)
    world = probe["points"] + scene.camera_top
    mc = synth.monte_carlo_irradiance(world, probe["normal"], scene.emitters[0],
                                      scene.half_extents, 100_000, rng=5).reshape(shade.shape)
    err = _rel_rms(shade, mc)
    ok = err < 0.02
    assert _record(5, "patch-light oracle", ok,
                   f"relative RMS vs Monte Carlo {err:.2%} (< 2%), 256x512 maps",
                   time.perf_counter() - t, 120.0)


def test_criterion_06_stereo_accuracy():
    t = time.perf_counter()
    rig = CameraRig(0.2)
    pair = synth.generate_stereo_pair(synth.BoxScene(texture=True), rig, (512, 1024),
                                      supersample=2)
    disp = stereo.match_vertical(pair["top"], pair["bottom"])
    depth = stereo.disparity_to_depth(disp, rig)
    gt = pair["truth"]["depth"]
    m = depth.mask
    rel = float(np.median(np.abs(depth.values[m] - gt[m]) / gt[m]))
    ok = rel < 0.02
    assert _record(6, "stereo accuracy", ok,
                   f"median relative depth error {rel:.2%} over {m.mean():.0%} valid (< 2%)",
                   time.perf_counter() - t, 120.0)


def test_criterion_07_normals():
    t = time.perf_counter()
    h = 512
    gt = synth.render_ground_truth(synth.BoxScene(), None, (h, 2 * h))
    nm = geometry.normals_from_depth(gt["depth"])
    band = int(np.ceil(0.05 * h))
    m = nm.mask.copy()
    m[:band] = m[-band:] = False
    mae = metrics.mae_degrees(nm.values, gt["normal"], m)
    ok = mae < 5.0
    assert _record(7, "normals from depth", ok, f"MAE {mae:.2f} deg (< 5)",
                   time.perf_counter() - t, 10.0)


def test_criterion_08_gradient_correctness():
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for k in range(20):
        I = rng.uniform(0, 2, (4, 8, 3))
        R = rng.uniform(0.1, 1, (4, 8, 3))
        S = rng.uniform(0.1, 2, (4, 8, 3))
        worst = max(worst, refine.numeric_gradient_check(I, R, S, probes=20, rng=k))
    ok = worst < 1e-4
    assert _record(8, "gradient correctness", ok, f"max relative error {worst:.2e} (< 1e-4)",
                   time.perf_counter() - t, 5.0)


def test_criterion_09_refinement_efficacy():
    t = time.perf_counter()
    gt = synth.render_ground_truth(synth.BoxScene(texture=True), None, (256, 512))
    R, S = gt["reflectance"], gt["shading"]
    I = R * S
    rng = np.random.default_rng(9)
    R0 = np.clip(R * (1 + 0.05 * rng.standard_normal(R.shape)), 0, None)
    Rn, Sn, trace = refine.tv_refine(I, R0, S)
    rms0 = float(np.sqrt(np.mean((I - refine.fit_scale(I, R0, S) * R0 * S) ** 2)))
    rms1 = float(np.sqrt(np.mean((I - trace.scales[-1] * Rn * Sn) ** 2)))
    mono = bool(np.all(np.diff(trace.energies) <= 0))
    e0, e1 = metrics.smse(R0, R), metrics.smse(Rn, R)
    reduction = 1 - rms1 / rms0
    ok = mono and reduction >= 0.5 and e1 < e0
    assert _record(9, "refinement efficacy", ok,
                   f"energy non-increasing {mono}; RMS reduced {reduction:.1%} (>= 50%); "
                   f"sMSE {e0:.3e} -> {e1:.3e}", time.perf_counter() - t, 180.0)


def test_criterion_10_metric_identities():
    t = time.perf_counter()
    rng = np.random.default_rng(10)
    ok = True
    for _ in range(200):
        pred = rng.uniform(0, 1, (4, 8, 3))
        gt = rng.uniform(0.1, 1, (4, 8, 3))
        a = float(rng.uniform(1e-3, 1e3))
        ok &= abs(metrics.smse(a * pred, gt) - metrics.smse(pred, gt)) <= 1e-12
        n1 = rng.normal(size=(4, 8, 3))
        n2 = rng.normal(size=(4, 8, 3))
        n1 /= np.linalg.norm(n1, axis=-1, keepdims=True)
        n2 /= np.linalg.norm(n2, axis=-1, keepdims=True)
        m12, m21 = metrics.mae_degrees(n1, n2), metrics.mae_degrees(n2, n1)
        ok &= 0.0 <= m12 <= 180.0 and abs(m12 - m21) < 1e-12
        noise = rng.normal(size=gt.shape)
        p = [metrics.psnr(gt + k * noise, gt, peak=1.0) for k in (0.01, 0.02, 0.04)]
        ok &= p[0] > p[1] > p[2]
    ok &= metrics.mae_degrees(n1, -n1) == pytest.approx(180.0)
    ok &= metrics.psnr(gt, gt) == float("inf")
    assert _record(10, "metric identities", bool(ok), "200 randomized cases",
                   time.perf_counter() - t, 5.0)


def test_criterion_11_end_to_end_closure(tmp_path):
    import json

    from panorelight.cli import main

    t = time.perf_counter()
    d = str(tmp_path)
    steps = [
        ["synth", "--out", d, "--height", "128"],
        ["depth", "--manifest", d, "--max-disparity", "24"],
        ["lightfield", "--manifest", d],
        ["decompose", "--manifest", d, "--illum-height", "64", "--stride", "2"],
        ["refine", "--manifest", d],
    ]
    codes = [main(s) for s in steps]
    with open(tmp_path / "manifest.json") as f:
        closure = json.load(f)["stages"]["refine"]["closure_relative_rms"]
    ok = codes == [0] * 5 and closure < 0.05
    assert _record(11, "end-to-end closure", ok,
                   f"relative RMS of I - sRS {closure:.2%} (< 5%) at 128x256",
                   time.perf_counter() - t, 600.0)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

"""The compiled kernels must agree exactly with the numpy reference paths."""

import numpy as np
import pytest

from panorelight import _kernels
from panorelight.envlight import build_light_field, project_lights, resolve_zbuffer
from panorelight.render import RenderConfig, render_shading, render_shading_reference
from panorelight.synth import BoxScene, render_ground_truth


@pytest.fixture(scope="module")
def scene_lights():
    scene = BoxScene(texture=True)
    src = render_ground_truth(scene, None, (32, 64))
    probe = render_ground_truth(scene, None, (4, 8))
    return build_light_field(src["image"], src["depth"]), probe


@pytest.mark.parametrize("tol", [0.0, 0.05])
def test_zbuffer_kernel_matches_numpy(scene_lights, tol):
    lights, probe = scene_lights
    dims = (16, 32)
    for q in probe["points"].reshape(-1, 3)[::5]:
        src, _ = _kernels.zbuffer(lights.positions, q, dims, 1e-4, tol)
        ref = resolve_zbuffer(project_lights(lights, q, dims), dims, tol)
        filled = src >= 0
        np.testing.assert_array_equal(filled, ref.filled_mask.reshape(-1))
        np.testing.assert_array_equal(lights.intensities[src[filled]],
                                      ref.radiance.reshape(-1, 3)[filled])


@pytest.mark.parametrize("tol", [0.0, 0.05])
@pytest.mark.parametrize("weighting", ["solid_angle", "uniform"])
def test_shading_kernel_matches_reference(scene_lights, tol, weighting):
    lights, probe = scene_lights
    cfg = RenderConfig(illum_resolution=(16, 32), depth_tolerance=tol, weighting=weighting)
    fast = render_shading(lights, probe["depth"], probe["normal"], cfg=cfg)
    slow = render_shading_reference(lights, probe["depth"], probe["normal"], cfg)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-14)


def test_shading_is_deterministic_across_thread_counts(scene_lights):
    import numba

    lights, probe = scene_lights
    runs = []
    for n in sorted({1, numba.config.NUMBA_NUM_THREADS}):
        cfg = RenderConfig(illum_resolution=(16, 32), threads=n)
        runs.append(render_shading(lights, probe["depth"], probe["normal"], cfg=cfg))
    for r in runs[1:]:
        np.testing.assert_array_equal(r, runs[0])


def test_grid_tables_shapes():
    cos_t, sin_t, cos_du, cos_dv = _kernels.grid_tables((4, 8))
    assert cos_t.shape == (4,) and cos_du.shape == (9,) and cos_dv.shape == (5,)
    assert cos_du[0] == 1.0 and cos_du[4] == pytest.approx(-1.0)

"""Diffuse shading from illumination maps, image reconstruction, mirror probes."""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .envlight import EPS_NEAR, reconstruct_illumination
from .equirect import check_dims, dir_to_pixel, direction_grid, pixel_solid_angle, sample
from .errors import DomainError


@dataclass
class RenderConfig:
    """Shading options.

    ``weighting="solid_angle"`` weights every illumination-map pixel by its
    solid angle; ``"uniform"`` uses the plain unweighted sum, scaled by
    ``4 pi / (H W)`` so a uniform environment carries the same total weight.
    ``stride > 1`` shades every ``stride``-th pixel and interpolates the rest.
    ``depth_tolerance`` is passed to the z-buffer (see
    :func:`~panorelight.envlight.resolve_zbuffer`); the strict nearest rule
    (0) inflates every bright patch by up to one map pixel.
    """

    illum_resolution: tuple = (128, 256)
    weighting: str = "solid_angle"
    stride: int = 1
    eps_near: float = EPS_NEAR
    depth_tolerance: float = 0.05
    threads: int = None

    def __post_init__(self):
        self.illum_resolution = check_dims(self.illum_resolution)
        if self.weighting not in ("solid_angle", "uniform"):
            raise DomainError(f"unknown weighting {self.weighting!r}")
        if int(self.stride) < 1:
            raise DomainError("stride must be >= 1")
        self.stride = int(self.stride)


def row_weights(dims, weighting="solid_angle"):
    h, w = check_dims(dims)
    if weighting == "solid_angle":
        return pixel_solid_angle(np.arange(h), (h, w))
    if weighting == "uniform":
        return np.full(h, 4.0 * np.pi / (h * w))
    raise DomainError(f"unknown weighting {weighting!r}")


def _check_unit(n, tol=1e-6):
    n = np.asarray(n, dtype=np.float64)
    norms = np.linalg.norm(n, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= tol):
        raise DomainError("normals must be unit length")
    return n


def shade_point(illum, normal, cfg=None):
    """Shading at one surface point: cosine-weighted sum over the illumination map."""
    cfg = cfg or RenderConfig()
    n = _check_unit(np.asarray(normal, dtype=np.float64).reshape(3))
    dims = illum.radiance.shape[:2]
    cos = np.maximum(direction_grid(dims) @ n, 0.0)
    wts = row_weights(dims, cfg.weighting)[:, None] * cos
    return np.einsum("hw,hwc->c", wts, illum.radiance)


def _coarse_axes(h, w, stride):
    return np.arange(0, h, stride), np.arange(0, w, stride)


def _upsample(coarse, h, w, stride):
    """Bilinear fill from the stride grid; wraps in azimuth, clamps in rows."""
    rows, cols = _coarse_axes(h, w, stride)
    nr, nc = len(rows), len(cols)
    v = np.arange(h)
    i0 = np.minimum(v // stride, nr - 1)
    i1 = np.minimum(i0 + 1, nr - 1)
    span_v = np.where(i1 > i0, rows[i1] - rows[i0], 1)
    fv = np.where(i1 > i0, (v - rows[i0]) / span_v, 0.0)
    u = np.arange(w)
    j0 = u // stride
    j1 = (j0 + 1) % nc
    end = np.where(j1 == 0, w, cols[j1])
    fu = (u - cols[j0]) / (end - cols[j0])
    top = coarse[i0][:, j0] * (1 - fu)[None, :, None] + coarse[i0][:, j1] * fu[None, :, None]
    bot = coarse[i1][:, j0] * (1 - fu)[None, :, None] + coarse[i1][:, j1] * fu[None, :, None]
    return top * (1 - fv)[:, None, None] + bot * fv[:, None, None]


def render_shading(lights, depth, normals, rig=None, cfg=None):
    """Shading map: one illumination map per pixel, centered at the pixel's 3D point.

    ``depth`` and ``normals`` may be map objects (their ``values``) or arrays;
    both must be dense. ``rig`` is accepted for interface symmetry.
    """
    cfg = cfg or RenderConfig()
    depth = np.asarray(getattr(depth, "values", depth), dtype=np.float64)
    if depth.ndim == 3:
        depth = depth[..., 0]
    normals = np.asarray(getattr(normals, "values", normals), dtype=np.float64)
    h, w = check_dims(depth.shape)
    if normals.shape != (h, w, 3):
        raise DomainError(f"normals shape {normals.shape} does not match depth {depth.shape}")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise DomainError("depth must be dense, finite and positive")
    if len(lights) == 0:
        raise DomainError("illumination map has no filled pixel to extrapolate from")
    rows, cols = _coarse_axes(h, w, cfg.stride)
    sub = np.ix_(rows, cols)
    points = direction_grid((h, w))[sub] * depth[sub][..., None]
    n_sub = _check_unit(normals[sub])
    _kernels.set_threads(cfg.threads)
    shade = _kernels.shade_queries(
        lights.positions,
        lights.intensities,
        points.reshape(-1, 3),
        n_sub.reshape(-1, 3),
        cfg.illum_resolution,
        cfg.eps_near,
        row_weights(cfg.illum_resolution, cfg.weighting),
        cfg.depth_tolerance,
    )
    if np.any(np.isnan(shade)):
        raise DomainError("illumination map has no filled pixel to extrapolate from")
    coarse = shade.reshape(len(rows), len(cols), 3)
    if cfg.stride == 1:
        return coarse
    return _upsample(coarse, h, w, cfg.stride)


def render_shading_reference(lights, depth, normals, cfg=None):
    """Slow per-pixel path through :func:`reconstruct_illumination` (for checking)."""
    cfg = cfg or RenderConfig()
    depth = np.asarray(getattr(depth, "values", depth), dtype=np.float64)
    normals = np.asarray(getattr(normals, "values", normals), dtype=np.float64)
    h, w = depth.shape
    points = direction_grid((h, w)) * depth[..., None]
    out = np.zeros((h, w, 3))
    for v in range(h):
        for u in range(w):
            m = reconstruct_illumination(lights, points[v, u], cfg.illum_resolution, cfg.eps_near,
                                         cfg.depth_tolerance)
            out[v, u] = shade_point(m, normals[v, u], cfg)
    return out


def least_squares_scale(a, b, mask=None):
    """Scalar ``s`` minimizing ``||s a - b||^2`` over the masked pixels (channels pooled)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"shapes differ: {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        a = a[mask]
        b = b[mask]
    den = float(np.sum(a * a))
    if not den > 0:
        raise DomainError("least-squares scale undefined: reference is zero on the mask")
    return float(np.sum(a * b)) / den


def reconstruct_image(reflectance, shading, scale=1.0):
    return scale * np.asarray(reflectance) * np.asarray(shading)


def _probe_frame(view_dir):
    d = np.asarray(view_dir, dtype=np.float64).reshape(3)
    d = d / np.linalg.norm(d)
    hint = np.array([0.0, 1.0, 0.0]) if abs(d[1]) < 0.99 else np.array([1.0, 0.0, 0.0])
    right = np.cross(d, hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, d)
    return d, right, up


def mirror_probe_geometry(view_dir, out_dims):
    """Per-pixel sphere normal, reflected direction and coverage for an orthographic view.

    ``view_dir`` points from the viewer toward the sphere. Row 0 is the top
    of the patch.
    """
    h, w = int(out_dims[0]), int(out_dims[1])
    d, right, up = _probe_frame(view_dir)
    x = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    y = 1.0 - (np.arange(h) + 0.5) / h * 2.0
    xx, yy = np.meshgrid(x, y)
    rr = xx**2 + yy**2
    mask = rr <= 1.0
    zz = np.sqrt(np.clip(1.0 - rr, 0.0, None))
    n = xx[..., None] * right + yy[..., None] * up - zz[..., None] * d
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    dn = n @ d
    r = d - 2.0 * dn[..., None] * n
    return n, r, mask


def render_mirror_probe(lights, center, radius, view_dir, out_dims=(128, 128),
                        probe_resolution=(256, 512), depth_tolerance=0.0):
    """Orthographic render of a perfect mirror sphere at ``center``.

    Returns ``(patch, mask)``; uncovered pixels are zero.
    """
    if not radius > 0:
        raise DomainError("probe radius must be positive")
    illum = reconstruct_illumination(lights, center, probe_resolution,
                                     depth_tolerance=depth_tolerance)
    _, r, mask = mirror_probe_geometry(view_dir, out_dims)
    u, v = dir_to_pixel(r, probe_resolution)
    patch = sample(illum.radiance, u, v, mode="bilinear")
    patch[~mask] = 0.0
    return patch, mask

"""Near-field environment light and per-point illumination maps.

Every observed pixel becomes a point light placed at its triangulated 3D
position. An illumination map at an arbitrary point is obtained by splatting
all lights onto a panorama centered there, keeping the nearest light per
pixel (occlusion), and filling empty pixels from the angularly nearest filled
pixel.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .equirect import check_dims, check_image, dir_to_pixel, direction_grid
from .errors import DomainError

EPS_NEAR = 1e-4
DEFAULT_RESOLUTION = (256, 512)


@dataclass
class PointLightSet:
    positions: np.ndarray  # (n, 3) meters, reference frame
    intensities: np.ndarray  # (n, 3) RGB

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.intensities = np.asarray(self.intensities, dtype=np.float64).reshape(-1, 3)
        if len(self.positions) != len(self.intensities):
            raise DomainError("positions and intensities differ in length")
        if not np.all(np.isfinite(self.positions)):
            raise DomainError("light positions must be finite")
        if not np.all(np.isfinite(self.intensities)) or np.any(self.intensities < 0):
            raise DomainError("light intensities must be finite and non-negative")

    def __len__(self):
        return len(self.positions)

    def save(self, path, text=None):
        from . import io

        if text is None:
            text = str(path).endswith(".txt")
        writer = io.write_lights_text if text else io.write_lights_binary
        writer(path, self.positions, self.intensities)

    @classmethod
    def load(cls, path):
        """Read a light table; ``.txt`` files are plain text, anything else binary."""
        from . import io

        reader = io.read_lights_text if str(path).endswith(".txt") else io.read_lights_binary
        return cls(*reader(path))


@dataclass
class IlluminationMap:
    radiance: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W) distance from center
    filled_mask: np.ndarray  # (H, W) True where a light landed directly
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def dims(self):
        return self.radiance.shape[:2]


class Splats(NamedTuple):
    pixel: np.ndarray  # flat target pixel index
    intensity: np.ndarray  # (k, 3)
    distance: np.ndarray
    source: np.ndarray  # index into the light set
    alignment: np.ndarray  # cosine between splat direction and its pixel center


def build_light_field(img, depth, rig=None):
    """One light per pixel at ``depth * direction`` with the pixel's RGB.

    ``depth`` may be a :class:`~panorelight.stereo.DepthMap` (must be fully
    valid) or a plain ``(H, W)`` array. ``rig`` is accepted for interface
    symmetry; the reference camera is always at the origin.
    """
    mask = getattr(depth, "mask", None)
    depth = np.asarray(getattr(depth, "values", depth), dtype=np.float64)
    if depth.ndim == 3:
        depth = depth[..., 0]
    img = check_image(img, channels=3, nonneg=True)
    if img.shape[:2] != depth.shape:
        raise DomainError(f"image {img.shape[:2]} and depth {depth.shape} differ")
    if mask is not None and not np.all(mask):
        raise DomainError("depth has invalid pixels; fill them before building lights")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise DomainError("depth must be finite and positive everywhere")
    dirs = direction_grid(depth.shape)
    positions = (dirs * depth[..., None]).reshape(-1, 3)
    return PointLightSet(positions, img.reshape(-1, 3))


def project_lights(lights, query, dims, eps_near=EPS_NEAR):
    """Project every light onto the panorama centered at ``query`` (nearest pixel)."""
    h, w = check_dims(dims)
    query = np.asarray(query, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(query)):
        raise DomainError("query point must be finite")
    diff = lights.positions - query
    dx, dy, dz = diff[:, 0], diff[:, 1], diff[:, 2]
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    keep = np.nonzero(dist >= eps_near)[0]
    dist = dist[keep]
    unit = diff[keep] / dist[:, None]
    u, v = dir_to_pixel(unit, (h, w))
    ui = np.floor(u + 0.5).astype(np.int64) % w
    vi = np.minimum(np.floor(v + 0.5).astype(np.int64), h - 1)
    pixel = vi * w + ui
    c = direction_grid((h, w)).reshape(-1, 3)[pixel]
    align = c[:, 0] * unit[:, 0] + c[:, 1] * unit[:, 1] + c[:, 2] * unit[:, 2]
    return Splats(pixel, lights.intensities[keep], dist, keep, align)


def resolve_zbuffer(splats, dims, depth_tolerance=0.0, debug=False):
    """Keep one splat per pixel, simulating occlusion.

    With ``depth_tolerance == 0`` the splat of minimum distance wins (ties:
    lowest source index). With a positive tolerance every splat within
    ``min_distance * (1 + depth_tolerance)`` counts as the same front surface
    and the one closest to the pixel center wins; this removes the bias of
    the strict rule toward the near side of every pixel a surface edge
    crosses.

    With ``debug=True`` also returns ``(discard_count, min_discarded_distance)``
    per pixel so occlusion correctness can be asserted.
    """
    h, w = check_dims(dims)
    radiance = np.zeros((h * w, 3))
    depth = np.zeros(h * w)
    filled = np.zeros(h * w, dtype=bool)
    if depth_tolerance > 0 and len(splats.pixel):
        nearest = np.full(h * w, np.inf)
        np.minimum.at(nearest, splats.pixel, splats.distance)
        front = splats.distance <= nearest[splats.pixel] * (1.0 + depth_tolerance)
        # behind-layer splats sort last; among the front layer best alignment first
        order = np.lexsort((splats.source, -splats.alignment, ~front, splats.pixel))
    else:
        order = np.lexsort((splats.source, splats.distance, splats.pixel))
    pix_sorted = splats.pixel[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    win = order[first]
    radiance[splats.pixel[win]] = splats.intensity[win]
    depth[splats.pixel[win]] = splats.distance[win]
    filled[splats.pixel[win]] = True
    partial = IlluminationMap(
        radiance.reshape(h, w, 3), depth.reshape(h, w), filled.reshape(h, w)
    )
    if not debug:
        return partial
    lost = order[~first]
    counts = np.bincount(splats.pixel[lost], minlength=h * w).reshape(h, w)
    min_lost = np.full(h * w, np.inf)
    np.minimum.at(min_lost, splats.pixel[lost], splats.distance[lost])
    return partial, (counts, min_lost.reshape(h, w))


def fill_holes_nearest(partial):
    """Copy radiance and depth into empty pixels from the angularly nearest filled pixel."""
    if not np.any(partial.filled_mask):
        raise DomainError("illumination map has no filled pixel to extrapolate from")
    h, w = partial.dims
    src = _kernels.nearest_filled(partial.filled_mask).reshape(-1)
    radiance = partial.radiance.reshape(-1, 3)[src].reshape(h, w, 3)
    depth = partial.depth.reshape(-1)[src].reshape(h, w)
    return IlluminationMap(radiance, depth, partial.filled_mask.copy(), partial.center)


def reconstruct_illumination(lights, query, resolution=DEFAULT_RESOLUTION, eps_near=EPS_NEAR,
                             depth_tolerance=0.0):
    """Illumination map seen from ``query``: project, z-buffer, then hole-fill."""
    splats = project_lights(lights, query, resolution, eps_near)
    partial = resolve_zbuffer(splats, resolution, depth_tolerance)
    partial.center = np.asarray(query, dtype=np.float64).reshape(3).copy()
    return fill_holes_nearest(partial)

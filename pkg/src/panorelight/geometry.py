"""Normals from depth and a division-based reflectance initialization.

Both are classical substitutes for a learned reflectance/normal estimator.
:class:`IntrinsicProvider` is the seam where such a model would plug in:
anything mapping ``(image, depth)`` to ``(reflectance, normals)`` works.
"""

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import _kernels
from .equirect import CameraRig, check_image, direction_grid
from .errors import DomainError

EPS_SHADING = 1e-3
R_MAX = 4.0
JUMP_THRESHOLD = 0.2


@dataclass
class NormalMap:
    values: np.ndarray  # (H, W, 3) unit vectors, reference frame
    mask: np.ndarray  # (H, W) True where computed directly (others are hole-filled)


@dataclass
class ReflectanceMap:
    values: np.ndarray  # (H, W, 3) in [0, r_max]
    r_max: float = R_MAX


def _neighbors(a):
    """Left, right, up, down neighbors with azimuth wrap and reflection across the poles.

    The row above row 0 is row 0 itself seen half a turn away (and likewise at
    the bottom), which is where the great circle through the pole continues.
    """
    w = a.shape[1]
    half = np.roll(a, w // 2, axis=1)
    left = np.roll(a, 1, axis=1)
    right = np.roll(a, -1, axis=1)
    up = np.concatenate([half[:1], a[:-1]], axis=0)
    down = np.concatenate([a[1:], half[-1:]], axis=0)
    return left, right, up, down


def normals_from_depth(depth, rig=None, jump=JUMP_THRESHOLD):
    """Per-pixel normals from central differences of the lifted 3D points.

    Pixels whose 4-neighborhood jumps by more than ``jump`` relative depth are
    invalid and take the normal of the angularly nearest valid pixel. Normals
    face the reference camera. ``rig`` is accepted for interface symmetry.
    """
    if rig is not None and not isinstance(rig, CameraRig):
        rig = CameraRig(float(rig))
    d = np.asarray(getattr(depth, "values", depth), dtype=np.float64)
    if d.ndim == 3:
        d = d[..., 0]
    if d.ndim != 2 or d.shape[1] != 2 * d.shape[0]:
        raise DomainError(f"depth must be H x 2H, got {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise DomainError("depth must be dense, finite and positive")
    p = direction_grid(d.shape) * d[..., None]
    left, right, up, down = _neighbors(p)
    n = np.cross(right - left, down - up)
    norm = np.linalg.norm(n, axis=-1)
    valid = norm > 1e-12
    n = n / np.where(valid, norm, 1.0)[..., None]
    flip = np.einsum("hwc,hwc->hw", n, p) > 0
    n[flip] *= -1.0

    rel = np.zeros_like(d)
    for nb in _neighbors(d):
        rel = np.maximum(rel, np.abs(nb - d) / d)
    valid &= rel <= jump
    if not np.any(valid):
        raise DomainError("no pixel has a valid normal")
    if not np.all(valid):
        src = _kernels.nearest_filled(valid).reshape(-1)
        n = n.reshape(-1, 3)[src].reshape(n.shape)
    return NormalMap(n, valid)


def reflectance_init(img, shading, eps=EPS_SHADING, r_max=R_MAX):
    """``R = I / max(S, eps)`` per channel, clamped to ``[0, r_max]``."""
    img = check_image(img, nonneg=True, name="image")
    shading = check_image(np.asarray(getattr(shading, "values", shading)), nonneg=True,
                          name="shading")
    if img.shape != shading.shape:
        raise DomainError(f"image {img.shape} and shading {shading.shape} differ")
    r = img / np.maximum(shading, eps)
    return ReflectanceMap(np.clip(r, 0.0, r_max), r_max)


class IntrinsicProvider(Protocol):
    def __call__(self, image, depth) -> tuple:
        """Return ``(ReflectanceMap, NormalMap)`` for an image and its dense depth."""
        ...


@dataclass
class ClassicalProvider:
    """Normals from depth; reflectance by dividing the image by rendered shading.

    The shading comes from the image's own light field, so it needs the
    render stage; the result also carries the shading as ``self.last_shading``.
    """

    render_config: object = None
    eps: float = EPS_SHADING
    r_max: float = R_MAX

    def __call__(self, image, depth):
        from .envlight import build_light_field
        from .render import render_shading

        normals = normals_from_depth(depth)
        lights = build_light_field(image, depth)
        shading = render_shading(lights, depth, normals, cfg=self.render_config)
        self.last_shading = shading
        return reflectance_init(image, shading, self.eps, self.r_max), normals

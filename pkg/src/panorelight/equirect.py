"""Equirectangular conventions shared by every other module.

Frame: the reference (top) camera sits at the origin with +Y pointing to the
zenith. Row ``v = 0`` is the zenith and integer pixel coordinates are pixel
centers, so

    polar angle from zenith   theta(v) = pi * (v + 0.5) / H
    azimuth                   phi(u)   = 2 * pi * (u + 0.5) / W
    direction                 (sin theta cos phi, cos theta, sin theta sin phi)

Images are plain ``(H, W, C)`` float arrays with ``W == 2 * H``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class CameraRig:
    """Top/bottom panoramic rig. The bottom camera sits at ``(0, -baseline, 0)``."""

    baseline: float
    reference: str = "top"

    def __post_init__(self):
        if not (self.baseline > 0 and np.isfinite(self.baseline)):
            raise DomainError(f"baseline must be positive, got {self.baseline}")
        if self.reference != "top":
            raise DomainError("only the top camera can be the reference")

    @property
    def bottom_offset(self):
        return np.array([0.0, -self.baseline, 0.0])


def check_dims(dims):
    h, w = int(dims[0]), int(dims[1])
    if h < 1 or w != 2 * h:
        raise DomainError(f"equirectangular dims must be (H, 2H), got {dims}")
    return h, w


def check_image(img, channels=None, nonneg=False, name="image"):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3:
        raise DomainError(f"{name} must be (H, W, C), got shape {img.shape}")
    check_dims(img.shape[:2])
    if channels is not None and img.shape[2] != channels:
        raise DomainError(f"{name} must have {channels} channels, got {img.shape[2]}")
    if not np.all(np.isfinite(img)):
        raise DomainError(f"{name} contains non-finite values")
    if nonneg and np.any(img < 0):
        raise DomainError(f"{name} contains negative values")
    return img


def polar_angle(v, height):
    return np.pi * (np.asarray(v, dtype=np.float64) + 0.5) / height


def azimuth(u, width):
    return 2.0 * np.pi * (np.asarray(u, dtype=np.float64) + 0.5) / width


def pixel_to_dir(u, v, dims):
    """Unit direction(s) for continuous pixel coordinates; output shape ``(..., 3)``."""
    h, w = check_dims(dims)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any((u < 0) | (u >= w) | (v < 0) | (v >= h)) or not (
        np.all(np.isfinite(u)) and np.all(np.isfinite(v))
    ):
        raise DomainError(f"pixel coordinates outside [0, {w}) x [0, {h})")
    theta = polar_angle(v, h)
    phi = azimuth(u, w)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), np.cos(theta), st * np.sin(phi)], axis=-1)


def dir_to_pixel(d, dims):
    """Continuous ``(u, v)`` for direction(s) ``d`` of shape ``(..., 3)``.

    ``u`` wraps into ``[0, W)``; ``v`` is clamped into ``[0, H - 1]``, so the
    half-pixel caps around the poles land on the first/last row. At the exact
    poles the azimuth is arbitrary (``atan2(0, 0)``).
    """
    h, w = check_dims(dims)
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    theta = np.arctan2(np.hypot(x, z), y)
    phi = np.arctan2(z, x)
    u = np.mod(phi * (w / (2.0 * np.pi)) - 0.5, w)
    # np.mod can return exactly w for tiny negative inputs
    u = np.where(u >= w, u - w, u)
    v = np.clip(theta * (h / np.pi) - 0.5, 0.0, h - 1.0)
    return u, v


def pixel_solid_angle(v, dims):
    """Solid angle in steradians of a pixel in row ``v``."""
    h, w = check_dims(dims)
    v = np.asarray(v)
    if np.any((v < 0) | (v >= h)):
        raise DomainError(f"row index outside [0, {h})")
    return (2.0 * np.pi / w) * (np.pi / h) * np.sin(polar_angle(v, h))


@lru_cache(maxsize=32)
def _direction_grid(h, w):
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    grid = pixel_to_dir(uu, vv, (h, w))
    grid.setflags(write=False)
    return grid


def direction_grid(dims):
    """``(H, W, 3)`` array of pixel-center directions (cached, read-only)."""
    h, w = check_dims(dims)
    return _direction_grid(h, w)


@lru_cache(maxsize=32)
def _solid_angle_grid(h, w):
    om = np.repeat(pixel_solid_angle(np.arange(h), (h, w))[:, None], w, axis=1)
    om.setflags(write=False)
    return om


def solid_angle_grid(dims):
    h, w = check_dims(dims)
    return _solid_angle_grid(h, w)


def sample(img, u, v, mode="bilinear"):
    """Sample ``img`` at continuous coordinates; output shape ``u.shape + (C,)``.

    Bilinear mode wraps across the azimuth seam and clamps at the poles.
    """
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[..., None]
    h, w = img.shape[:2]
    u = np.mod(np.asarray(u, dtype=np.float64), w)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1.0)
    if mode == "nearest":
        ui = np.mod(np.floor(u + 0.5).astype(np.int64), w)
        vi = np.clip(np.floor(v + 0.5).astype(np.int64), 0, h - 1)
        return img[vi, ui]
    if mode != "bilinear":
        raise DomainError(f"unknown sampling mode {mode!r}")
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = (u - u0)[..., None]
    fv = (v - v0)[..., None]
    u0 %= w
    u1 = (u0 + 1) % w
    v1 = np.minimum(v0 + 1, h - 1)
    top = img[v0, u0] * (1.0 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1.0 - fu) + img[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv


def resize(img, dims):
    """Bilinear resample of an equirectangular image onto another grid."""
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    src_h, src_w = img.shape[:2]
    h, w = check_dims(dims)
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    # map pixel centers through angles
    su = (uu + 0.5) * (src_w / w) - 0.5
    sv = (vv + 0.5) * (src_h / h) - 0.5
    out = sample(img, su, sv)
    return out[..., 0] if squeeze else out

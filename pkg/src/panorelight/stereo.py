"""Vertical stereo on a top/bottom equirectangular pair.

Angles follow the triangulation formula's own convention: ``theta`` is the
polar angle measured from the top->bottom baseline direction, i.e. from the
nadir. With rows counted from the zenith this is ``theta = pi - polar(v)``,
and a scene point appears ``v_t - v_b >= 0`` rows higher in the bottom image.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .equirect import CameraRig, check_dims, check_image, polar_angle
from .errors import DomainError

EPS_DISP = 1e-6


@dataclass
class DisparityMap:
    values: np.ndarray  # (H, W) angular disparity in radians
    mask: np.ndarray  # (H, W) bool

    @property
    def pixels(self):
        """Disparity in rows."""
        return self.values * self.values.shape[0] / np.pi


@dataclass
class DepthMap:
    values: np.ndarray  # (H, W) meters along the viewing ray
    mask: np.ndarray

    def filled(self):
        """Dense copy with invalid pixels taken from the angularly nearest valid one."""
        if np.all(self.mask):
            return DepthMap(self.values.copy(), self.mask.copy())
        if not np.any(self.mask):
            raise DomainError("depth map has no valid pixel")
        src = _kernels.nearest_filled(self.mask).reshape(-1)
        return DepthMap(self.values.reshape(-1)[src].reshape(self.values.shape),
                        np.ones_like(self.mask))


@dataclass
class MatchConfig:
    window: int = 9
    max_disparity: int = 64
    cost: str = "zncc"
    subpixel: bool = True
    lr_check_threshold: float = 1.0
    pole_band: float = 0.05
    min_texture: float = 1e-3  # window std relative to the pair's global std

    def __post_init__(self):
        self.cost = self.cost.lower()
        if self.window < 3 or self.window % 2 == 0:
            raise DomainError("window must be an odd integer >= 3")
        if self.max_disparity < 1:
            raise DomainError("max_disparity must be >= 1")
        if self.cost not in ("sad", "zncc"):
            raise DomainError(f"unknown cost {self.cost!r}")
        if not 0 <= self.pole_band < 0.5:
            raise DomainError("pole_band must be in [0, 0.5)")


def angular_disparity(v_t, v_b, height):
    """Angular disparity (radians) from the matched rows in the top and bottom images."""
    return np.pi / height * (np.asarray(v_t, dtype=np.float64) - v_b)


def nadir_angle(v, height):
    """Polar angle from the nadir (the baseline direction) for row ``v``."""
    return np.pi - polar_angle(v, height)


def depth_from_disparity(theta_t, delta, baseline, eps=EPS_DISP):
    """Distance to the top camera by triangulation; NaN where the point is at infinity.

    ``theta_t`` is measured from the nadir. The result is invalid (NaN) when
    ``delta <= eps`` or when the triangle does not close (non-positive depth).
    """
    baseline = np.asarray(baseline, dtype=np.float64)
    if np.any(~(baseline > 0)):
        raise DomainError("baseline must be positive")
    theta_t = np.asarray(theta_t, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = baseline * (np.sin(theta_t) / np.tan(delta) + np.cos(theta_t))
    bad = ~(delta > eps) | ~(d > 0) | ~np.isfinite(d)
    d = np.where(bad, np.nan, d)
    return d[()] if d.ndim == 0 else d


def disparity_from_depth(theta_t, depth, baseline):
    """Exact inverse of :func:`depth_from_disparity` for points at finite depth."""
    theta_t = np.asarray(theta_t, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    along = depth * np.cos(theta_t) - baseline
    across = depth * np.sin(theta_t)
    return np.arctan2(across, along) - theta_t


def _box(a, window):
    return ndimage.uniform_filter(a, size=window, mode=("nearest", "wrap"))


def _shift_down(a, k):
    """``out[v] = a[v - k]`` with edge replication above row k."""
    if k == 0:
        return a
    out = np.empty_like(a)
    out[k:] = a[:-k]
    out[:k] = a[:1]
    return out


def cost_volume(top, bottom, cfg):
    """Matching cost ``C[k, v, u]`` of top pixel (v, u) against bottom pixel (v - k, u)."""
    h, w = top.shape[:2]
    k_max = int(cfg.max_disparity)
    # joint centering makes ZNCC exactly blind to a shared offset
    offset = 0.5 * (top.mean() + bottom.mean())
    t = top - offset
    b = bottom - offset
    vol = np.full((k_max + 1, h, w), np.inf, dtype=np.float32)
    win = cfg.window
    scale = max(np.std(t), np.std(b))
    var_floor = (cfg.min_texture * scale) ** 2 + 1e-24
    if cfg.cost == "zncc":
        tm = _box(t.mean(axis=2), win)
        var_t = _box((t * t).mean(axis=2), win) - tm**2
        bm = _box(b.mean(axis=2), win)
        var_b = _box((b * b).mean(axis=2), win) - bm**2
        textured_t = var_t > var_floor
        for k in range(min(k_max, h - 1) + 1):
            cross = _box((t * _shift_down(b, k)).mean(axis=2), win)
            bmk = _shift_down(bm, k)
            vbk = _shift_down(var_b, k)
            ok = textured_t & (vbk > var_floor)
            ok[:k] = False
            with np.errstate(invalid="ignore", divide="ignore"):
                zncc = (cross - tm * bmk) / np.sqrt(var_t * vbk)
            vol[k][ok] = (1.0 - zncc[ok]).astype(np.float32)
    else:
        tm = _box(t.mean(axis=2), win)
        var_t = _box((t * t).mean(axis=2), win) - tm**2
        textured_t = var_t > var_floor
        for k in range(min(k_max, h - 1) + 1):
            sad = _box(np.abs(t - _shift_down(b, k)).mean(axis=2), win)
            ok = textured_t.copy()
            ok[:k] = False
            vol[k][ok] = sad[ok].astype(np.float32)
    return vol


def match_vertical(top, bottom, cfg=None):
    """Winner-take-all vertical matching with sub-pixel refinement and an LR check."""
    cfg = cfg or MatchConfig()
    top = check_image(top, name="top")
    bottom = check_image(bottom, name="bottom")
    if top.shape != bottom.shape:
        raise DomainError(f"stereo images differ in shape: {top.shape} vs {bottom.shape}")
    h, w = top.shape[:2]
    vol = cost_volume(top, bottom, cfg)
    k_max = vol.shape[0] - 1

    best_t = np.argmin(vol, axis=0)
    cost_t = np.take_along_axis(vol, best_t[None], axis=0)[0]
    valid = np.isfinite(cost_t)

    # bottom-referenced winner: bottom row r matches top row r + k
    best_b = np.zeros((h, w), dtype=np.int64)
    cost_b = np.full((h, w), np.inf, dtype=np.float32)
    for k in range(k_max + 1):
        cand = vol[k, k:]
        better = cand < cost_b[: h - k]
        cost_b[: h - k][better] = cand[better]
        best_b[: h - k][better] = k

    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    partner = np.clip(rows - best_t, 0, h - 1)
    lr_ok = np.abs(best_t - best_b[partner, cols]) <= cfg.lr_check_threshold
    lr_ok &= np.isfinite(cost_b[partner, cols])
    valid &= lr_ok

    disp = best_t.astype(np.float64)
    if cfg.subpixel:
        inner = (best_t > 0) & (best_t < k_max) & valid
        km = np.clip(best_t - 1, 0, k_max)
        kp = np.clip(best_t + 1, 0, k_max)
        c0 = np.take_along_axis(vol, km[None], axis=0)[0].astype(np.float64)
        c1 = cost_t.astype(np.float64)
        c2 = np.take_along_axis(vol, kp[None], axis=0)[0].astype(np.float64)
        inner &= np.isfinite(c0) & np.isfinite(c2)
        with np.errstate(invalid="ignore", divide="ignore"):
            denom = c0 - 2.0 * c1 + c2
            inner &= denom > 0
            offset = np.where(inner, 0.5 * (c0 - c2) / np.where(inner, denom, 1.0), 0.0)
        disp += np.clip(offset, -0.5, 0.5)

    band = int(np.ceil(cfg.pole_band * h))
    if band:
        valid[:band] = False
        valid[h - band:] = False
    disp = np.where(valid, disp, 0.0)
    return DisparityMap(angular_disparity(disp, 0.0, h), valid)


def disparity_to_depth(disp, rig, eps=EPS_DISP):
    """Per-pixel triangulation of a :class:`DisparityMap` into a :class:`DepthMap`."""
    if not isinstance(rig, CameraRig):
        rig = CameraRig(float(rig))
    h, w = check_dims(disp.values.shape)
    theta_t = np.repeat(nadir_angle(np.arange(h), h)[:, None], w, axis=1)
    d = depth_from_disparity(theta_t, disp.values, rig.baseline, eps)
    mask = disp.mask & np.isfinite(d)
    return DepthMap(np.where(mask, d, 0.0), mask)

"""Evaluation metrics and the reflectance/normal losses used as quality measures."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .refine import spherical_gradient
from .render import least_squares_scale


@dataclass
class MetricReport:
    name: str
    value: float
    pixel_count: int
    mask_coverage: float

    @property
    def infinite(self):
        return bool(np.isinf(self.value))

    def as_row(self):
        return {"name": self.name, "value": self.value, "pixel_count": self.pixel_count,
                "mask_coverage": self.mask_coverage}


def _pair(pred, gt, mask):
    pred = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    gt = np.asarray(getattr(gt, "values", gt), dtype=np.float64)
    if pred.shape != gt.shape:
        raise DomainError(f"shapes differ: {pred.shape} vs {gt.shape}")
    if mask is None:
        mask = np.ones(pred.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape[:2]:
        raise DomainError(f"mask {mask.shape} does not match image {pred.shape[:2]}")
    if not np.any(mask):
        raise DomainError("mask is empty")
    return pred, gt, mask


def smse(pred, gt, mask=None):
    """Mean square error after the least-squares rescaling of ``pred``."""
    pred, gt, mask = _pair(pred, gt, mask)
    if not np.any(gt[mask]):
        raise DomainError("sMSE undefined: ground truth is zero on the mask")
    s = least_squares_scale(pred, gt, mask)
    return float(np.mean((s * pred[mask] - gt[mask]) ** 2))


def mae_degrees(pred, gt, mask=None):
    """Mean angle between two normal fields, in degrees."""
    pred, gt, mask = _pair(pred, gt, mask)
    cos = np.clip(np.sum(pred[mask] * gt[mask], axis=-1), -1.0, 1.0)
    return float(np.mean(np.degrees(np.arccos(cos))))


def psnr(pred, gt, mask=None, peak=None):
    """``10 log10(peak^2 / MSE)``; identical inputs give ``inf``.

    ``peak`` defaults to the maximum of ``gt`` on the mask.
    """
    pred, gt, mask = _pair(pred, gt, mask)
    if peak is None:
        peak = float(np.max(gt[mask]))
    if not peak > 0:
        raise DomainError("peak must be positive")
    mse = float(np.mean((pred[mask] - gt[mask]) ** 2))
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def loss_reflectance(pred, gt):
    """Scale-invariant reflectance loss: ``||sR - R*||^2 + ||s grad R - grad R*||_1``."""
    pred, gt, _ = _pair(pred, gt, None)
    s = least_squares_scale(pred, gt) if np.any(pred) else 1.0
    gx, gy = spherical_gradient(pred)
    hx, hy = spherical_gradient(gt)
    return float(np.sum((s * pred - gt) ** 2)
                 + np.sum(np.abs(s * gx - hx)) + np.sum(np.abs(s * gy - hy)))


def loss_normal(pred, gt):
    """Cosine loss plus l1 gradient difference, both summed over pixels.

    A perfect constant prediction scores ``-(number of pixels)``.
    """
    pred, gt, _ = _pair(pred, gt, None)
    cos = -np.sum(pred * gt)
    gx, gy = spherical_gradient(pred)
    hx, hy = spherical_gradient(gt)
    return float(cos + np.sum(np.abs(gx - hx)) + np.sum(np.abs(gy - hy)))


def report(name, value, mask=None, shape=None):
    if mask is None:
        count = int(np.prod(shape[:2])) if shape is not None else 0
        return MetricReport(name, float(value), count, 1.0)
    mask = np.asarray(mask, dtype=bool)
    return MetricReport(name, float(value), int(mask.sum()), float(mask.mean()))

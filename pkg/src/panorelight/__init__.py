"""Panoramic stereo inverse rendering: depth, near-field lighting, shading, refinement."""

__version__ = "0.1.0"

from .equirect import CameraRig, dir_to_pixel, pixel_solid_angle, pixel_to_dir, sample  # noqa: E402
from .errors import DomainError, RefinementDiverged  # noqa: E402

__all__ = [
    "CameraRig",
    "DomainError",
    "RefinementDiverged",
    "dir_to_pixel",
    "pixel_solid_angle",
    "pixel_to_dir",
    "sample",
]

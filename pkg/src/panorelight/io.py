"""File formats: PFM float maps, PNG previews/masks, light-set tables.

Every writer goes through a temp file in the destination directory followed by
``os.replace`` so a crashed write never leaves a partial artifact behind.
"""

import contextlib
import csv
import os
import tempfile

import numpy as np
from PIL import Image

from .errors import DomainError


@contextlib.contextmanager
def atomic_open(path, mode="wb"):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        kwargs = {} if "b" in mode else {"newline": "", "encoding": "utf-8"}
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- PFM

def write_pfm(path, img, scale=1.0):
    """Write a 1- or 3-channel float map as little-endian PFM (negative scale)."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        tag = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    else:
        raise DomainError(f"PFM supports 1 or 3 channels, got shape {img.shape}")
    h, w = img.shape[:2]
    header = tag + b"\n" + f"{w} {h}\n".encode() + f"{-abs(scale):g}\n".encode()
    # PFM stores rows bottom-to-top
    body = np.ascontiguousarray(np.flipud(img)).astype("<f4").tobytes()
    with atomic_open(path) as fh:
        fh.write(header)
        fh.write(body)


def _read_token_line(fh):
    line = fh.readline()
    if not line:
        raise DomainError("unexpected end of PFM header")
    return line.decode("ascii").strip()


def read_pfm(path):
    """Read a PFM file into an ``(H, W)`` or ``(H, W, 3)`` float32 array."""
    with open(path, "rb") as fh:
        tag = _read_token_line(fh)
        if tag == "PF":
            channels = 3
        elif tag == "Pf":
            channels = 1
        else:
            raise DomainError(f"{path}: not a PFM file (tag {tag!r})")
        dims = _read_token_line(fh).split()
        if len(dims) != 2:
            raise DomainError(f"{path}: malformed PFM dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(_read_token_line(fh))
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dtype)
    expected = w * h * channels
    if data.size != expected:
        raise DomainError(f"{path}: expected {expected} floats, found {data.size}")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(data.reshape(shape)).astype(np.float32)


# ---------------------------------------------------------------- PNG

def to_preview(img, exposure=1.0, gamma=2.2):
    """Map linear radiance to 8-bit sRGB-ish values with a plain gamma curve."""
    img = np.clip(np.asarray(img, dtype=np.float64) * exposure, 0.0, 1.0)
    return np.round(255.0 * img ** (1.0 / gamma)).astype(np.uint8)


def write_png(path, img, exposure=1.0, gamma=2.2, alpha=None):
    rgb = to_preview(img, exposure, gamma)
    if rgb.ndim == 3 and rgb.shape[2] == 1:
        rgb = rgb[..., 0]
    if alpha is not None:
        a = (np.asarray(alpha, dtype=bool) * 255).astype(np.uint8)
        if rgb.ndim == 2:
            rgb = np.repeat(rgb[..., None], 3, axis=2)
        rgb = np.concatenate([rgb, a[..., None]], axis=2)
    with atomic_open(path) as fh:
        Image.fromarray(rgb).save(fh, format="PNG")


def write_normal_png(path, normals):
    """Preview a normal map as ``(n + 1) / 2`` RGB."""
    n = np.clip((np.asarray(normals) + 1.0) * 0.5, 0.0, 1.0)
    write_png(path, n, gamma=1.0)


def write_mask_png(path, mask):
    m = (np.asarray(mask, dtype=bool) * 255).astype(np.uint8)
    with atomic_open(path) as fh:
        Image.fromarray(m).save(fh, format="PNG")


def read_mask_png(path):
    return np.asarray(Image.open(path).convert("L")) > 127


# ---------------------------------------------------------------- light sets

def write_lights_binary(path, positions, intensities):
    """Binary light table: uint32 count, then ``x y z r g b`` float32 records (LE)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    intensities = np.asarray(intensities, dtype=np.float64).reshape(-1, 3)
    if len(positions) != len(intensities):
        raise DomainError("positions and intensities differ in length")
    rec = np.concatenate([positions, intensities], axis=1).astype("<f4")
    with atomic_open(path) as fh:
        fh.write(np.uint32(len(rec)).astype("<u4").tobytes())
        fh.write(rec.tobytes())


def read_lights_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DomainError(f"{path}: truncated light table")
    n = int(np.frombuffer(raw[:4], dtype="<u4")[0])
    body = np.frombuffer(raw[4:], dtype="<f4")
    if body.size != 6 * n:
        raise DomainError(f"{path}: header says {n} lights, body holds {body.size / 6:g}")
    rec = body.reshape(n, 6).astype(np.float64)
    return rec[:, :3], rec[:, 3:]


def write_lights_text(path, positions, intensities):
    rec = np.concatenate(
        [np.asarray(positions).reshape(-1, 3), np.asarray(intensities).reshape(-1, 3)], axis=1
    )
    with atomic_open(path, "w") as fh:
        fh.write("# x y z r g b\n")
        np.savetxt(fh, rec, fmt="%.9g")


def read_lights_text(path):
    rec = np.loadtxt(path, comments="#", ndmin=2)
    if rec.size == 0:
        rec = rec.reshape(0, 6)
    if rec.shape[1] != 6:
        raise DomainError(f"{path}: expected 6 columns per light")
    return rec[:, :3], rec[:, 3:]


# ---------------------------------------------------------------- CSV

def write_csv(path, header, rows):
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

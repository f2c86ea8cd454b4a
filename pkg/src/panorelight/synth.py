"""Analytic box-room scenes with exact ground truth.

The room is the axis-aligned box ``[-hx, hx] x [-hy, hy] x [-hz, hz]`` in world
coordinates. Ground-truth maps are rendered from a camera inside it and
expressed in that camera's frame (world translated by ``-camera``), so they
line up with everything the stereo pipeline produces.

Faces are numbered ``2 * axis + (side == +)``: 0 = -X, 1 = +X, 2 = floor (-Y),
3 = ceiling (+Y), 4 = -Z, 5 = +Z. Face coordinates are the two remaining
world axes in increasing order (x faces use (y, z), y faces (x, z), z faces
(x, y)).

Forward model (one bounce): ``shading = ambient + sum of emitter-patch
irradiance``; ``image = reflectance * shading + emission``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .equirect import CameraRig, check_dims, direction_grid
from .errors import DomainError
from .stereo import DisparityMap, disparity_from_depth, nadir_angle

FACE_NAMES = ("-x", "+x", "-y", "+y", "-z", "+z")


def _other_axes(axis):
    return [a for a in range(3) if a != axis]


@dataclass
class Emitter:
    face: int
    rect: tuple  # (a0, a1, b0, b1) in face coordinates, meters
    radiance: tuple  # RGB

    def corners(self, half_extents):
        """World-space corners, counter-clockwise seen from inside the room."""
        axis = self.face // 2
        sign = 1.0 if self.face % 2 else -1.0
        a, b = _other_axes(axis)
        a0, a1, b0, b1 = self.rect
        pts = np.zeros((4, 3))
        pts[:, axis] = sign * half_extents[axis]
        pts[:, a] = [a0, a1, a1, a0]
        pts[:, b] = [b0, b0, b1, b1]
        return pts

    @property
    def area(self):
        a0, a1, b0, b1 = self.rect
        return (a1 - a0) * (b1 - b0)


@dataclass
class BoxScene:
    half_extents: tuple = (2.0, 1.3, 1.6)
    face_albedo: tuple = (
        (0.80, 0.35, 0.30),
        (0.30, 0.70, 0.35),
        (0.55, 0.45, 0.35),
        (0.85, 0.85, 0.85),
        (0.35, 0.40, 0.80),
        (0.75, 0.70, 0.40),
    )
    emitters: list = field(default_factory=lambda: [
        Emitter(3, (-0.6, 0.4, -0.5, 0.3), (30.0, 28.0, 24.0))
    ])
    ambient: tuple = (0.15, 0.15, 0.15)
    camera_top: tuple = (0.25, 0.2, -0.15)
    texture: bool = False
    texture_cell: float = 0.12
    texture_contrast: float = 0.6
    seed: int = 0

    def __post_init__(self):
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64)
        self.face_albedo = np.asarray(self.face_albedo, dtype=np.float64).reshape(6, 3)
        self.ambient = np.asarray(self.ambient, dtype=np.float64).reshape(3)
        self.camera_top = np.asarray(self.camera_top, dtype=np.float64).reshape(3)
        self.emitters = [e if isinstance(e, Emitter) else Emitter(**e) for e in self.emitters]
        if np.any(self.half_extents <= 0):
            raise DomainError("half extents must be positive")
        if np.any(self.face_albedo < 0) or np.any(self.face_albedo > 1):
            raise DomainError("face albedo must lie in [0, 1]")
        if np.any(self.ambient < 0):
            raise DomainError("ambient must be non-negative")
        for e in self.emitters:
            axis = e.face // 2
            a, b = _other_axes(axis)
            a0, a1, b0, b1 = e.rect
            if not (0 <= e.face < 6):
                raise DomainError(f"emitter face {e.face} out of range")
            if not (-self.half_extents[a] <= a0 < a1 <= self.half_extents[a]
                    and -self.half_extents[b] <= b0 < b1 <= self.half_extents[b]):
                raise DomainError(f"emitter patch {e.rect} outside face {e.face}")
            if np.any(np.asarray(e.radiance) < 0):
                raise DomainError("emitter radiance must be non-negative")
        if not self.emitters and not np.any(self.ambient > 0):
            raise DomainError("scene needs an emitter or a positive ambient term")
        if not self.inside(self.camera_top):
            raise DomainError("camera must be strictly inside the box")

    def inside(self, p):
        return bool(np.all(np.abs(np.asarray(p)) < self.half_extents))

    # ---- (de)serialization

    def to_dict(self):
        return {
            "half_extents": self.half_extents.tolist(),
            "face_albedo": self.face_albedo.tolist(),
            "emitters": [
                {"face": e.face, "rect": list(e.rect), "radiance": list(e.radiance)}
                for e in self.emitters
            ],
            "ambient": self.ambient.tolist(),
            "camera_top": self.camera_top.tolist(),
            "texture": self.texture,
            "texture_cell": self.texture_cell,
            "texture_contrast": self.texture_contrast,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def parse_scene(text):
    """Parse a scene description: JSON, or ``key = value`` lines.

    Key-value grammar (``#`` starts a comment, values are whitespace separated)::

        half_extents = 2.0 1.3 1.6
        albedo.+y = 0.85 0.85 0.85        # per face, by name or index
        emitter = +y -0.6 0.4 -0.5 0.3 30 28 24   # face a0 a1 b0 b1 r g b (repeatable)
        ambient = 0.15 0.15 0.15
        camera_top = 0.25 0.2 -0.15
        texture = true
        texture_cell = 0.12
        texture_contrast = 0.6
        seed = 0
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        return BoxScene.from_dict(json.loads(stripped))
    defaults = BoxScene()
    kw = {"face_albedo": defaults.face_albedo.copy(), "emitters": []}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        vals = value.split()
        try:
            if key.startswith("albedo."):
                face = key.split(".", 1)[1]
                idx = FACE_NAMES.index(face) if face in FACE_NAMES else int(face)
                kw["face_albedo"][idx] = [float(x) for x in vals]
            elif key == "emitter":
                face = FACE_NAMES.index(vals[0]) if vals[0] in FACE_NAMES else int(vals[0])
                nums = [float(x) for x in vals[1:]]
                kw["emitters"].append(Emitter(face, tuple(nums[:4]), tuple(nums[4:7])))
            elif key in ("half_extents", "ambient", "camera_top"):
                kw[key] = [float(x) for x in vals]
            elif key == "texture":
                kw[key] = vals[0].lower() in ("1", "true", "yes", "on")
            elif key in ("texture_cell", "texture_contrast"):
                kw[key] = float(vals[0])
            elif key == "seed":
                kw[key] = int(vals[0])
            else:
                raise DomainError(f"line {lineno}: unknown key {key!r}")
        except (ValueError, IndexError) as exc:
            raise DomainError(f"line {lineno}: cannot parse {raw!r}") from exc
    return BoxScene(**kw)


def load_scene(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh.read())


# ------------------------------------------------------------------ geometry

def raycast_box(origin, dirs, scene):
    """Nearest face hit for rays from ``origin`` (strictly inside the box).

    ``dirs`` has shape ``(..., 3)``. Returns ``(distance, face, hit, normal)``
    with inward-facing normals.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    if not scene.inside(origin):
        raise DomainError("ray origin must be strictly inside the box")
    dirs = np.asarray(dirs, dtype=np.float64)
    he = scene.half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (np.sign(dirs) * he - origin) / dirs
    t = np.where(dirs == 0, np.inf, t)
    axis = np.argmin(t, axis=-1)
    dist = np.take_along_axis(t, axis[..., None], axis=-1)[..., 0]
    positive = np.take_along_axis(dirs, axis[..., None], axis=-1)[..., 0] > 0
    face = 2 * axis + positive
    hit = origin + dist[..., None] * dirs
    # snap the hit exactly onto its face plane
    np.put_along_axis(hit, axis[..., None], (np.where(positive, 1.0, -1.0) * he[axis])[..., None],
                      axis=-1)
    normal = np.zeros(dirs.shape)
    np.put_along_axis(normal, axis[..., None], np.where(positive, -1.0, 1.0)[..., None], axis=-1)
    return dist, face, hit, normal


def _cell_hash(face, i, j, seed):
    x = (face.astype(np.uint64) * np.uint64(73856093)
         ^ (i.astype(np.int64).astype(np.uint64) * np.uint64(19349663))
         ^ (j.astype(np.int64).astype(np.uint64) * np.uint64(83492791))
         ^ np.uint64(seed * 2654435761 % 2**32))
    x ^= x >> np.uint64(13)
    x *= np.uint64(0x5BD1E995)
    x ^= x >> np.uint64(15)
    return (x % np.uint64(1 << 20)).astype(np.float64) / float(1 << 20)


def albedo_at(scene, face, hit):
    """Per-point albedo, with the optional random-valued checkerboard."""
    alb = scene.face_albedo[face]
    if not scene.texture:
        return alb
    axis = face // 2
    # the two in-face coordinates of every hit point
    order = np.array([_other_axes(a) for a in range(3)])[axis]
    ca = np.take_along_axis(hit, order[..., :1], axis=-1)[..., 0]
    cb = np.take_along_axis(hit, order[..., 1:], axis=-1)[..., 0]
    i = np.floor(ca / scene.texture_cell)
    j = np.floor(cb / scene.texture_cell)
    mod = 1.0 - scene.texture_contrast * _cell_hash(face, i, j, scene.seed)
    return alb * mod[..., None]


# ------------------------------------------------------------------ irradiance

def patch_irradiance(points, normals, corners):
    """Irradiance factor ``int cos(theta) d(omega)`` of a planar polygon (Lambert's formula).

    Exact for polygons entirely in front of the receiver, which always holds
    between faces of a convex room. Multiply by the emitter radiance.
    """
    points = np.asarray(points, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    rel = corners[None, :, :] - points.reshape(-1, 1, 3)
    rel /= np.linalg.norm(rel, axis=-1, keepdims=True)
    total = np.zeros(len(rel))
    nn = normals.reshape(-1, 3)
    k = len(corners)
    for i in range(k):
        a = rel[:, i]
        b = rel[:, (i + 1) % k]
        cr = np.cross(a, b)
        ncr = np.linalg.norm(cr, axis=-1)
        ang = np.arctan2(ncr, np.sum(a * b, axis=-1))
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(ncr[:, None] > 0, cr / ncr[:, None], 0.0)
        total += ang * np.sum(g * nn, axis=-1)
    # receivers on the polygon's own plane get nothing (the formula degenerates there)
    plane_n = np.cross(corners[1] - corners[0], corners[2] - corners[0])
    plane_n /= np.linalg.norm(plane_n)
    height = np.abs((points.reshape(-1, 3) - corners[0]) @ plane_n)
    total = np.where(height > 1e-9, total, 0.0)
    return np.abs(total).reshape(points.shape[:-1]) / 2.0


def patch_irradiance_quadrature(point, normal, corners, max_solid_angle=1e-3, depth=0):
    """Adaptive midpoint quadrature of the same integral (independent check).

    Splits the rectangle until each sub-patch subtends less than
    ``max_solid_angle`` steradians, then uses the cosine/r^2 kernel at the
    sub-patch center.
    """
    point = np.asarray(point, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    c0, c1, _, c3 = corners
    ea = c1 - c0
    eb = c3 - c0
    area_n = np.cross(ea, eb)
    area = np.linalg.norm(area_n)
    emit_n = area_n / area
    center = c0 + 0.5 * (ea + eb)
    r = center - point
    dist = np.linalg.norm(r)
    cos_e = abs(np.dot(emit_n, r)) / dist
    omega = area * cos_e / dist**2
    if omega <= max_solid_angle or depth > 12:
        cos_x = max(np.dot(normal, r) / dist, 0.0)
        return cos_x * omega
    total = 0.0
    for sa in (0.0, 0.5):
        for sb in (0.0, 0.5):
            o = c0 + sa * ea + sb * eb
            sub = np.array([o, o + 0.5 * ea, o + 0.5 * (ea + eb), o + 0.5 * eb])
            total += patch_irradiance_quadrature(point, normal, sub, max_solid_angle, depth + 1)
    return total


def shading_at(scene, points, normals):
    """Ground-truth shading (ambient + direct patch irradiance) at world points."""
    points = np.asarray(points, dtype=np.float64)
    shade = np.broadcast_to(scene.ambient, points.shape).copy()
    for e in scene.emitters:
        f = patch_irradiance(points, normals, e.corners(scene.half_extents))
        shade += f[..., None] * np.asarray(e.radiance, dtype=np.float64)
    return shade


def emission_at(scene, face, hit):
    out = np.zeros(hit.shape)
    for e in scene.emitters:
        axis = e.face // 2
        a, b = _other_axes(axis)
        a0, a1, b0, b1 = e.rect
        on = ((face == e.face) & (hit[..., a] >= a0) & (hit[..., a] <= a1)
              & (hit[..., b] >= b0) & (hit[..., b] <= b1))
        out[on] += np.asarray(e.radiance, dtype=np.float64)
    return out


# ------------------------------------------------------------------ rendering

def _subpixel_dirs(h, w, su, sv):
    """Ray directions through sub-pixel offsets ``(su, sv)`` in [-0.5, 0.5)."""
    uu, vv = np.meshgrid(np.arange(w) + su, np.arange(h) + sv)
    theta = np.pi * (vv + 0.5) / h
    phi = 2.0 * np.pi * (uu + 0.5) / w
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), np.cos(theta), st * np.sin(phi)], axis=-1)


def render_ground_truth(scene, camera=None, dims=(512, 1024), supersample=1):
    """Exact maps seen from ``camera`` (world coordinates).

    Returns a dict with ``image``, ``depth``, ``normal``, ``reflectance``,
    ``shading``, ``emission``, ``face`` and ``points`` (hit points in the
    camera frame). With ``supersample > 1`` the radiometric maps are averaged
    over an ``s x s`` sub-pixel grid; ``shading`` is then the albedo-weighted
    average so that ``image == reflectance * shading + emission`` still holds
    exactly. Geometry always comes from the pixel-center ray.
    """
    camera = scene.camera_top if camera is None else np.asarray(camera, dtype=np.float64)
    h, w = check_dims(dims)
    dirs = direction_grid((h, w))
    dist, face, hit, normal = raycast_box(camera, dirs, scene)
    s = int(supersample)
    if s <= 1:
        alb = np.broadcast_to(albedo_at(scene, face, hit), (h, w, 3)).copy()
        shade = shading_at(scene, hit, normal)
        emis = emission_at(scene, face, hit)
    else:
        alb = np.zeros((h, w, 3))
        lit = np.zeros((h, w, 3))
        emis = np.zeros((h, w, 3))
        offsets = (np.arange(s) + 0.5) / s - 0.5
        for sv in offsets:
            for su in offsets:
                _, f_s, hit_s, n_s = raycast_box(camera, _subpixel_dirs(h, w, su, sv), scene)
                a_s = np.broadcast_to(albedo_at(scene, f_s, hit_s), (h, w, 3))
                alb += a_s
                lit += a_s * shading_at(scene, hit_s, n_s)
                emis += emission_at(scene, f_s, hit_s)
        alb /= s * s
        emis /= s * s
        lit /= s * s
        with np.errstate(invalid="ignore", divide="ignore"):
            shade = np.where(alb > 0, lit / np.where(alb > 0, alb, 1.0), shading_at(scene, hit, normal))
    image = alb * shade + emis
    return {
        "image": image,
        "depth": dist,
        "normal": normal,
        "reflectance": alb,
        "shading": shade,
        "emission": emis,
        "face": face,
        "points": hit - camera,
    }


def generate_stereo_pair(scene, rig, dims=(512, 1024), supersample=1):
    """Top and bottom renders, top-frame ground truth, and the true disparity.

    The bottom camera sits ``rig.baseline`` below the top one.
    """
    if not isinstance(rig, CameraRig):
        rig = CameraRig(float(rig))
    h, w = check_dims(dims)
    top_cam = scene.camera_top
    bottom_cam = top_cam + rig.bottom_offset
    if not scene.inside(bottom_cam):
        raise DomainError("bottom camera falls outside the box")
    top = render_ground_truth(scene, top_cam, dims, supersample)
    bottom = render_ground_truth(scene, bottom_cam, dims, supersample)
    theta_t = np.repeat(nadir_angle(np.arange(h), h)[:, None], w, axis=1)
    delta = disparity_from_depth(theta_t, top["depth"], rig.baseline)
    return {
        "top": top["image"],
        "bottom": bottom["image"],
        "truth": top,
        "bottom_truth": bottom,
        "disparity": DisparityMap(delta, np.ones((h, w), dtype=bool)),
    }


def monte_carlo_irradiance(points, normals, emitter, half_extents, samples=100_000, rng=None):
    """Area-sampled Monte Carlo estimate of emitter irradiance (radiance included).

    Independent of both the polygon formula and the illumination-map renderer.
    """
    rng = np.random.default_rng(rng)
    corners = emitter.corners(half_extents)
    ea = corners[1] - corners[0]
    eb = corners[3] - corners[0]
    en = np.cross(ea, eb)
    area = np.linalg.norm(en)
    en /= area
    radiance = np.asarray(emitter.radiance, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    out = np.zeros((len(points), 3))
    for i, (p, n) in enumerate(zip(points, normals)):
        ab = rng.random((samples, 2))
        y = corners[0] + ab[:, :1] * ea + ab[:, 1:] * eb
        r = y - p
        d2 = np.sum(r * r, axis=1)
        d = np.sqrt(d2)
        with np.errstate(invalid="ignore", divide="ignore"):
            kernel = np.maximum(r @ n, 0.0) * np.abs(r @ en) / (d2 * d2)
        out[i] = radiance * area * np.mean(np.nan_to_num(kernel, posinf=0.0))
    return out

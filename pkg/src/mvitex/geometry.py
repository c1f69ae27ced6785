"""Analytic ray casting for the supported scene types.

Conventions used throughout:

* Right-handed world coordinates, +Y up.
* A camera pose stores Euler angles ``(rx, ry, rz)``; the camera-to-world
  rotation is ``R = Ry(ry) @ Rx(rx) @ Rz(rz)``. The camera looks along its
  local -Z axis, +Y is up, and ``fov`` is the vertical field of view in
  degrees.
* Cube faces are numbered (+X, -X, +Y, -Y, +Z, -Z) = 0..5. Each face maps
  its two in-plane axes to uv in [0,1]^2 so that u_axis x v_axis equals the
  outward normal (right-handed chart). Sphere uv is equirectangular
  (azimuth/2pi, polar/pi). The ground plane of a mirrored scene maps its
  XZ extent to [0,1]^2.

All per-pixel routines are vectorized over numpy arrays; the scalar
``intersect`` entry point wraps the batched path with a one-element batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Parameter values below this are treated as "behind the ray origin".
T_EPS = 1e-9
# |d . n| below this at a reflector counts as a tangential graze -> miss.
GRAZE_EPS = 1e-9


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass
class CameraPose:
    """Pinhole camera: Euler rotation (radians), position, vertical fov (deg)."""

    rotation: np.ndarray
    translation: np.ndarray
    fov: float

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3,) or self.translation.shape != (3,):
            raise ValueError("rotation and translation must be 3-vectors")
        if not np.all(np.isfinite(self.rotation)):
            raise ValueError("rotation angles must be finite")
        if not (0.0 < self.fov < 180.0):
            raise ValueError(f"fov must lie in (0, 180), got {self.fov}")

    def rotation_matrix(self) -> np.ndarray:
        return euler_matrix(self.rotation)

    def forward(self) -> np.ndarray:
        return self.rotation_matrix() @ np.array([0.0, 0.0, -1.0])


@dataclass
class CylinderSpec:
    """Upright reflective cylinder standing on the ground plane."""

    center: tuple[float, float]
    radius: float
    height: float
    axis: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("cylinder radius and height must be positive")
        a = np.asarray(self.axis, dtype=np.float64)
        n = np.linalg.norm(a)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("cylinder axis must be unit length")

    def axis_vec(self) -> np.ndarray:
        return np.asarray(self.axis, dtype=np.float64)

    def base_point(self) -> np.ndarray:
        return np.array([self.center[0], 0.0, self.center[1]], dtype=np.float64)


@dataclass
class MirrorSpec:
    """Curved mirror: an arc of a vertical cylinder shell, reflective on both sides.

    ``facing_deg`` orients the arc center (azimuth around the axis, measured
    from +X toward +Z); the arc spans ``arc_degrees`` symmetrically around it.
    """

    center: tuple[float, float]
    curvature_radius: float
    arc_degrees: float
    height: float
    axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    facing_deg: float = 0.0

    def __post_init__(self):
        if self.curvature_radius <= 0 or self.height <= 0:
            raise ValueError("mirror curvature radius and height must be positive")
        if not (0.0 < self.arc_degrees <= 360.0):
            raise ValueError("arc_degrees must lie in (0, 360]")
        a = np.asarray(self.axis, dtype=np.float64)
        if abs(np.linalg.norm(a) - 1.0) > 1e-6:
            raise ValueError("mirror axis must be unit length")

    def axis_vec(self) -> np.ndarray:
        return np.asarray(self.axis, dtype=np.float64)

    def base_point(self) -> np.ndarray:
        return np.array([self.center[0], 0.0, self.center[1]], dtype=np.float64)


@dataclass
class SceneSpec:
    """Declarative scene description: what geometry the rays can hit."""

    kind: str  # "cube" | "sphere" | "reflective_plane"
    half_extent: float = 1.0  # cube half edge length
    radius: float = 1.0  # sphere radius
    plane_extent: float = 2.0  # ground plane half extent (mirrored scenes)
    reflectors: list = field(default_factory=list)  # CylinderSpec | MirrorSpec
    background_color: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("cube", "sphere", "reflective_plane"):
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.half_extent <= 0 or self.radius <= 0 or self.plane_extent <= 0:
            raise ValueError("scene dimensions must be positive")
        if len(self.reflectors) > 2:
            raise ValueError("at most 2 reflectors are supported")
        if self.kind != "reflective_plane" and self.reflectors:
            raise ValueError("reflectors only make sense on a reflective_plane scene")
        if not all(0.0 <= c <= 1.0 for c in self.background_color):
            raise ValueError("background_color channels must lie in [0,1]")

    @classmethod
    def cube(cls, half_extent: float = 1.0, **kw) -> "SceneSpec":
        return cls(kind="cube", half_extent=half_extent, **kw)

    @classmethod
    def sphere(cls, radius: float = 1.0, **kw) -> "SceneSpec":
        return cls(kind="sphere", radius=radius, **kw)

    @classmethod
    def reflective_plane(cls, plane_extent: float, reflectors: list, **kw) -> "SceneSpec":
        return cls(
            kind="reflective_plane",
            plane_extent=plane_extent,
            reflectors=list(reflectors),
            **kw,
        )

    def bounding_radius(self) -> float:
        """Radius of an origin-centered sphere containing all hittable geometry."""
        if self.kind == "cube":
            return math.sqrt(3.0) * self.half_extent
        if self.kind == "sphere":
            return self.radius
        r = math.sqrt(2.0) * self.plane_extent
        for ref in self.reflectors:
            cx, cz = ref.center
            body = ref.radius if isinstance(ref, CylinderSpec) else ref.curvature_radius
            r = max(r, math.hypot(cx, cz) + body + ref.height)
        return r

    def diagonal(self) -> float:
        return 2.0 * self.bounding_radius()


@dataclass
class ViewSpec:
    """A named viewpoint bound to a prompt slot."""

    id: int
    base_camera: CameraPose
    prompt_id: int
    reflective: bool = False


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(self.direction)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("ray direction must be unit length")


@dataclass
class SurfaceHit:
    surface_id: int
    uv: np.ndarray
    normal: np.ndarray
    ray_param: float
    bounce_count: int


@dataclass
class RayGrid:
    """Pinhole rays through every pixel center of a (height x width) image."""

    origins: np.ndarray  # (H, W, 3)
    directions: np.ndarray  # (H, W, 3), unit length


@dataclass
class UVQueryMap:
    """Per-pixel ray-cast result: which surface point each pixel sees.

    Misses carry hit=False; their other entries are zero filler and must not
    be read. ray_param for a bounced hit is the total path length from the
    camera, and normal is the final (textured) surface normal.
    """

    width: int
    height: int
    hit: np.ndarray  # (H, W) bool
    surface_id: np.ndarray  # (H, W) int32, -1 on miss
    uv: np.ndarray  # (H, W, 2) float64 in [0,1]^2 where hit
    normal: np.ndarray  # (H, W, 3) float64
    ray_param: np.ndarray  # (H, W) float64
    bounce_count: np.ndarray  # (H, W) uint8

    def hit_at(self, x: int, y: int):
        """SurfaceHit for pixel (x, y), or None on a miss."""
        if not self.hit[y, x]:
            return None
        return SurfaceHit(
            surface_id=int(self.surface_id[y, x]),
            uv=self.uv[y, x].copy(),
            normal=self.normal[y, x].copy(),
            ray_param=float(self.ray_param[y, x]),
            bounce_count=int(self.bounce_count[y, x]),
        )


# ---------------------------------------------------------------------------
# basic vector ops
# ---------------------------------------------------------------------------


def euler_matrix(rotation) -> np.ndarray:
    """Camera-to-world rotation from Euler angles: Ry(ry) @ Rx(rx) @ Rz(rz)."""
    rx, ry, rz = (float(a) for a in rotation)
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return my @ mx @ mz


def reflect(direction: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Mirror ``direction`` about ``normal``: d - 2 (d.n) n.

    Works on single vectors or (..., 3) stacks of unit vectors.
    """
    d = np.asarray(direction, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    dn = np.sum(d * n, axis=-1, keepdims=True)
    return d - 2.0 * dn * n


def generate_rays(camera: CameraPose, width: int, height: int) -> RayGrid:
    """Pinhole rays through pixel centers; the image center ray is camera forward."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    grid = _pixel_block_rays(camera, width, height, 0, 0, width, height)
    return RayGrid(origins=grid[0], directions=grid[1])


def _pixel_block_rays(camera, full_w, full_h, x0, y0, w, h):
    """Rays for the pixel rect [x0, x0+w) x [y0, y0+h) of a full_w x full_h image."""
    half_h = math.tan(math.radians(camera.fov) / 2.0)
    half_w = half_h * full_w / full_h
    xs = (np.arange(x0, x0 + w) + 0.5) / full_w * 2.0 - 1.0
    ys = 1.0 - (np.arange(y0, y0 + h) + 0.5) / full_h * 2.0
    px, py = np.meshgrid(xs * half_w, ys * half_h)
    d_cam = np.stack([px, py, -np.ones_like(px)], axis=-1)
    d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)
    rot = camera.rotation_matrix()
    dirs = d_cam @ rot.T
    origins = np.broadcast_to(camera.translation, dirs.shape).copy()
    return origins, dirs


# ---------------------------------------------------------------------------
# cube face charts
# ---------------------------------------------------------------------------

# face id -> (normal, u_axis, v_axis), with u_axis x v_axis = normal
CUBE_FACES = (
    (np.array([1.0, 0, 0]), np.array([0.0, 0, -1]), np.array([0.0, 1, 0])),
    (np.array([-1.0, 0, 0]), np.array([0.0, 0, 1]), np.array([0.0, 1, 0])),
    (np.array([0.0, 1, 0]), np.array([1.0, 0, 0]), np.array([0.0, 0, -1])),
    (np.array([0.0, -1, 0]), np.array([1.0, 0, 0]), np.array([0.0, 0, 1])),
    (np.array([0.0, 0, 1]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])),
    (np.array([0.0, 0, -1]), np.array([-1.0, 0, 0]), np.array([0.0, 1, 0])),
)


def cube_face_uv(face_id: int, points: np.ndarray, half_extent: float) -> np.ndarray:
    """uv chart of a cube face for (..., 3) points lying on that face."""
    _, u_axis, v_axis = CUBE_FACES[face_id]
    u = (points @ u_axis / half_extent + 1.0) / 2.0
    v = (points @ v_axis / half_extent + 1.0) / 2.0
    return np.clip(np.stack([u, v], axis=-1), 0.0, 1.0)


def cube_face_point(face_id: int, uv: np.ndarray, half_extent: float) -> np.ndarray:
    """Inverse chart: uv in [0,1]^2 back to the 3D point on the face."""
    normal, u_axis, v_axis = CUBE_FACES[face_id]
    uv = np.asarray(uv, dtype=np.float64)
    a = (uv[..., 0] * 2.0 - 1.0) * half_extent
    b = (uv[..., 1] * 2.0 - 1.0) * half_extent
    return (
        normal * half_extent
        + a[..., None] * u_axis
        + b[..., None] * v_axis
    )


def sphere_uv(points: np.ndarray, radius: float) -> np.ndarray:
    """Equirectangular chart: u = azimuth/2pi (seam at -X), v = polar/pi from +Y."""
    p = np.asarray(points, dtype=np.float64) / radius
    u = (np.arctan2(p[..., 2], p[..., 0]) + math.pi) / (2.0 * math.pi)
    v = np.arccos(np.clip(p[..., 1], -1.0, 1.0)) / math.pi
    return np.clip(np.stack([u, v], axis=-1), 0.0, 1.0)


def plane_uv(points: np.ndarray, extent: float) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    u = (p[..., 0] / extent + 1.0) / 2.0
    v = (p[..., 2] / extent + 1.0) / 2.0
    return np.clip(np.stack([u, v], axis=-1), 0.0, 1.0)


# ---------------------------------------------------------------------------
# intersection
# ---------------------------------------------------------------------------


def _trace_cube(scene, origins, dirs):
    h = scene.half_extent
    flat_o = origins.reshape(-1, 3)
    flat_d = dirs.reshape(-1, 3)
    n = flat_o.shape[0]
    best_t = np.full(n, np.inf)
    best_face = np.full(n, -1, dtype=np.int32)
    for face_id, (normal, _, _) in enumerate(CUBE_FACES):
        dn = flat_d @ normal
        on = flat_o @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (h - on) / dn
        t = np.where(np.isfinite(t), t, -1.0)
        p = flat_o + t[:, None] * flat_d
        # inside the face rectangle along the two in-plane axes
        axis = face_id // 2
        others = [i for i in range(3) if i != axis]
        inside = (
            (np.abs(p[:, others[0]]) <= h + 1e-12)
            & (np.abs(p[:, others[1]]) <= h + 1e-12)
        )
        valid = (dn != 0) & (t > T_EPS) & inside & (t < best_t)
        best_t = np.where(valid, t, best_t)
        best_face = np.where(valid, face_id, best_face)

    hit = best_face >= 0
    uv = np.zeros((n, 2))
    normal_out = np.zeros((n, 3))
    points = flat_o + np.where(hit, best_t, 0.0)[:, None] * flat_d
    for face_id, (normal, _, _) in enumerate(CUBE_FACES):
        sel = hit & (best_face == face_id)
        if not np.any(sel):
            continue
        uv[sel] = cube_face_uv(face_id, points[sel], h)
        normal_out[sel] = normal
    return _pack_trace(origins.shape[:-1], hit, best_face, uv, normal_out, best_t)


def _trace_sphere(scene, origins, dirs):
    r = scene.radius
    flat_o = origins.reshape(-1, 3)
    flat_d = dirs.reshape(-1, 3)
    n = flat_o.shape[0]
    b = np.sum(flat_o * flat_d, axis=-1)
    c = np.sum(flat_o * flat_o, axis=-1) - r * r
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near > T_EPS, t_near, t_far)
    hit &= t > T_EPS
    points = flat_o + t[:, None] * flat_d
    uv = np.zeros((n, 2))
    normal = np.zeros((n, 3))
    if np.any(hit):
        uv[hit] = sphere_uv(points[hit], r)
        normal[hit] = points[hit] / r
    face = np.where(hit, 0, -1).astype(np.int32)
    return _pack_trace(origins.shape[:-1], hit, face, uv, normal, t)


def _cylinder_lateral_roots(base, axis, radius, flat_o, flat_d):
    """Both parameter roots of |perp(o + t d - base)| = radius (inf when none)."""
    m = flat_o - base
    m_ax = m @ axis
    d_ax = flat_d @ axis
    m_perp = m - m_ax[:, None] * axis
    d_perp = flat_d - d_ax[:, None] * axis
    a = np.sum(d_perp * d_perp, axis=-1)
    b = np.sum(m_perp * d_perp, axis=-1)
    c = np.sum(m_perp * m_perp, axis=-1) - radius * radius
    disc = b * b - a * c
    ok = (disc >= 0.0) & (a > 1e-18)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(ok, a, 1.0)
    t0 = np.where(ok, (-b - sq) / safe_a, -1.0)
    t1 = np.where(ok, (-b + sq) / safe_a, -1.0)
    return t0, t1


def _axial_coord(base, axis, flat_o, flat_d, t):
    p = flat_o + t[:, None] * flat_d
    return (p - base) @ axis


def _mirror_arc_ok(spec: MirrorSpec, base, axis, points):
    """Is the radial direction of each point within the mirror's arc span?"""
    rel = points - base
    rel_perp = rel - (rel @ axis)[:, None] * axis
    az = np.degrees(np.arctan2(rel_perp[:, 2], rel_perp[:, 0]))
    delta = (az - spec.facing_deg + 180.0) % 360.0 - 180.0
    return np.abs(delta) <= spec.arc_degrees / 2.0 + 1e-12


def _trace_reflective(scene, origins, dirs):
    extent = scene.plane_extent
    flat_o = origins.reshape(-1, 3)
    flat_d = dirs.reshape(-1, 3)
    n = flat_o.shape[0]

    # Event table: smallest positive parameter wins.
    #   kind 0 = textured plane, 1 = reflector surface, 2 = blocking cap
    best_t = np.full(n, np.inf)
    best_kind = np.full(n, -1, dtype=np.int32)
    best_normal = np.zeros((n, 3))

    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = -flat_o[:, 1] / flat_d[:, 1]
    t_plane = np.where(np.isfinite(t_plane), t_plane, -1.0)
    p = flat_o + t_plane[:, None] * flat_d
    ok = (
        (flat_d[:, 1] != 0)
        & (t_plane > T_EPS)
        & (np.abs(p[:, 0]) <= extent)
        & (np.abs(p[:, 2]) <= extent)
    )
    best_t = np.where(ok, t_plane, best_t)
    best_kind = np.where(ok, 0, best_kind)

    for ref in scene.reflectors:
        base = ref.base_point()
        axis = ref.axis_vec()
        if isinstance(ref, CylinderSpec):
            t0, t1 = _cylinder_lateral_roots(base, axis, ref.radius, flat_o, flat_d)
            # solid body: only the near lateral root is a visible mirror surface
            ax0 = _axial_coord(base, axis, flat_o, flat_d, t0)
            lat_ok = (t0 > T_EPS) & np.isfinite(t0) & (ax0 >= 0.0) & (ax0 <= ref.height)
            pts = flat_o + t0[:, None] * flat_d
            rel = pts - base
            radial = rel - (rel @ axis)[:, None] * axis
            nrm = np.zeros_like(radial)
            nz = np.linalg.norm(radial, axis=-1)
            good = nz > 0
            nrm[good] = radial[good] / nz[good, None]
            graze = np.abs(np.sum(flat_d * nrm, axis=-1)) < GRAZE_EPS
            lat_ok &= ~graze
            upd = lat_ok & (t0 < best_t)
            best_t = np.where(upd, t0, best_t)
            best_kind = np.where(upd, 1, best_kind)
            best_normal[upd] = nrm[upd]

            # top cap blocks rays but is neither textured nor reflective
            d_ax = flat_d @ axis
            m_ax = (flat_o - base) @ axis
            with np.errstate(divide="ignore", invalid="ignore"):
                t_cap = (ref.height - m_ax) / d_ax
            t_cap = np.where(np.isfinite(t_cap), t_cap, -1.0)
            cap_p = flat_o + t_cap[:, None] * flat_d
            cap_rel = cap_p - (base + ref.height * axis)
            cap_perp = cap_rel - (cap_rel @ axis)[:, None] * axis
            cap_ok = (
                (d_ax != 0)
                & (t_cap > T_EPS)
                & (np.sum(cap_perp * cap_perp, axis=-1) <= ref.radius**2)
            )
            upd = cap_ok & (t_cap < best_t)
            best_t = np.where(upd, t_cap, best_t)
            best_kind = np.where(upd, 2, best_kind)
        else:
            t0, t1 = _cylinder_lateral_roots(
                base, axis, ref.curvature_radius, flat_o, flat_d
            )
            for t_cand in (t0, t1):
                ax = _axial_coord(base, axis, flat_o, flat_d, t_cand)
                okc = (
                    (t_cand > T_EPS)
                    & np.isfinite(t_cand)
                    & (ax >= 0.0)
                    & (ax <= ref.height)
                )
                pts = flat_o + t_cand[:, None] * flat_d
                okc &= _mirror_arc_ok(ref, base, axis, pts)
                rel = pts - base
                radial = rel - (rel @ axis)[:, None] * axis
                nrm = np.zeros_like(radial)
                nz = np.linalg.norm(radial, axis=-1)
                good = nz > 0
                nrm[good] = radial[good] / nz[good, None]
                dn = np.sum(flat_d * nrm, axis=-1)
                okc &= np.abs(dn) >= GRAZE_EPS
                # flip so the normal opposes the incoming ray (mirror works
                # from either side of the shell)
                nrm = np.where(dn[:, None] > 0, -nrm, nrm)
                upd = okc & (t_cand < best_t)
                best_t = np.where(upd, t_cand, best_t)
                best_kind = np.where(upd, 1, best_kind)
                best_normal[upd] = nrm[upd]

    hit = np.zeros(n, dtype=bool)
    face = np.full(n, -1, dtype=np.int32)
    uv = np.zeros((n, 2))
    normal = np.zeros((n, 3))
    t_out = np.zeros(n)
    bounce = np.zeros(n, dtype=np.uint8)

    direct = best_kind == 0
    if np.any(direct):
        pd = flat_o[direct] + best_t[direct, None] * flat_d[direct]
        hit[direct] = True
        face[direct] = 0
        uv[direct] = plane_uv(pd, extent)
        normal[direct] = np.array([0.0, 1.0, 0.0])
        t_out[direct] = best_t[direct]

    refl = best_kind == 1
    if np.any(refl):
        p1 = flat_o[refl] + best_t[refl, None] * flat_d[refl]
        d2 = reflect(flat_d[refl], best_normal[refl])
        with np.errstate(divide="ignore", invalid="ignore"):
            t2 = -p1[:, 1] / d2[:, 1]
        t2 = np.where(np.isfinite(t2), t2, -1.0)
        p2 = p1 + t2[:, None] * d2
        ok2 = (
            (d2[:, 1] != 0)
            & (t2 > T_EPS)
            & (np.abs(p2[:, 0]) <= extent)
            & (np.abs(p2[:, 2]) <= extent)
        )
        idx = np.flatnonzero(refl)[ok2]
        hit[idx] = True
        face[idx] = 0
        uv[idx] = plane_uv(p2[ok2], extent)
        normal[idx] = np.array([0.0, 1.0, 0.0])
        t_out[idx] = best_t[idx] + t2[ok2]
        bounce[idx] = 1

    return _pack_trace(origins.shape[:-1], hit, face, uv, normal, t_out, bounce)


def _pack_trace(shape, hit, face, uv, normal, t, bounce=None):
    n = hit.size
    if bounce is None:
        bounce = np.zeros(n, dtype=np.uint8)
    t = np.where(hit, t, 0.0)
    face = np.where(hit, face, -1).astype(np.int32)
    return {
        "hit": hit.reshape(shape),
        "surface_id": face.reshape(shape),
        "uv": np.where(hit[:, None], uv, 0.0).reshape(shape + (2,)),
        "normal": np.where(hit[:, None], normal, 0.0).reshape(shape + (3,)),
        "ray_param": t.reshape(shape),
        "bounce_count": bounce.reshape(shape),
    }


_TRACERS = {
    "cube": _trace_cube,
    "sphere": _trace_sphere,
    "reflective_plane": _trace_reflective,
}


def trace_rays(scene: SceneSpec, origins: np.ndarray, dirs: np.ndarray) -> dict:
    """Vectorized nearest-hit trace; returns the UVQueryMap field arrays."""
    return _TRACERS[scene.kind](scene, origins, dirs)


def intersect(scene: SceneSpec, ray: Ray):
    """Nearest positive-parameter hit of a single ray, or None."""
    out = trace_rays(scene, ray.origin[None, :], ray.direction[None, :])
    if not out["hit"][0]:
        return None
    return SurfaceHit(
        surface_id=int(out["surface_id"][0]),
        uv=out["uv"][0],
        normal=out["normal"][0],
        ray_param=float(out["ray_param"][0]),
        bounce_count=int(out["bounce_count"][0]),
    )


def build_uv_query_map(
    scene: SceneSpec, camera: CameraPose, width: int, height: int
) -> UVQueryMap:
    """Trace every pixel of a width x height render from ``camera``."""
    return build_uv_query_block(scene, camera, width, height, 0, 0, width, height)


def build_uv_query_block(
    scene, camera, full_w, full_h, x0, y0, w, h
) -> UVQueryMap:
    """Trace only the pixel rect [x0,x0+w) x [y0,y0+h) of a full_w x full_h frame.

    Pixel centers match the corresponding region of the full map exactly, so
    patch-only rendering is bit-identical to cropping a full render.
    """
    origins, dirs = _pixel_block_rays(camera, full_w, full_h, x0, y0, w, h)
    out = trace_rays(scene, origins, dirs)
    return UVQueryMap(width=w, height=h, **out)


# ---------------------------------------------------------------------------
# canonical view sets
# ---------------------------------------------------------------------------

PRESET_FOV_DEG = 40.0
PRESET_DISTANCE_DIAGONALS = 3.0


def look_at_camera(position, fov: float = PRESET_FOV_DEG) -> CameraPose:
    """Camera at ``position`` looking at the origin with zero roll."""
    p = np.asarray(position, dtype=np.float64)
    f = -p / np.linalg.norm(p)
    pitch = math.asin(np.clip(f[1], -1.0, 1.0))
    yaw = math.atan2(-f[0], -f[2])
    return CameraPose(rotation=np.array([pitch, yaw, 0.0]), translation=p, fov=fov)


def orbit_camera(
    azimuth_deg: float, elevation_deg: float, distance: float, fov: float = PRESET_FOV_DEG
) -> CameraPose:
    """Orbit pose: azimuth around +Y from the +Z axis, elevation above the XZ plane."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    pos = distance * np.array(
        [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
    )
    return look_at_camera(pos, fov=fov)


def cube_corner_views(n_views: int, scene: SceneSpec | None = None) -> list[ViewSpec]:
    """Canonical cube view sets.

    n_views=3: three cameras around the (+,+,+) corner, one per corner edge,
    so each camera sees two adjacent faces and each corner face appears in
    exactly two views. n_views=8: one camera down each corner diagonal
    +-(1,+-1,+-1)/sqrt(3), each seeing three faces; every face appears in four
    views and opposite corners look in antiparallel directions.
    """
    if n_views not in (3, 8):
        raise ValueError("cube corner presets support 3 or 8 views")
    scene = scene or SceneSpec.cube()
    dist = PRESET_DISTANCE_DIAGONALS * scene.diagonal()
    if n_views == 3:
        corners = [(1, 1, 0), (0, 1, 1), (1, 0, 1)]
    else:
        corners = [
            (sx, sy, sz)
            for sx in (1, -1)
            for sy in (1, -1)
            for sz in (1, -1)
        ]
    views = []
    for i, c in enumerate(corners):
        d = np.asarray(c, dtype=np.float64)
        d /= np.linalg.norm(d)
        views.append(
            ViewSpec(id=i, base_camera=look_at_camera(d * dist), prompt_id=i)
        )
    return views


def sphere_views(
    n_views: int, separation: float = 90.0, scene: SceneSpec | None = None
) -> list[ViewSpec]:
    """Equatorial cameras ``separation`` degrees apart; 90 is the orthogonal default."""
    if n_views < 2:
        raise ValueError("need at least 2 views")
    if not (0.0 < separation <= 120.0):
        raise ValueError("separation must lie in (0, 120] degrees")
    scene = scene or SceneSpec.sphere()
    dist = PRESET_DISTANCE_DIAGONALS * scene.diagonal()
    return [
        ViewSpec(
            id=i,
            base_camera=orbit_camera(i * separation, 0.0, dist),
            prompt_id=i,
        )
        for i in range(n_views)
    ]
